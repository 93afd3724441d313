use std::fs;
use std::path::PathBuf;

use chrono::Weekday;
use dyngamma::dataio::{haversine_miles, load_corridor_dir, read_observations, simulate_corridor, write_observations, Schedule};
use dyngamma::evalkit::{grid_search, GridMode};
use dyngamma::{seeded_rng, CorridorModel, GammaState, HyperParams};

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dyngamma-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn csv_directory_to_travel_times() {
    let dir = scratch_dir("ingest");
    fs::write(
        dir.join("sensors.csv"),
        "sensor_id,lat,lon,order\nb,41.810,-87.70,2\na,41.800,-87.70,1\nc,41.825,-87.70,3\n",
    )
    .unwrap();
    let mut speeds = String::from("timestamp,sensor_id,speed_mph\n");
    // Two Wednesdays at 14:00 and 15:00; one reading missing on the second day.
    for (day, hour) in [("2019-01-02", 14), ("2019-01-02", 15), ("2019-01-09", 14)] {
        for (id, v) in [("a", 30.0), ("b", 20.0), ("c", 40.0)] {
            if day == "2019-01-09" && id == "b" {
                speeds.push_str(&format!("{day}T{hour}:05:00,{id},\n"));
                continue;
            }
            speeds.push_str(&format!("{day}T{hour}:05:00,{id},{v}\n{day}T{hour}:35:00,{id},{}\n", v + 2.0));
        }
    }
    // Thursday reading, outside the schedule.
    speeds.push_str("2019-01-03T14:00:00,a,50\n");
    fs::write(dir.join("speeds.csv"), speeds).unwrap();

    let built = load_corridor_dir(&dir, &Schedule::weekday_afternoons(Weekday::Wed, 2019)).unwrap();
    assert_eq!(built.sensor_ids, vec!["a", "b", "c"]);
    assert_eq!(built.report.complete, 2);
    assert_eq!(built.report.slots, 52 * 7);
    assert_eq!(built.report.ignored_readings, 1);
    let d_ab = haversine_miles(41.800, -87.70, 41.810, -87.70);
    assert!((built.distances[0] - d_ab).abs() < 1e-12);
    assert_eq!(built.distances[2], built.distances[1]);
    // Averaged speed 31 mph on segment a.
    assert!((built.series.records[0].y[0] - 60.0 * d_ab / 31.0).abs() < 1e-12);

    fs::write(dir.join("distances.csv"), "sensor_id,distance_mi\na,0.5\nb,0.25\nc,1.0\n").unwrap();
    let overridden = load_corridor_dir(&dir, &Schedule::weekday_afternoons(Weekday::Wed, 2019)).unwrap();
    assert_eq!(overridden.distances, vec![0.5, 0.25, 1.0]);
    assert!((overridden.series.records[1].y[2] - 60.0 / 41.0).abs() < 1e-12);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn simulated_series_round_trips_and_grid_prefers_truth_region() {
    let hyper = HyperParams::new(2.0, 0.8).unwrap();
    let model = CorridorModel::from_lambdas(vec![0.6, 0.9, 1.1, 1.4]).unwrap();
    let init = GammaState::new(2.5, 2.5).unwrap();
    let sim = simulate_corridor(&hyper, &model, 600, &init, &mut seeded_rng(9)).unwrap();

    let mut buf = Vec::new();
    write_observations(&sim.series, &mut buf).unwrap();
    let back = read_observations(buf.as_slice()).unwrap();
    assert_eq!(back.len(), sim.series.len());
    for (r, s) in back.records.iter().zip(&sim.series.records) {
        for (a, b) in r.y.iter().zip(&s.y) {
            assert!((a - b).abs() <= 5e-7);
        }
    }

    let res = grid_search(&sim.series, &[0.5, 2.0, 10.0], &[0.5, 0.8, 0.95], GridMode::MultivariateRoute, 30).unwrap();
    assert_eq!(res.cells.len(), 9);
    assert!(res.failures.is_empty());
    let truth = res.cells.iter().find(|c| c.alpha == 2.0 && c.gamma == 0.8).unwrap();
    assert!(truth.report.ks_p > 0.01, "KS p at truth {}", truth.report.ks_p);
    let best = res.selected_cell().unwrap();
    assert!(best.report.ks_p >= truth.report.ks_p);
}
