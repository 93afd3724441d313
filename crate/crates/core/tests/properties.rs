use chrono::{Duration, NaiveDate};
use proptest::prelude::*;

use dyngamma::corridor::{joint_predictive_logpdf, run_filter_mv};
use dyngamma::dataio::{build_corridor, Schedule, SensorRecord, SpeedRecord};
use dyngamma::dist::{f_cdf, f_quantile, gamma_cdf, gamma_quantile, reg_inc_beta, FLaw, GammaLaw};
use dyngamma::env_filter::{evolve_state, update_state};
use dyngamma::evalkit::{coverage_and_width, pit_series, CorridorForecaster};
use dyngamma::inference::renormalize;
use dyngamma::route::{route_cdf, route_quantile};
use dyngamma::{CorridorModel, GammaState, HyperParams, ObservationRecord, ObservationSeries, RoutePredictive};

fn positive() -> impl Strategy<Value = f64> {
    (-3.0f64..3.0).prop_map(f64::exp)
}

fn rows(m: usize, t: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.05f64..20.0, m), t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn posterior_stays_positive_and_conjugate(a in positive(), b in positive(), alpha in 0.2f64..10.0, gamma in 0.05f64..0.999, y in positive()) {
        let hyper = HyperParams::new(alpha, gamma).unwrap();
        let prior = evolve_state(&GammaState::new(a, b).unwrap(), &hyper);
        let post = update_state(&prior, &hyper, &ObservationRecord::new(1, vec![y])).unwrap();
        prop_assert!(post.a > 0.0 && post.b > 0.0 && post.a.is_finite() && post.b.is_finite());
        prop_assert!((post.a - (gamma * a + alpha)).abs() <= 1e-12 * post.a);
        prop_assert!((post.b - (gamma * b + y)).abs() <= 1e-12 * post.b);
    }

    #[test]
    fn discounting_keeps_the_mean(a in positive(), b in positive(), gamma in 0.05f64..0.999) {
        let hyper = HyperParams::new(1.0, gamma).unwrap();
        let s = GammaState::new(a, b).unwrap();
        let e = evolve_state(&s, &hyper);
        prop_assert!((e.mean() - s.mean()).abs() <= 1e-12 * s.mean());
        prop_assert!(e.variance() >= s.variance());
    }

    // Rescaling every travel time and the initial rate by the same factor
    // leaves the PIT sequence unchanged.
    #[test]
    fn pit_is_scale_invariant(data in rows(3, 12), k in positive(), alpha in 0.5f64..4.0, gamma in 0.3f64..0.99) {
        let hyper = HyperParams::new(alpha, gamma).unwrap();
        let model = CorridorModel::from_lambdas(vec![0.6, 1.0, 1.4]).unwrap();
        let init = GammaState::new(3.0, 2.0).unwrap();
        let scaled_init = GammaState::new(3.0, 2.0 * k).unwrap();
        let series = ObservationSeries::from_rows(data.clone()).unwrap();
        let scaled = ObservationSeries::from_rows(data.iter().map(|r| r.iter().map(|v| v * k).collect()).collect()).unwrap();
        let p1 = pit_series(&mut CorridorForecaster::new(hyper.clone(), model.clone(), init), &series, 0).unwrap();
        let p2 = pit_series(&mut CorridorForecaster::new(hyper, model, scaled_init), &scaled, 0).unwrap();
        for (x, y) in p1.iter().zip(&p2) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    // The joint density picks up the Jacobian k^-m under y -> k y, b -> k b.
    #[test]
    fn joint_density_scale_jacobian(y in prop::collection::vec(0.05f64..20.0, 4), k in positive(), a in 0.5f64..20.0, b in positive()) {
        let hyper = HyperParams::new(1.7, 0.8).unwrap();
        let model = CorridorModel::from_lambdas(vec![0.5, 0.9, 1.1, 1.5]).unwrap();
        let base = joint_predictive_logpdf(&GammaState::new(a, b).unwrap(), &hyper, &model, &y, &[]).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| v * k).collect();
        let scaled = joint_predictive_logpdf(&GammaState::new(a, b * k).unwrap(), &hyper, &model, &ys, &[]).unwrap();
        prop_assert!((scaled - (base - 4.0 * k.ln())).abs() < 1e-8 * (1.0 + base.abs()));
    }

    #[test]
    fn renormalization_keeps_products(lambdas in prop::collection::vec(positive(), 1..8), eta in prop::collection::vec(positive(), 1..10)) {
        let (mut l, mut e) = (lambdas.clone(), eta.clone());
        let k = renormalize(&mut l, &mut e);
        prop_assert!(k > 0.0);
        prop_assert!((l.iter().sum::<f64>() / l.len() as f64 - 1.0).abs() < 1e-12);
        for (j, lj) in l.iter().enumerate() {
            for (t, et) in e.iter().enumerate() {
                let before = lambdas[j] * eta[t];
                prop_assert!((lj * et - before).abs() <= 1e-12 * before);
            }
        }
    }

    #[test]
    fn coverage_grows_with_level(data in rows(2, 40), lo in 0.05f64..0.5, step in 0.05f64..0.45) {
        let hyper = HyperParams::new(1.0, 0.8).unwrap();
        let model = CorridorModel::homogeneous(2).unwrap();
        let init = GammaState::new(2.5, 2.5).unwrap();
        let series = ObservationSeries::from_rows(data).unwrap();
        let run = |level: f64| {
            coverage_and_width(&mut CorridorForecaster::new(hyper.clone(), model.clone(), init), &series, level, 5).unwrap()
        };
        let (c1, w1) = run(lo);
        let (c2, w2) = run(lo + step);
        prop_assert!(c2 >= c1);
        prop_assert!(w2 >= w1);
    }

    #[test]
    fn route_quantile_inverts_cdf(alpha_star in 0.3f64..40.0, c in positive(), a in 0.6f64..40.0, b in positive(), q in 0.001f64..0.999) {
        let rp = RoutePredictive::new(alpha_star, c, a, b).unwrap();
        let x = route_quantile(&rp, q).unwrap();
        prop_assert!(x > 0.0);
        prop_assert!((route_cdf(&rp, x).unwrap() - q).abs() < 1e-8);
    }

    #[test]
    fn f_and_gamma_quantiles_invert(d1 in 0.2f64..60.0, d2 in 0.2f64..60.0, shape in 0.1f64..50.0, rate in positive(), q in 0.001f64..0.999) {
        let f = FLaw::new(d1, d2).unwrap();
        prop_assert!((f_cdf(&f, f_quantile(&f, q).unwrap()).unwrap() - q).abs() < 1e-8);
        let g = GammaLaw::new(shape, rate).unwrap();
        prop_assert!((gamma_cdf(&g, gamma_quantile(&g, q).unwrap()).unwrap() - q).abs() < 1e-8);
    }

    #[test]
    fn incomplete_beta_reflection(a in 0.1f64..30.0, b in 0.1f64..30.0, x in 0.0f64..=1.0) {
        let lhs = reg_inc_beta(a, b, x).unwrap();
        let rhs = 1.0 - reg_inc_beta(b, a, 1.0 - x).unwrap();
        prop_assert!((0.0..=1.0).contains(&lhs));
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    // The multivariate filter only sees the weighted sum, so permuting
    // segments together with their rates changes nothing.
    #[test]
    fn filter_is_segment_permutation_invariant(data in rows(3, 8), perm in Just([2usize, 0, 1])) {
        let hyper = HyperParams::new(1.2, 0.75).unwrap();
        let lambdas = [0.4, 1.0, 1.6];
        let init = GammaState::new(2.5, 2.0).unwrap();
        let model = CorridorModel::from_lambdas(lambdas.to_vec()).unwrap();
        let pmodel = CorridorModel::from_lambdas(perm.iter().map(|&j| lambdas[j]).collect()).unwrap();
        let s1 = ObservationSeries::from_rows(data.clone()).unwrap();
        let s2 = ObservationSeries::from_rows(data.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect()).unwrap();
        let f1 = run_filter_mv(&s1, &hyper, &model, &init).unwrap();
        let f2 = run_filter_mv(&s2, &hyper, &pmodel, &init).unwrap();
        for (x, y) in f1.iter().zip(&f2) {
            prop_assert!((x.posterior.b - y.posterior.b).abs() <= 1e-12 * x.posterior.b);
            prop_assert!((x.log_pred - y.log_pred).abs() <= 1e-9 * (1.0 + x.log_pred.abs()));
        }
    }
}

fn corridor_fixture() -> (Vec<SensorRecord>, Vec<SpeedRecord>) {
    let sensors: Vec<SensorRecord> = (0..3)
        .map(|i| SensorRecord {
            sensor_id: format!("s{i}"),
            lat: 41.80 + 0.005 * i as f64,
            lon: -87.70,
            order: i,
        })
        .collect();
    let start = NaiveDate::from_ymd_opt(2019, 1, 2).unwrap().and_hms_opt(14, 0, 0).unwrap();
    let mut speeds = Vec::new();
    for week in 0..6 {
        for h in 0..7 {
            let ts = start + Duration::weeks(week) + Duration::hours(h);
            for (i, s) in sensors.iter().enumerate() {
                let missing = week == 2 && h == 3 && i == 1;
                speeds.push(SpeedRecord {
                    timestamp: ts + Duration::minutes(10 * i as i64),
                    sensor_id: s.sensor_id.clone(),
                    speed: (!missing).then_some(20.0 + (week * 7 + h) as f64 + i as f64),
                });
            }
        }
    }
    (sensors, speeds)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn corridor_build_ignores_input_order(seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let (sensors, speeds) = corridor_fixture();
        let schedule = Schedule::weekday_afternoons(chrono::Weekday::Wed, 2019);
        let reference = build_corridor(&sensors, &speeds, &schedule, None).unwrap();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let (mut s2, mut sp2) = (sensors.clone(), speeds.clone());
        s2.shuffle(&mut rng);
        sp2.shuffle(&mut rng);
        let shuffled = build_corridor(&s2, &sp2, &schedule, None).unwrap();
        prop_assert_eq!(&reference.sensor_ids, &shuffled.sensor_ids);
        prop_assert_eq!(&reference.series, &shuffled.series);
        prop_assert_eq!(reference.report, shuffled.report);
        prop_assert_eq!(reference.report.complete, 41);
        prop_assert_eq!(reference.report.slots, 52 * 7);
    }
}
