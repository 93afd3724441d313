#![no_main]
use chrono::Weekday;
use dyngamma::dataio::{build_corridor, read_sensors, read_speeds, Schedule};
use libfuzzer_sys::fuzz_target;

// Input is a sensors file and a speeds file separated by a NUL byte.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else { return };
    let (Ok(sensors), Ok(speeds)) = (read_sensors(&data[..split]), read_speeds(&data[split + 1..])) else { return };
    let schedule = Schedule::weekday_afternoons(Weekday::Wed, 2019);
    if let Ok(built) = build_corridor(&sensors, &speeds, &schedule, None) {
        assert_eq!(built.series.segment_ids.len(), built.distances.len());
        for r in &built.series.records {
            assert!(r.y.iter().all(|v| v.is_finite() && *v > 0.0));
        }
    }
});
