#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(sensors) = dyngamma::dataio::read_sensors(data) {
        for s in &sensors {
            assert!(s.lat.is_finite() && s.lon.is_finite());
        }
    }
});
