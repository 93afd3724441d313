#![no_main]
use chrono::Timelike;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(speeds) = dyngamma::dataio::read_speeds(data) {
        for s in &speeds {
            assert_eq!(s.timestamp.minute(), 0);
            assert_eq!(s.timestamp.second(), 0);
        }
    }
});
