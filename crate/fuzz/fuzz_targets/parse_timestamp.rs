#![no_main]
use chrono::Timelike;
use dyngamma::dataio::{parse_timestamp, TIMESTAMP_FORMAT};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(ts) = parse_timestamp(s) {
        assert_eq!(ts.minute(), 0);
        let again = parse_timestamp(&ts.format(TIMESTAMP_FORMAT).to_string()).unwrap();
        assert_eq!(again, ts);
    }
});
