#![no_main]
use dyngamma::dataio::{read_observations, write_observations};
use libfuzzer_sys::fuzz_target;

// Anything accepted must survive a write/read cycle with the same shape.
fuzz_target!(|data: &[u8]| {
    let Ok(series) = read_observations(data) else { return };
    let mut buf = Vec::new();
    if write_observations(&series, &mut buf).is_err() {
        return;
    }
    let back = read_observations(buf.as_slice()).expect("written observations must parse");
    assert_eq!(back.len(), series.len());
    assert_eq!(back.segment_ids, series.segment_ids);
});
