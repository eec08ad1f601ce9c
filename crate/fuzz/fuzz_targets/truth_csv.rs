#![no_main]

use libfuzzer_sys::fuzz_target;
use subpop_core::synthgen::{parse_truth_csv, truth_to_csv_string};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_truth_csv(text) {
        assert_eq!(parse_truth_csv(&truth_to_csv_string(&rows)).expect("round trip"), rows);
    }
});
