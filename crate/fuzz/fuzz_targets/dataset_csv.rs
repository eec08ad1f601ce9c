#![no_main]

use libfuzzer_sys::fuzz_target;
use subpop_core::dataset::{parse_csv, to_csv_string, validate};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for header in [true, false] {
        if let Ok(ds) = parse_csv(text, header) {
            let _ = validate(&ds, false);
            let _ = ds.cell_counts();
            // whatever parses must survive a write/read round trip
            let again = parse_csv(&to_csv_string(&ds), true).expect("round trip");
            assert_eq!(again, ds);
        }
    }
});
