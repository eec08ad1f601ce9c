#![no_main]

use libfuzzer_sys::fuzz_target;
use subpop_cli::predictions::{evaluate_tags, parse_predictions_csv};
use subpop_core::synthgen::TruthRow;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_predictions_csv(text) {
        let truth: Vec<TruthRow> = rows
            .iter()
            .map(|r| TruthRow { row_index: r.row_index, y_true: (r.row_index % 2) as u8 })
            .collect();
        let _ = evaluate_tags(&rows, &truth, 0.5);
    }
});
