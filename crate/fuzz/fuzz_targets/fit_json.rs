#![no_main]

use libfuzzer_sys::fuzz_target;
use subpop_cli::parse_fit_json;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(art) = parse_fit_json(text) {
        let p = art.predictor().expect("checked artifact builds a predictor");
        let x = vec![0.5; art.nuisances.dim()];
        let pp = p.predict(&x);
        assert!(pp.eta.is_nan() || (0.0..=1.0).contains(&pp.eta));
    }
});
