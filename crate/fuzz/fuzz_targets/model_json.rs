#![no_main]

use libfuzzer_sys::fuzz_target;
use subpop_core::ProbModel;

fuzz_target!(|data: &[u8]| {
    let Ok(m) = serde_json::from_slice::<ProbModel>(data) else { return };
    if m.check().is_ok() {
        let x = vec![1.0; m.dim()];
        let p = m.predict_proba(&x).expect("dimension matches");
        // Overflowing parameters may give NaN, never a value outside [0, 1].
        assert!(p.is_nan() || (0.0..=1.0).contains(&p));
        assert!(m.predict_proba(&x[1..]).is_err());
    }
});
