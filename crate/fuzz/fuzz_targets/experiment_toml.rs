#![no_main]

use libfuzzer_sys::fuzz_target;
use subpop_cli::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml_str(text) {
        // a valid config re-serializes to an equivalent valid config
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).expect("round trip");
        assert_eq!(again, cfg);
    }
});
