//! Fuzz the single-run JSON config parser and its validation path.

#![no_main]

use libfuzzer_sys::fuzz_target;
use xxz_transport::io::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = serde_json::from_str::<RunConfig>(text) {
        // validation must never panic, whatever the parsed numbers are
        let _ = cfg.validate();
        let _ = cfg.resolved_t_end();
        // a config that validates must re-serialize
        if cfg.validate().is_ok() {
            let _ = serde_json::to_string(&cfg).expect("valid config serializes");
        }
    }
});
