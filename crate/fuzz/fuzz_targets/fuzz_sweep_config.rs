//! Fuzz the sweep JSON config parser and point expansion.

#![no_main]

use libfuzzer_sys::fuzz_target;
use xxz_transport::io::SweepConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = serde_json::from_str::<SweepConfig>(text) {
        if let Ok(points) = cfg.expand_points() {
            assert!(!points.is_empty());
            for p in &points {
                let _ = cfg.solver.choose(p.n);
            }
        }
        let _ = serde_json::to_string(&cfg);
    }
});
