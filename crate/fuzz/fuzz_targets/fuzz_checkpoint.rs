//! Fuzz the sweep checkpoint format, including trajectory state restoration.

#![no_main]

use libfuzzer_sys::fuzz_target;
use xxz_transport::io::SweepCheckpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ckpt) = serde_json::from_str::<SweepCheckpoint>(text) {
        if let Some(in_flight) = &ckpt.in_flight {
            for snap in &in_flight.trajectories {
                // restoring must either succeed or fail cleanly for any size
                for n in 1..=6usize {
                    let _ = snap.restore(n, 1);
                }
            }
        }
        let _ = serde_json::to_string(&ckpt);
    }
});
