//! Fuzz the polarization-profile CSV parser.

#![no_main]

use libfuzzer_sys::fuzz_target;
use xxz_transport::io::parse_profile_csv_text;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_profile_csv_text(text);
});
