//! Fuzz the fixed-schema sweep CSV parser; accepted rows must round-trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use xxz_transport::io::{parse_sweep_csv_text, sweep_record_to_csv_row, parse_sweep_csv_row};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_sweep_csv_text(text) {
        for r in &records {
            // whatever parsed must survive the write/parse cycle unchanged
            // (floats can be NaN: compare through the formatted row instead)
            let row = sweep_record_to_csv_row(r);
            let back = parse_sweep_csv_row(&row, 2).expect("own output parses");
            assert_eq!(sweep_record_to_csv_row(&back), row);
        }
    }
});
