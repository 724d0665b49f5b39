#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = junction_core::demand::parse_turning_counts(data) {
        assert!(c.rates.iter().all(|r| r.is_finite() && *r >= 0.0));
    }
});
