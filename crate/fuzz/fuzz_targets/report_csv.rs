#![no_main]

use junction_core::report::{parse_reports, write_reports};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_reports(data) {
        let mut buf = Vec::new();
        write_reports(&mut buf, "fuzz", &rows).unwrap();
        let again = parse_reports(&buf).unwrap();
        assert_eq!(again.len(), rows.len());
    }
});
