#![no_main]

use junction_core::policy::checkpoint::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = decode(data) {
        assert_eq!(decode(&encode(&ck)).unwrap(), ck);
    }
});
