//! Label-space definitions come from user-supplied JSON; parsing and
//! validation must never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use mtlcoder::corpus::LabelSpace;

fuzz_target!(|data: &[u8]| {
    if let Ok(space) = LabelSpace::from_json(data) {
        // A space that validates must index every one of its own codes.
        for code in &space.codes {
            assert!(space.code_index(code).is_ok());
        }
    }
});
