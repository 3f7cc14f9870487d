//! Generator specs are user input; parsing, validation, and generation
//! from a validated spec must never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use mtlcoder::corpus::{generate_synthetic, GeneratorSpec};

fuzz_target!(|data: &[u8]| {
    if let Ok(mut spec) = GeneratorSpec::from_json(data) {
        // Cap the sizes so generation stays fast; validity is unaffected.
        spec.sessions = spec.sessions.min(4);
        spec.turns_per_session = [
            spec.turns_per_session[0].min(4).max(1),
            spec.turns_per_session[1].min(4).max(1),
        ];
        spec.words_per_turn = [
            spec.words_per_turn[0].min(6).max(1),
            spec.words_per_turn[1].min(6).max(1),
        ];
        spec.vocab_size = spec.vocab_size.min(50);
        if spec.validate().is_ok() {
            let _ = generate_synthetic(&spec);
        }
    }
});
