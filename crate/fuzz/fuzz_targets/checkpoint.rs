//! Checkpoints are binary files read back from disk; truncated, corrupted,
//! or adversarial bytes must produce an error, never a panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use mtlcoder::trainer::{read_checkpoint, write_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(checkpoint) = read_checkpoint(data) {
        let mut buf = Vec::new();
        write_checkpoint(&checkpoint, &mut buf).expect("accepted checkpoint serializes");
        read_checkpoint(&buf[..]).expect("serialized checkpoint parses");
    }
});
