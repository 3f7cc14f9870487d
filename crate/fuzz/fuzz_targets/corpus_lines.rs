//! Corpus reading must reject or accept arbitrary JSON-lines input without
//! panicking; accepted corpora must survive a write/read round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use mtlcoder::corpus::{misc_label_space, read_corpus, write_corpus};

fuzz_target!(|data: &[u8]| {
    let space = misc_label_space();
    if let Ok(corpus) = read_corpus(data, &space) {
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).expect("accepted corpus serializes");
        let again = read_corpus(&buf[..], &space).expect("serialized corpus parses");
        assert_eq!(corpus.sessions.len(), again.sessions.len());
    }
});
