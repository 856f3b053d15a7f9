#![no_main]

use erdr::embeddings::{parse_embedding_text, WordVectors};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(dict) = parse_embedding_text(data) {
        let mut buf = Vec::new();
        dict.write_text(&mut buf).unwrap();
        let again = parse_embedding_text(&buf[..]).unwrap();
        assert_eq!(again.words(), dict.words());
        for (w, v) in dict.iter() {
            assert_eq!(again.get(w).unwrap(), v);
        }
    }
});
