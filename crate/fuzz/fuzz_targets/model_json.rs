#![no_main]

use erdr::classifier::{decode_model, encode_model};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = decode_model(text) {
        let encoded = encode_model(&model);
        assert_eq!(encode_model(&decode_model(&encoded).unwrap()), encoded);
    }
});
