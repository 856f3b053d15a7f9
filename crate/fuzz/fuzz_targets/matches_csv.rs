#![no_main]

use erdr::data::{parse_matches, write_matches};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(pairs) = parse_matches(text) {
        let mut buf = Vec::new();
        write_matches(&mut buf, &pairs).unwrap();
        assert_eq!(parse_matches(std::str::from_utf8(&buf).unwrap()).unwrap(), pairs);
    }
});
