#![no_main]

use erdr::data::parse_table;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = parse_table(text, "id") {
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let again = parse_table(std::str::from_utf8(&buf).unwrap(), "id").unwrap();
        assert_eq!(again, table);
    }
});
