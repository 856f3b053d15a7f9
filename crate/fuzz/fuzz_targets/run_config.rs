#![no_main]

use erdr::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        let echoed = cfg.echo();
        let again = RunConfig::parse(&echoed).unwrap();
        assert_eq!(again.echo(), echoed);
    }
});
