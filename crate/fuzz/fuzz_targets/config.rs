#![no_main]

use disco::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // Last line doubles as an override so the `section.key=value` path is hit too.
    let (doc, last) = text.rsplit_once('\n').unwrap_or((text, ""));
    let _ = parse_config(text, &[]);
    if let Ok(cfg) = parse_config(doc, &[last.to_string()]) {
        let again = parse_config(&cfg.to_toml(), &[]).expect("round trip");
        assert_eq!(again.digest(), cfg.digest());
    }
});
