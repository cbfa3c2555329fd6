#![no_main]

use disco::data::{parse_parallel, Vocab};
use libfuzzer_sys::fuzz_target;

// Input is `src \0 tgt \0 vocab`; missing parts are empty.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut parts = text.splitn(3, '\0');
    let src = parts.next().unwrap_or("");
    let tgt = parts.next().unwrap_or("");
    let vocab = parts.next().unwrap_or("");

    if let Ok(pairs) = parse_parallel(src, tgt, "train.src", "train.tgt") {
        assert!(pairs.len() <= src.lines().count());
    }
    if let Ok(v) = Vocab::parse(vocab) {
        let again = Vocab::parse(&v.to_text()).expect("vocabulary round trip");
        assert_eq!(again.words(), v.words());
        let ids = v.encode(src.lines().next().unwrap_or(""));
        let _ = v.decode(&ids);
    }
});
