#![no_main]

use disco::inference::{parse_trace, recount_steps, write_trace};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(records) = parse_trace(text) else { return };
    let _ = recount_steps(&records);
    let mut out = Vec::new();
    for (sentence, r) in &records {
        write_trace(&mut out, *sentence, std::slice::from_ref(r)).expect("write to memory");
    }
    let again = parse_trace(std::str::from_utf8(&out).unwrap()).expect("written trace parses");
    assert_eq!(again, records);
});
