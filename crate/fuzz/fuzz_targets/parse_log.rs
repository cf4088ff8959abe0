#![no_main]

use libfuzzer_sys::fuzz_target;
use searchlab::log::{parse_log, write_log};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((t, o)) = parse_log(text) {
        // anything accepted must survive a write/parse cycle
        let again = parse_log(&write_log(&t, o.as_ref())).expect("re-parse of written log");
        assert_eq!(again.0, t);
    }
});
