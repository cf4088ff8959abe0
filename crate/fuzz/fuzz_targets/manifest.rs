#![no_main]

use libfuzzer_sys::fuzz_target;
use searchlab::orchestrator::{parse_manifest, write_manifest};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(entries) = parse_manifest(text) {
        assert_eq!(
            parse_manifest(&write_manifest(&entries)).expect("re-parse"),
            entries
        );
    }
});
