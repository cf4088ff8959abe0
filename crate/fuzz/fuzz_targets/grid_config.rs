#![no_main]

use libfuzzer_sys::fuzz_target;
use searchlab::orchestrator::GridConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = GridConfig::from_toml(text);
    }
});
