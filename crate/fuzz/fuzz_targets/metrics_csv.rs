#![no_main]

use libfuzzer_sys::fuzz_target;
use searchlab::metrics::parse_metrics_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_metrics_csv(text);
    }
});
