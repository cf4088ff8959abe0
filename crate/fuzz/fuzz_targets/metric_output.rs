#![no_main]

use libfuzzer_sys::fuzz_target;
use searchlab::landscape::parse_metric_output;

// First line is the metric path, the rest is the evaluator's stdout.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let (path, output) = text.split_once('\n').unwrap_or((text, ""));
    let _ = parse_metric_output(output, path);
});
