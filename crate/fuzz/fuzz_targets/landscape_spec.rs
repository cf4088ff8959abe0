#![no_main]

use libfuzzer_sys::fuzz_target;
use searchlab::landscape::{latent_fitness, LandscapeSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(spec) = LandscapeSpec::from_json(text) {
        // a validated spec evaluates its own baseline
        latent_fitness(&spec, &spec.baseline_genotype()).expect("baseline evaluates");
    }
});
