//! Experiment configs come from user-supplied files; parsing plus validation
//! must never panic on arbitrary bytes.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = dpinn_lab::harness::ExperimentConfig::from_json(text);
    }
});
