//! The solution-CSV parser is used to reparse emitted artifacts; it must be
//! total on arbitrary input.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = dpinn_lab::harness::parse_solution_csv(text);
    }
});
