//! Sweep configs multiply axis lengths into a cell count; validation must
//! stay bounded and panic-free for adversarial axis declarations.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(sweep) = dpinn_lab::harness::SweepConfig::from_json(text) {
            // exercising the cell machinery on the first cell is cheap and
            // covers the path-application code
            let _ = sweep.cell_config(0);
            let _ = sweep.cell_assignment(0);
        }
    }
});
