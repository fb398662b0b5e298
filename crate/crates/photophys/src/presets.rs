//! Bundled reference emitter parameter sets.
//!
//! Two germanium-vacancy centres with distinct photophysics, used
//! throughout the examples and the test suite. `gev1` is bright with a
//! short excited-state lifetime and weak shelving; `gev2` is dimmer, lives
//! longer and shelves more readily, which drives its bunching amplitude
//! past 2 at a few mW. Rates are in GHz, powers in mW.

use crate::rates::EmitterModel;

pub fn gev1() -> EmitterModel {
    EmitterModel {
        pump_efficiency: 0.08,
        k21: 0.1014,
        k23: 0.0065,
        deshelve_high: 0.0051,
        deshelve_sat: 0.45,
        deshelve_low: 0.0022,
    }
}

pub fn gev2() -> EmitterModel {
    EmitterModel {
        pump_efficiency: 0.05,
        k21: 0.0458,
        k23: 0.0052,
        deshelve_high: 0.002,
        deshelve_sat: 1.42,
        deshelve_low: 0.0007,
    }
}
