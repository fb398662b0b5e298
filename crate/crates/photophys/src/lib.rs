//! Simulation and fitting toolkit for single-photon-emitter photophysics.
//!
//! The physical model is a three-level system (ground, excited, metastable
//! shelf) with a linear pump and an intensity dependent de-shelving rate.
//! [`rates`] carries the closed-form results: relaxation time constants,
//! bunching amplitude, the analytic correlation function and steady-state
//! emission. [`sim`] generates detector time-tag streams from the same
//! model by kinetic Monte Carlo, [`correlator`] turns streams into
//! normalized g2 histograms and pulsed-decay histograms, and [`fit`]
//! recovers model parameters from histograms, spectra, saturation and
//! polarization data. [`io`] defines the on-disk formats.
//!
//! Units everywhere: rates in GHz, times in ns (timestamps in integer ps),
//! powers in mW, wavelengths in nm.

pub mod correlator;
pub mod error;
pub mod fit;
pub mod io;
pub mod presets;
pub mod rates;
pub mod sim;

pub use error::{Error, Result};
pub use rates::{EmitterModel, G2Parameters, RateCoefficients, SteadyState, TimeConstants};
