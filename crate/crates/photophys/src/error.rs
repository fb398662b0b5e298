//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the photophysics toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An input value is outside the physical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A simulation or fit configuration is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data violates a structural precondition (ordering, channels, units).
    #[error("data error: {0}")]
    Data(String),

    /// A file could not be parsed; `line` is the 1-based physical line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A file header or schema version is not accepted by this reader.
    #[error("schema error: {0}")]
    Schema(String),

    /// The rate quadratic has complex roots: the population dynamics would be
    /// oscillatory, which this incoherent model cannot represent. Signals an
    /// unphysical rate combination.
    #[error("oscillatory rate regime: A^2 - 4B < 0 (A={a} GHz, B={b} GHz^2)")]
    OscillatoryRegime { a: f64, b: f64 },

    /// The two relaxation times coincide; the bunching amplitude is undefined.
    #[error("degenerate time constants: tau1 == tau2 == {tau_ns} ns")]
    DegenerateTimeConstants { tau_ns: f64 },

    /// k31 = 0 while the shelving path is open: population drains into the
    /// metastable state and never returns.
    #[error("permanent shelving: k31 = 0 with k23 > 0")]
    PermanentShelving,

    /// Histogram normalization could not be carried out.
    #[error("normalization error: {0}")]
    Normalization(String),

    /// Too few events or peaks to evaluate an estimator.
    #[error("insufficient statistics: {0}")]
    Statistics(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
