//! Weighted least-squares fits for every model family in the toolkit:
//! per-power and global g2 curves, fluorescence decays, multi-Lorentzian
//! spectra, saturation curves and polarization scans. The shared engine
//! lives in [`engine`]; each family module owns its model function,
//! data-driven initialization and derived quantities.

pub mod engine;
pub mod g2;
pub mod lifetime;
pub mod polarization;
pub mod saturation;
pub mod spectrum;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use engine::{EngineResult, Param};

pub use engine::{least_squares, FitData, Transform};
pub use g2::{fit_g2_global, fit_g2_series, fit_g2_single, recovered_model, PowerEntry, PowerSeries};
pub use lifetime::{fit_decay_curve, fit_lifetime};
pub use polarization::{fit_polarization, PolarizationData};
pub use saturation::{fit_saturation, SaturationData};
pub use spectrum::{fit_spectrum, Spectrum};

/// Which model family produced a [`FitResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    G2Single,
    G2Global,
    Spectrum,
    Lifetime,
    Saturation,
    Polarization,
}

/// A named fitted or derived value with unit and uncertainty.
///
/// `standard_error` is `None` when the parameter is unidentifiable (its
/// formal error is unbounded) or when no propagation is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedParameter {
    pub name: String,
    pub value: f64,
    pub unit: String,
    pub standard_error: Option<f64>,
    #[serde(default)]
    pub unidentifiable: bool,
}

/// Optimizer diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
}

/// Outcome of one fit: parameters with uncertainties, residual statistics
/// and family-specific derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: FitFamily,
    pub parameters: Vec<FittedParameter>,
    pub derived: Vec<FittedParameter>,
    pub reduced_chi2: f64,
    pub n_points: usize,
    pub n_params: usize,
    pub convergence: Convergence,
}

impl FitResult {
    pub(crate) fn from_engine(
        family: FitFamily,
        params: &[Param],
        engine: &EngineResult,
    ) -> Self {
        let parameters = params
            .iter()
            .enumerate()
            .map(|(j, p)| FittedParameter {
                name: p.name.clone(),
                value: engine.values[j],
                unit: p.unit.clone(),
                standard_error: if engine.unidentifiable[j] {
                    None
                } else {
                    Some(engine.standard_errors[j])
                },
                unidentifiable: engine.unidentifiable[j],
            })
            .collect();
        Self {
            family,
            parameters,
            derived: Vec::new(),
            reduced_chi2: engine.reduced_chi2(),
            n_points: engine.n_points,
            n_params: engine.values.len(),
            convergence: Convergence {
                converged: engine.converged,
                iterations: engine.iterations,
                final_gradient_norm: engine.final_gradient_norm,
            },
        }
    }

    pub fn parameter(&self, name: &str) -> Option<&FittedParameter> {
        self.parameters
            .iter()
            .chain(&self.derived)
            .find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameter(name).map(|p| p.value)
    }

    /// Value of a parameter that the family contract guarantees to exist.
    pub fn require(&self, name: &str) -> Result<f64> {
        self.value(name)
            .ok_or_else(|| Error::Data(format!("fit result has no parameter named {name}")))
    }
}

/// Moving-average smoothing used by the initialization heuristics.
pub(crate) fn smooth(values: &[f64], half_width: usize) -> Vec<f64> {
    if half_width == 0 || values.len() < 3 {
        return values.to_vec();
    }
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half_width);
        let hi = (i + half_width + 1).min(n);
        let sum: f64 = values[lo..hi].iter().sum();
        out.push(sum / (hi - lo) as f64);
    }
    out
}
