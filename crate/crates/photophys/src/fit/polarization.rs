//! Polarization-scan fits I(theta) = alpha + beta sin^2(theta + phi).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::engine::{least_squares, FitData, Param};
use crate::fit::{FitFamily, FitResult, FittedParameter};

/// Count rate versus analyzer angle.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolarizationData {
    pub angle_deg: Vec<f64>,
    pub rate_hz: Vec<f64>,
}

impl PolarizationData {
    pub fn validate(&self) -> Result<()> {
        if self.angle_deg.len() != self.rate_hz.len() {
            return Err(Error::Data("angle and rate columns differ in length".into()));
        }
        if self.angle_deg.len() < 8 {
            return Err(Error::Statistics(format!(
                "polarization fit needs at least 8 points, got {}",
                self.angle_deg.len()
            )));
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &a in &self.angle_deg {
            if !a.is_finite() {
                return Err(Error::Data("angles must be finite".into()));
            }
            lo = lo.min(a);
            hi = hi.max(a);
        }
        if hi - lo < 180.0 - 1e-9 {
            return Err(Error::Data(format!(
                "angles must span at least 180 degrees, got {}",
                hi - lo
            )));
        }
        if self.rate_hz.iter().any(|&r| !r.is_finite() || r < 0.0) {
            return Err(Error::Data("rates must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Fits the dipole-emission modulation and derives the visibility
/// V = beta / (2 alpha + beta) = (Imax - Imin) / (Imax + Imin). The phase
/// is reported wrapped into [0, 180) degrees.
pub fn fit_polarization(data: &PolarizationData) -> Result<FitResult> {
    data.validate()?;
    let max_rate = data.rate_hz.iter().cloned().fold(0.0, f64::max);
    let min_rate = data.rate_hz.iter().cloned().fold(f64::INFINITY, f64::min);
    if max_rate <= 0.0 {
        return Err(Error::Data("all rates are zero; nothing to fit".into()));
    }
    let argmax = data
        .rate_hz
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .expect("nonempty");

    let params = [
        Param::positive("alpha_hz", "Hz", min_rate.max(1e-4 * max_rate)),
        Param::positive("beta_hz", "Hz", (max_rate - min_rate).max(1e-3 * max_rate)),
        // The modulation peaks where theta + phi = 90 degrees.
        Param::free("phi_deg", "deg", 90.0 - data.angle_deg[argmax]),
    ];
    let angles = data.angle_deg.clone();
    let model = move |theta: &[f64], out: &mut [f64]| {
        for (o, &angle) in out.iter_mut().zip(&angles) {
            let s = ((angle + theta[2]).to_radians()).sin();
            *o = theta[0] + theta[1] * s * s;
        }
        true
    };
    let weights: Vec<f64> = data
        .rate_hz
        .iter()
        .map(|&r| 1.0 / r.max(1e-3 * max_rate))
        .collect();
    let fit_data = FitData {
        y: data.rate_hz.clone(),
        weights,
    };
    let engine = least_squares(&model, &params, &fit_data)?;
    let mut result = FitResult::from_engine(FitFamily::Polarization, &params, &engine);

    // Wrap the phase; the model has period 180 degrees.
    let phi = &mut result.parameters[2];
    phi.value = phi.value.rem_euclid(180.0);

    let (alpha, beta) = (engine.values[0], engine.values[1]);
    let denom = 2.0 * alpha + beta;
    let visibility = beta / denom;
    // Delta method on V(alpha, beta).
    let dv_da = -2.0 * beta / (denom * denom);
    let dv_db = 2.0 * alpha / (denom * denom);
    let var = dv_da * dv_da * engine.covariance[(0, 0)]
        + dv_db * dv_db * engine.covariance[(1, 1)]
        + 2.0 * dv_da * dv_db * engine.covariance[(0, 1)];
    let identifiable = !engine.unidentifiable[0] && !engine.unidentifiable[1];
    result.derived.push(FittedParameter {
        name: "visibility".into(),
        value: visibility,
        unit: "".into(),
        standard_error: identifiable.then(|| var.max(0.0).sqrt()),
        unidentifiable: !identifiable,
    });
    result.derived.push(FittedParameter {
        name: "i_max_hz".into(),
        value: alpha + beta,
        unit: "Hz".into(),
        standard_error: None,
        unidentifiable: false,
    });
    result.derived.push(FittedParameter {
        name: "i_min_hz".into(),
        value: alpha,
        unit: "Hz".into(),
        standard_error: None,
        unidentifiable: false,
    });
    Ok(result)
}
