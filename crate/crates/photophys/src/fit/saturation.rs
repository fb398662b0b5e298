//! Emission saturation fits I(P) = I_inf * P / (P_sat + P).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::engine::{least_squares, FitData, Param};
use crate::fit::{FitFamily, FitResult};

/// Background-corrected count rate versus excitation power.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SaturationData {
    pub power_mw: Vec<f64>,
    pub rate_hz: Vec<f64>,
}

impl SaturationData {
    pub fn validate(&self) -> Result<()> {
        if self.power_mw.len() != self.rate_hz.len() {
            return Err(Error::Data("power and rate columns differ in length".into()));
        }
        if self.power_mw.len() < 4 {
            return Err(Error::Statistics(format!(
                "saturation fit needs at least 4 points, got {}",
                self.power_mw.len()
            )));
        }
        if self
            .power_mw
            .iter()
            .any(|&p| !p.is_finite() || p <= 0.0)
        {
            return Err(Error::Data("powers must be positive".into()));
        }
        if self.rate_hz.iter().any(|&r| !r.is_finite() || r < 0.0) {
            return Err(Error::Data("rates must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Fits the saturation curve; `with_background` adds a linear term b*P for
/// uncorrected data. Weights follow the Poisson convention (variance
/// proportional to the rate), so reported errors assume counting noise.
pub fn fit_saturation(data: &SaturationData, with_background: bool) -> Result<FitResult> {
    data.validate()?;
    let max_rate = data.rate_hz.iter().cloned().fold(0.0, f64::max);
    if max_rate <= 0.0 {
        return Err(Error::Data("all rates are zero; nothing to fit".into()));
    }

    // Half-max crossing as the saturation-power guess.
    let mut indexed: Vec<usize> = (0..data.power_mw.len()).collect();
    indexed.sort_by(|&i, &j| data.power_mw[i].total_cmp(&data.power_mw[j]));
    let half = max_rate / 2.0;
    let p_sat0 = indexed
        .iter()
        .find(|&&i| data.rate_hz[i] >= half)
        .map(|&i| data.power_mw[i])
        .unwrap_or(data.power_mw[indexed[indexed.len() / 2]]);

    let mut params = vec![
        Param::positive("i_infinity_hz", "Hz", 1.3 * max_rate),
        Param::positive("p_sat_mw", "mW", p_sat0),
    ];
    if with_background {
        let p_max = data.power_mw[*indexed.last().unwrap()];
        params.push(Param::positive(
            "background_hz_per_mw",
            "Hz/mW",
            0.01 * max_rate / p_max,
        ));
    }

    let powers = data.power_mw.clone();
    let model = move |theta: &[f64], out: &mut [f64]| {
        for (o, &p) in out.iter_mut().zip(&powers) {
            let mut rate = theta[0] * p / (theta[1] + p);
            if theta.len() > 2 {
                rate += theta[2] * p;
            }
            *o = rate;
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
    Ok(FitResult::from_engine(
        FitFamily::Saturation,
        &params,
        &engine,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn curve(i_inf: f64, p_sat: f64, powers: &[f64]) -> SaturationData {
        SaturationData {
            power_mw: powers.to_vec(),
            rate_hz: powers.iter().map(|&p| i_inf * p / (p_sat + p)).collect(),
        }
    }

    #[test]
    fn clean_curve_recovers_parameters() {
        let powers: Vec<f64> = (1..=20).map(|i| 0.2 * f64::from(i)).collect();
        let data = curve(1.5e6, 0.56, &powers);
        let fit = fit_saturation(&data, false).unwrap();
        assert!(fit.convergence.converged);
        assert_relative_eq!(fit.require("i_infinity_hz").unwrap(), 1.5e6, max_relative = 1e-6);
        assert_relative_eq!(fit.require("p_sat_mw").unwrap(), 0.56, max_relative = 1e-6);
    }

    #[test]
    fn linear_background_term_is_recovered() {
        let powers: Vec<f64> = (1..=25).map(|i| 0.25 * f64::from(i)).collect();
        let mut data = curve(2.0e5, 1.5, &powers);
        for (r, &p) in data.rate_hz.iter_mut().zip(&powers) {
            *r += 3.0e3 * p;
        }
        let fit = fit_saturation(&data, true).unwrap();
        assert_relative_eq!(fit.require("i_infinity_hz").unwrap(), 2.0e5, max_relative = 1e-4);
        assert_relative_eq!(fit.require("p_sat_mw").unwrap(), 1.5, max_relative = 1e-4);
        assert_relative_eq!(fit.require("background_hz_per_mw").unwrap(), 3.0e3, max_relative = 1e-3);
    }

    #[test]
    fn linear_regime_flags_maximum_rate() {
        // Strictly linear data: only the slope is constrained and the fit
        // runs off along the I_inf ~ P_sat valley.
        let powers: Vec<f64> = (1..=10).map(|i| 1e-3 * f64::from(i)).collect();
        let data = SaturationData {
            rate_hz: powers.iter().map(|&p| 1.5e6 / 0.56 * p).collect(),
            power_mw: powers,
        };
        let fit = fit_saturation(&data, false).unwrap();
        let i_inf = fit.parameter("i_infinity_hz").unwrap();
        let p_sat = fit.parameter("p_sat_mw").unwrap();
        assert!(i_inf.unidentifiable, "{i_inf:?}");
        assert!(p_sat.unidentifiable, "{p_sat:?}");
        // The low-power slope I_inf / P_sat stays well determined.
        let slope = fit.require("i_infinity_hz").unwrap() / fit.require("p_sat_mw").unwrap();
        assert_relative_eq!(slope, 1.5e6 / 0.56, max_relative = 1e-3);
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let data = SaturationData {
            power_mw: vec![0.1, 0.2, 0.3],
            rate_hz: vec![1.0, 2.0, 3.0],
        };
        assert!(fit_saturation(&data, false).is_err());
        let data = SaturationData {
            power_mw: vec![0.0, 0.2, 0.3, 0.4],
            rate_hz: vec![1.0, 2.0, 3.0, 4.0],
        };
        assert!(fit_saturation(&data, false).is_err());
    }
}
