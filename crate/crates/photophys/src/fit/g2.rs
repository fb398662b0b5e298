//! Fits of the analytic correlation function: per-power curves and the
//! global multi-power fit that recovers the emitter model.

use crate::correlator::{CorrelationHistogram, G2Series};
use crate::error::{Error, Result};
use crate::fit::engine::{least_squares, FitData, Param};
use crate::fit::{smooth, FitFamily, FitResult, FittedParameter};
use crate::rates::EmitterModel;

/// Fitted `a` below this is treated as "no bunching detected".
const BUNCHING_FLOOR: f64 = 1e-3;

fn series_weights(series: &G2Series) -> Result<Vec<f64>> {
    series.validate()?;
    if series.sigma.contains(&0.0) {
        return Err(Error::Data(
            "g2 series has zero-sigma points; use the sqrt(count+1) convention when exporting"
                .into(),
        ));
    }
    Ok(series.sigma.iter().map(|&s| 1.0 / (s * s)).collect())
}

/// (a, tau1, tau2) starting point read off a measured curve.
fn initial_guess(series: &G2Series) -> (f64, f64, f64) {
    let n = series.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        series.tau_ns[i]
            .abs()
            .total_cmp(&series.tau_ns[j].abs())
    });
    let abs_tau: Vec<f64> = order.iter().map(|&i| series.tau_ns[i].abs()).collect();
    let g2: Vec<f64> = order.iter().map(|&i| series.g2[i]).collect();
    // Light smoothing only: a wide window swallows the antibunching dip.
    let sm = smooth(&g2, (n / 400).max(1));

    let tail_start = n - (n / 4).max(1);
    let plateau = sm[tail_start..].iter().sum::<f64>() / (n - tail_start) as f64;
    let plateau = if plateau.is_finite() && plateau > 0.0 {
        plateau
    } else {
        1.0
    };
    let max_tau = abs_tau.last().copied().unwrap_or(1.0).max(1e-9);

    // Antibunching time: delay at which the dip has recovered to 1 - 1/e of
    // its depth.
    let dip = plateau - sm[0];
    let mut tau1 = max_tau / 20.0;
    if dip > 0.05 * plateau {
        let target = plateau - dip * (-1.0f64).exp();
        if let Some(idx) = (0..n).find(|&i| sm[i] >= target && abs_tau[i] > 0.0) {
            tau1 = abs_tau[idx].max(max_tau / 1e4);
        }
    }

    // Bunching: excess above the plateau beyond the dip region.
    let mut a = 0.02;
    let mut tau2 = 10.0 * tau1;
    let beyond: Vec<usize> = (0..n).filter(|&i| abs_tau[i] > 1.5 * tau1).collect();
    if let Some(&peak) = beyond
        .iter()
        .max_by(|&&i, &&j| sm[i].total_cmp(&sm[j]))
    {
        let excess = sm[peak] - plateau;
        if excess > 0.02 * plateau {
            a = (excess / plateau).max(0.02);
            let target = plateau + excess * (-1.0f64).exp();
            let decayed = (peak..n).find(|&i| sm[i] <= target);
            if let Some(idx) = decayed {
                tau2 = (abs_tau[idx] - abs_tau[peak]).max(2.0 * tau1);
            }
        }
    }
    (a, tau1, tau2.max(2.0 * tau1))
}

/// Fits g2(tau) = 1 - (1+a) exp(-|tau|/tau1) + a exp(-|tau|/tau2) with the
/// plateau fixed at 1, weighting points by 1/sigma^2. The starting point
/// is `initial` if given, otherwise read off the curve.
pub fn fit_g2_series(
    series: &G2Series,
    initial: Option<(f64, f64, f64)>,
) -> Result<FitResult> {
    let weights = series_weights(series)?;
    let (a0, tau1_0, tau2_0) = initial.unwrap_or_else(|| initial_guess(series));
    let params = [
        Param::positive("a", "", a0.max(1e-4)),
        Param::positive("tau1_ns", "ns", tau1_0),
        Param::positive("tau2_ns", "ns", tau2_0),
    ];
    let taus = series.tau_ns.clone();
    let model = move |theta: &[f64], out: &mut [f64]| {
        let (a, tau1, tau2) = (theta[0], theta[1], theta[2]);
        for (o, &t) in out.iter_mut().zip(&taus) {
            let t = t.abs();
            *o = 1.0 - (1.0 + a) * (-t / tau1).exp() + a * (-t / tau2).exp();
        }
        true
    };
    let data = FitData {
        y: series.g2.clone(),
        weights,
    };
    let engine = least_squares(&model, &params, &data)?;
    let mut result = FitResult::from_engine(FitFamily::G2Single, &params, &engine);
    let bunching_absent = engine.values[0] < BUNCHING_FLOOR;
    result.derived.push(FittedParameter {
        name: "bunching_absent".into(),
        value: f64::from(u8::from(bunching_absent)),
        unit: "".into(),
        standard_error: None,
        unidentifiable: false,
    });
    Ok(result)
}

/// Convenience wrapper over a normalized histogram.
pub fn fit_g2_single(hist: &CorrelationHistogram) -> Result<FitResult> {
    fit_g2_series(&hist.to_series()?, None)
}

/// One power point of a multi-power measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerEntry {
    pub power_mw: f64,
    pub series: G2Series,
}

/// Normalized g2 curves of one emitter at several excitation powers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerSeries {
    pub entries: Vec<PowerEntry>,
}

impl PowerSeries {
    pub fn validate(&self) -> Result<()> {
        if self.entries.len() < 3 {
            return Err(Error::Data(format!(
                "global fit needs at least 3 powers, got {}",
                self.entries.len()
            )));
        }
        for entry in &self.entries {
            if !entry.power_mw.is_finite() || entry.power_mw <= 0.0 {
                return Err(Error::Data(format!(
                    "powers must be positive, got {} mW",
                    entry.power_mw
                )));
            }
            entry.series.validate()?;
            if entry.series.is_empty() {
                return Err(Error::Data("empty g2 series in power set".into()));
            }
        }
        let mut powers: Vec<f64> = self.entries.iter().map(|e| e.power_mw).collect();
        powers.sort_by(f64::total_cmp);
        if powers.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("powers must be distinct".into()));
        }
        Ok(())
    }
}

/// Emitter-model starting point assembled from independent per-power fits:
/// the de-shelving limits come from the extreme-power bunching times, the
/// pump law from a straight line through the antibunching rates, and the
/// shelving rate from inverting the bunching amplitude at the middle
/// power.
fn initial_from_singles(series: &PowerSeries) -> Result<EmitterModel> {
    let mut singles: Vec<(f64, f64, f64, f64)> = Vec::new();
    for entry in &series.entries {
        let fit = fit_g2_series(&entry.series, None)?;
        singles.push((
            entry.power_mw,
            fit.require("a")?,
            fit.require("tau1_ns")?,
            fit.require("tau2_ns")?,
        ));
    }
    singles.sort_by(|x, y| x.0.total_cmp(&y.0));

    let (_, _, _, tau2_low) = singles[0];
    let (_, _, _, tau2_high) = singles[singles.len() - 1];
    let c1 = (1.0 / tau2_low).max(1e-6);
    let a1 = (1.0 / tau2_high - c1).max(0.25 * c1);
    let b1 = singles[singles.len() / 2].0;

    // Straight line through (P, 1/tau1): slope estimates the pump
    // efficiency, the intercept the total excited-state decay rate.
    let n = singles.len() as f64;
    let mean_p = singles.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_r = singles.iter().map(|s| 1.0 / s.2).sum::<f64>() / n;
    let var_p: f64 = singles.iter().map(|s| (s.0 - mean_p).powi(2)).sum();
    let cov: f64 = singles
        .iter()
        .map(|s| (s.0 - mean_p) * (1.0 / s.2 - mean_r))
        .sum();
    let slope = cov / var_p;
    let rate_low = 1.0 / singles[0].2;
    let pump = if slope > 0.0 { slope } else { 0.5 * rate_low / mean_p };
    let k21 = (mean_r - slope * mean_p).clamp(1e-4, rate_low);

    let (p_mid, a_mid, tau1_mid, tau2_mid) = singles[singles.len() / 2];
    let k31_mid = 1.0 / (tau2_mid + a_mid * (tau2_mid - tau1_mid));
    let rate_sum = 1.0 / tau1_mid + 1.0 / tau2_mid;
    let k23 = (rate_sum - pump * p_mid - k21 - k31_mid).max(1e-5);

    EmitterModel::new(pump, k21, k23, a1, b1, c1)
}

const GLOBAL_PARAM_NAMES: [(&str, &str); 6] = [
    ("pump_efficiency_ghz_per_mw", "GHz/mW"),
    ("k21_ghz", "GHz"),
    ("k23_ghz", "GHz"),
    ("deshelve_high_ghz", "GHz"),
    ("deshelve_sat_mw", "mW"),
    ("deshelve_low_ghz", "GHz"),
];

fn model_to_theta(model: &EmitterModel) -> [f64; 6] {
    [
        model.pump_efficiency,
        model.k21,
        model.k23,
        model.deshelve_high,
        model.deshelve_sat,
        model.deshelve_low,
    ]
}

fn theta_to_model(theta: &[f64]) -> EmitterModel {
    EmitterModel {
        pump_efficiency: theta[0],
        k21: theta[1],
        k23: theta[2],
        deshelve_high: theta[3],
        deshelve_sat: theta[4],
        deshelve_low: theta[5],
    }
}

/// Simultaneous fit of one emitter model to g2 curves at several powers.
///
/// For trial parameters {K, k21, k23, A1, B1, C1} each power gets its rate
/// set, time constants and raw bunching amplitude, and every curve is
/// predicted from the same model; the pooled weighted residual is
/// minimized. Trial points whose rate quadratic turns degenerate are
/// rejected rather than clamped.
pub fn fit_g2_global(
    series: &PowerSeries,
    initial: Option<EmitterModel>,
) -> Result<FitResult> {
    series.validate()?;
    let start = match initial {
        Some(model) => {
            model.validate()?;
            model
        }
        None => initial_from_singles(series)?,
    };

    let mut y = Vec::new();
    let mut weights = Vec::new();
    let mut layout = Vec::new();
    for entry in &series.entries {
        layout.push((entry.power_mw, entry.series.tau_ns.clone(), y.len()));
        y.extend_from_slice(&entry.series.g2);
        weights.extend(series_weights(&entry.series)?);
    }

    let model_fn = move |theta: &[f64], out: &mut [f64]| {
        let model = theta_to_model(theta);
        for (power, taus, offset) in &layout {
            let Ok(rates) = model.rates_at_power(*power) else {
                return false;
            };
            let Ok(tc) = rates.time_constants() else {
                return false;
            };
            let Ok((tau1, tau2)) = tc.finite() else {
                return false;
            };
            let Ok(a) = rates.bunching_amplitude(tau1, tau2) else {
                return false;
            };
            for (i, &t) in taus.iter().enumerate() {
                let t = t.abs();
                out[offset + i] =
                    1.0 - (1.0 + a) * (-t / tau1).exp() + a * (-t / tau2).exp();
            }
        }
        true
    };

    let theta0 = model_to_theta(&start);
    let params: Vec<Param> = GLOBAL_PARAM_NAMES
        .iter()
        .zip(theta0)
        .map(|(&(name, unit), v)| Param::positive(name, unit, v.max(1e-8)))
        .collect();
    let data = FitData { y, weights };
    let engine = least_squares(&model_fn, &params, &data)?;

    let mut result = FitResult::from_engine(FitFamily::G2Global, &params, &engine);
    let fitted = theta_to_model(&engine.values);
    result.derived.push(FittedParameter {
        name: "zero_power_lifetime_ns".into(),
        value: fitted.zero_power_lifetime(),
        unit: "ns".into(),
        standard_error: None,
        unidentifiable: false,
    });
    // Per-power curve parameters implied by the fitted model, for trend
    // tables and plot reconstruction downstream.
    for entry in &series.entries {
        let p = entry.power_mw;
        let params = fitted.rates_at_power(p)?.g2_parameters()?;
        for (name, unit, value) in [
            (format!("a@{p}mW"), "", params.a),
            (format!("tau1_ns@{p}mW"), "ns", params.tau1),
            (format!("tau2_ns@{p}mW"), "ns", params.tau2),
        ] {
            result.derived.push(FittedParameter {
                name,
                value,
                unit: unit.into(),
                standard_error: None,
                unidentifiable: false,
            });
        }
    }
    Ok(result)
}

/// Rebuilds the emitter model from a global-fit result.
pub fn recovered_model(result: &FitResult) -> Result<EmitterModel> {
    if result.family != FitFamily::G2Global {
        return Err(Error::Data("expected a global g2 fit result".into()));
    }
    EmitterModel::new(
        result.require("pump_efficiency_ghz_per_mw")?,
        result.require("k21_ghz")?,
        result.require("k23_ghz")?,
        result.require("deshelve_high_ghz")?,
        result.require("deshelve_sat_mw")?,
        result.require("deshelve_low_ghz")?,
    )
}
