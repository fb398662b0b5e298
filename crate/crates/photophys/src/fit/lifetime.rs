//! Single-exponential fluorescence-decay fits.

use crate::correlator::DelayHistogram;
use crate::error::{Error, Result};
use crate::fit::engine::{least_squares, FitData, Param};
use crate::fit::{smooth, FitFamily, FitResult, FittedParameter};

/// Fits I(t) = I0 + A exp(-t/tau) to a decay curve.
///
/// Intended for photon-counting data: weights follow the Poisson
/// convention 1/max(count, 1). Values need not be integral, so noise-free
/// synthetic curves fit exactly.
pub fn fit_decay_curve(time_ns: &[f64], counts: &[f64]) -> Result<FitResult> {
    if time_ns.len() != counts.len() {
        return Err(Error::Data("time and count columns differ in length".into()));
    }
    if time_ns.len() < 20 {
        return Err(Error::Statistics(format!(
            "decay fit needs at least 20 bins, got {}",
            time_ns.len()
        )));
    }
    if counts.iter().any(|&c| !c.is_finite() || c < 0.0) {
        return Err(Error::Data("counts must be finite and >= 0".into()));
    }

    let n = counts.len();
    let sm = smooth(counts, (n / 50).max(1));
    let tail = &sm[n - (n / 10).max(1)..];
    let floor = tail.iter().sum::<f64>() / tail.len() as f64;
    let (peak_idx, peak) = sm
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, &v)| (i, v))
        .expect("nonempty counts");
    let amplitude = (peak - floor).max(1e-3 * peak.max(1.0));

    // Time for the smoothed curve to fall to 1/e of the amplitude.
    let target = floor + amplitude * (-1.0f64).exp();
    let span = time_ns[n - 1] - time_ns[0];
    let tau0 = (peak_idx..n)
        .find(|&i| sm[i] <= target)
        .map(|i| (time_ns[i] - time_ns[peak_idx]).max(span / 200.0))
        .unwrap_or(span / 10.0);

    let params = [
        Param::positive("offset_counts", "counts", floor.max(1e-3 * peak.max(1.0))),
        Param::positive("amplitude_counts", "counts", amplitude),
        Param::positive("tau_ns", "ns", tau0),
    ];
    let times = time_ns.to_vec();
    let model = move |theta: &[f64], out: &mut [f64]| {
        for (o, &t) in out.iter_mut().zip(&times) {
            *o = theta[0] + theta[1] * (-t / theta[2]).exp();
        }
        true
    };
    let data = FitData {
        y: counts.to_vec(),
        weights: counts.iter().map(|&c| 1.0 / c.max(1.0)).collect(),
    };
    let engine = least_squares(&model, &params, &data)?;
    let mut result = FitResult::from_engine(FitFamily::Lifetime, &params, &engine);

    let tau = engine.values[2];
    let tau_var = engine.covariance[(2, 2)].max(0.0);
    result.derived.push(FittedParameter {
        name: "decay_rate_ghz".into(),
        value: 1.0 / tau,
        unit: "GHz".into(),
        standard_error: if engine.unidentifiable[2] {
            None
        } else {
            Some(tau_var.sqrt() / (tau * tau))
        },
        unidentifiable: engine.unidentifiable[2],
    });
    Ok(result)
}

/// Fits the delay-since-sync histogram of a pulsed stream. The time origin
/// sits on the first bin that holds the histogram maximum, so the fit sees
/// only the decaying flank.
pub fn fit_lifetime(hist: &DelayHistogram) -> Result<FitResult> {
    let peak = hist
        .counts
        .iter()
        .enumerate()
        .max_by_key(|&(_, &c)| c)
        .map(|(i, _)| i)
        .unwrap_or(0);
    let times: Vec<f64> = (peak..hist.counts.len())
        .map(|i| hist.bin_center_ns(i) - hist.bin_center_ns(peak))
        .collect();
    let counts: Vec<f64> = hist.counts[peak..].iter().map(|&c| c as f64).collect();
    fit_decay_curve(&times, &counts)
}
