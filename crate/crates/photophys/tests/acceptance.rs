//! Acceptance gate. Each test covers one release criterion and prints a
//! single `criterion N (...): PASS/FAIL` line; run with
//! `cargo test --test acceptance -- --nocapture` to see all lines.

mod common;

use std::sync::OnceLock;

use common::ode_g2;
use photophys::correlator::{
    correlate, normalize, pulsed_g2_zero, CorrelationHistogram, G2Series, NormalizationMode,
};
use photophys::fit::g2::{fit_g2_global, fit_g2_series, recovered_model, PowerEntry, PowerSeries};
use photophys::fit::polarization::{fit_polarization, PolarizationData};
use photophys::fit::saturation::{fit_saturation, SaturationData};
use photophys::fit::spectrum::{fit_spectrum, Spectrum};
use photophys::presets;
use photophys::rates::{EmitterModel, G2Parameters, RateCoefficients, TimeConstants};
use photophys::sim::{simulate_cw, simulate_pulsed, SimConfig};
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64Mcg;

fn criterion(number: u32, name: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(detail) => println!("criterion {number} ({name}): PASS [{detail}]"),
        Err(detail) => {
            println!("criterion {number} ({name}): FAIL [{detail}]");
            panic!("criterion {number} failed: {detail}");
        }
    }
}

fn rel_err(value: f64, truth: f64) -> f64 {
    (value - truth).abs() / truth.abs()
}

fn gaussian(rng: &mut Pcg64Mcg) -> f64 {
    let (u1, u2): (f64, f64) = (rng.random(), rng.random());
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// ---------------------------------------------------------------------------
// Criterion 1: zero-power lifetimes
// ---------------------------------------------------------------------------

#[test]
fn c1_zero_power_lifetimes() {
    criterion(1, "zero-power lifetimes", (|| {
        let gev1 = presets::gev1().zero_power_lifetime();
        let gev2 = presets::gev2().zero_power_lifetime();
        for (value, target, label) in [(gev1, 9.25, "GeV1"), (gev2, 19.58, "GeV2")] {
            if rel_err(value, target) > 0.01 {
                return Err(format!("{label} lifetime {value:.4} ns vs {target} ns"));
            }
        }
        Ok(format!("GeV1 {gev1:.3} ns, GeV2 {gev2:.3} ns"))
    })());
}

// ---------------------------------------------------------------------------
// Criterion 2: eigen-structure and ODE oracles
// ---------------------------------------------------------------------------

#[test]
fn c2_eigen_and_ode_oracles() {
    criterion(2, "eigen/ODE oracles", (|| {
        let mut rng = Pcg64Mcg::seed_from_u64(0xacce_0002);
        let mut log_uniform = move |lo: f64, hi: f64| {
            10f64.powf(lo.log10() + (hi.log10() - lo.log10()) * rng.random::<f64>())
        };
        let mut worst_eigen: f64 = 0.0;
        let mut checked = 0;
        while checked < 1000 {
            let rates = RateCoefficients::new(
                log_uniform(1e-3, 1.0),
                log_uniform(1e-3, 1.0),
                log_uniform(1e-3, 1.0),
                log_uniform(1e-3, 1.0),
            )
            .map_err(|e| e.to_string())?;
            let (a, b) = rates.decay_polynomial();
            if (a * a - 4.0 * b).abs() < 1e-3 * a * a {
                continue;
            }
            let Ok(TimeConstants::Finite { tau1, tau2 }) = rates.time_constants() else {
                continue;
            };
            let eigen = common::rate_matrix(&rates).complex_eigenvalues();
            let mut values: Vec<_> = eigen.iter().collect();
            values.sort_by(|x, y| x.norm().total_cmp(&y.norm()));
            if values[1].im.abs().max(values[2].im.abs()) > 1e-9 {
                return Err(format!("complex eigenvalues for real-root set {rates:?}"));
            }
            let mut decays = [-values[1].re, -values[2].re];
            decays.sort_by(f64::total_cmp);
            worst_eigen = worst_eigen
                .max(rel_err(1.0 / tau1, decays[1]))
                .max(rel_err(1.0 / tau2, decays[0]));
            checked += 1;
        }
        if worst_eigen > 1e-8 {
            return Err(format!("eigenvalue deviation {worst_eigen:e} exceeds 1e-8"));
        }

        let mut worst_ode: f64 = 0.0;
        for model in [presets::gev1(), presets::gev2()] {
            for power in [0.1, 0.5, 1.0, 2.0, 4.0] {
                let rates = model.rates_at_power(power).map_err(|e| e.to_string())?;
                let params = rates.g2_parameters().map_err(|e| e.to_string())?;
                for i in 0..200 {
                    let tau = 20.0 * params.tau2 * i as f64 / 199.0;
                    worst_ode = worst_ode.max((params.evaluate(tau) - ode_g2(&rates, tau)).abs());
                }
            }
        }
        if worst_ode > 1e-4 {
            return Err(format!("ODE deviation {worst_ode:e} exceeds 1e-4"));
        }
        Ok(format!(
            "1000 eigen sets within {worst_eigen:.1e}, ODE g2 within {worst_ode:.1e}"
        ))
    })());
}

// ---------------------------------------------------------------------------
// Criteria 3 and 4: Monte Carlo round trips (shared simulation cache)
// ---------------------------------------------------------------------------

const SIM_SECONDS: f64 = 60.0;

fn simulate_series(
    model: EmitterModel,
    power_mw: f64,
    eta: f64,
    bin_ns: f64,
    max_delay_ns: f64,
    seed: u64,
) -> G2Series {
    let config = SimConfig {
        detection_efficiency: eta,
        rng_seed: seed,
        ..SimConfig::cw(model, power_mw, SIM_SECONDS * 1e9)
    };
    let stream = simulate_cw(&config).expect("simulation config is valid");
    let hist = correlate(&stream, bin_ns, max_delay_ns).expect("correlation config is valid");
    drop(stream);
    let hist = normalize(&hist, NormalizationMode::TailPlateau, None)
        .expect("tail plateau is well populated");
    hist.to_series().expect("histogram is normalized")
}

fn gev1_series() -> &'static Vec<(f64, G2Series)> {
    static CACHE: OnceLock<Vec<(f64, G2Series)>> = OnceLock::new();
    CACHE.get_or_init(|| {
        [
            (0.1, 0.03, 2.0, 1800.0, 0xc3_0001u64),
            (1.0, 0.012, 1.0, 700.0, 0xc3_0002),
            (4.0, 0.01, 0.8, 520.0, 0xc3_0003),
        ]
        .iter()
        .map(|&(p, eta, bin, max_delay, seed)| {
            (p, simulate_series(presets::gev1(), p, eta, bin, max_delay, seed))
        })
        .collect()
    })
}

#[test]
fn c3_monte_carlo_global_roundtrip() {
    criterion(3, "Monte Carlo global round trip", (|| {
        let series = PowerSeries {
            entries: gev1_series()
                .iter()
                .map(|(p, s)| PowerEntry {
                    power_mw: *p,
                    series: s.clone(),
                })
                .collect(),
        };
        let fit = fit_g2_global(&series, None).map_err(|e| e.to_string())?;
        if !fit.convergence.converged {
            return Err("global fit did not converge".into());
        }
        let model = recovered_model(&fit).map_err(|e| e.to_string())?;
        let truth = presets::gev1();
        let checks = [
            ("K", model.pump_efficiency, truth.pump_efficiency),
            ("k21", model.k21, truth.k21),
            ("k23", model.k23, truth.k23),
            ("A1", model.deshelve_high, truth.deshelve_high),
            ("B1", model.deshelve_sat, truth.deshelve_sat),
            ("C1", model.deshelve_low, truth.deshelve_low),
        ];
        let mut details = Vec::new();
        for (name, value, target) in checks {
            let err = rel_err(value, target);
            details.push(format!("{name} {:+.1}%", 100.0 * (value - target) / target));
            if err > 0.10 {
                return Err(format!(
                    "{name} recovered {value:.5} vs {target:.5} ({:.1}% off)",
                    100.0 * err
                ));
            }
        }
        Ok(details.join(", "))
    })());
}

#[test]
fn c4_power_trends_and_bunching_contrast() {
    criterion(4, "power trends and bunching contrast", (|| {
        let mut singles = Vec::new();
        for (p, series) in gev1_series() {
            let fit = fit_g2_series(series, None).map_err(|e| e.to_string())?;
            singles.push((
                *p,
                fit.require("a").map_err(|e| e.to_string())?,
                fit.require("tau1_ns").map_err(|e| e.to_string())?,
            ));
        }
        singles.sort_by(|x, y| x.0.total_cmp(&y.0));
        if !singles.windows(2).all(|w| w[1].2 < w[0].2) {
            return Err(format!("tau1 not strictly decreasing with power: {singles:?}"));
        }
        if !singles.windows(2).all(|w| w[1].1 > w[0].1) {
            return Err(format!("a not strictly increasing with power: {singles:?}"));
        }
        let a_gev1 = singles.last().unwrap().1;
        if a_gev1 >= 1.0 {
            return Err(format!("GeV1 bunching at 4 mW should stay below 1, got {a_gev1:.3}"));
        }

        let gev2 = simulate_series(presets::gev2(), 4.0, 0.015, 1.5, 1200.0, 0xc4_0001);
        let fit = fit_g2_series(&gev2, None).map_err(|e| e.to_string())?;
        let a_gev2 = fit.require("a").map_err(|e| e.to_string())?;
        if !(1.6..=2.4).contains(&a_gev2) {
            return Err(format!("GeV2 bunching at 4 mW should be near 2, got {a_gev2:.3}"));
        }
        Ok(format!(
            "tau1 {:.2} > {:.2} > {:.2} ns, a {:.3} < {:.3} < {:.3}, GeV2 a {:.2}",
            singles[0].2, singles[1].2, singles[2].2,
            singles[0].1, singles[1].1, singles[2].1,
            a_gev2
        ))
    })());
}

// ---------------------------------------------------------------------------
// Criterion 5: pulsed antibunching under finite purity
// ---------------------------------------------------------------------------

#[test]
fn c5_pulsed_antibunching_purity() {
    criterion(5, "pulsed antibunching purity", (|| {
        let period_ns = 100.0;
        let base = SimConfig {
            detection_efficiency: 0.1,
            rng_seed: 0xc5_0001,
            ..SimConfig::pulsed(presets::gev1(), 1.0, 2e8, period_ns, 0.9)
        };

        // Pilot run without background to measure the detected signal rate,
        // then add background for a signal purity of 0.9.
        let pilot = simulate_pulsed(&base).map_err(|e| e.to_string())?;
        let signal_ghz = pilot.channel_rate_ghz(photophys::sim::Channel::Det0)
            + pilot.channel_rate_ghz(photophys::sim::Channel::Det1);
        drop(pilot);
        let purity = 0.9;
        let config = SimConfig {
            duration_ns: 1e9,
            background_rate_ghz: signal_ghz * (1.0 - purity) / purity / 2.0,
            rng_seed: 0xc5_0002,
            ..base
        };
        let stream = simulate_pulsed(&config).map_err(|e| e.to_string())?;
        let g2_zero = pulsed_g2_zero(&stream, period_ns).map_err(|e| e.to_string())?;
        if g2_zero >= 0.5 {
            return Err(format!("pulsed g2(0) {g2_zero:.3} not below 0.5"));
        }
        if (g2_zero - 0.2).abs() > 0.05 {
            return Err(format!("pulsed g2(0) {g2_zero:.3} outside 0.2 +- 0.05"));
        }
        Ok(format!("g2(0) = {g2_zero:.3} at purity 0.9"))
    })());
}

// ---------------------------------------------------------------------------
// Criterion 6: saturation fits
// ---------------------------------------------------------------------------

#[test]
fn c6_saturation_fits() {
    criterion(6, "saturation fits", (|| {
        let mut rng = Pcg64Mcg::seed_from_u64(0xacce_0006);
        let mut details = Vec::new();
        for (i_inf, p_sat, p_max, label) in [
            (1.5e6, 0.56, 8.0, "GeV1"),
            (0.2e6, 1.5, 12.0, "GeV2"),
        ] {
            let power_mw: Vec<f64> = (0..12)
                .map(|i| 0.05 * (p_max / 0.05f64).powf(i as f64 / 11.0))
                .collect();
            let rate_hz: Vec<f64> = power_mw
                .iter()
                .map(|&p| i_inf * p / (p + p_sat) * (1.0 + 0.01 * gaussian(&mut rng)))
                .collect();
            let data = SaturationData { power_mw, rate_hz };
            let fit = fit_saturation(&data, false).map_err(|e| e.to_string())?;
            let fit_inf = fit.require("i_infinity_hz").map_err(|e| e.to_string())?;
            let fit_sat = fit.require("p_sat_mw").map_err(|e| e.to_string())?;
            if rel_err(fit_inf, i_inf) > 0.03 || rel_err(fit_sat, p_sat) > 0.03 {
                return Err(format!(
                    "{label}: I_inf {fit_inf:.3e} vs {i_inf:.3e}, P_sat {fit_sat:.3} vs {p_sat}"
                ));
            }
            details.push(format!(
                "{label} I_inf {:.0} kHz, P_sat {:.3} mW",
                fit_inf / 1e3,
                fit_sat
            ));
        }
        Ok(details.join("; "))
    })());
}

// ---------------------------------------------------------------------------
// Criterion 7: spectral fits and ensemble summary
// ---------------------------------------------------------------------------

fn synthetic_spectrum(center: f64, fwhm: f64, s: f64, rng: &mut Pcg64Mcg) -> Spectrum {
    let lorentz = |x: f64, c: f64, w: f64, area: f64| {
        let hw = w / 2.0;
        area / std::f64::consts::PI * hw / ((x - c) * (x - c) + hw * hw)
    };
    let n = 600;
    let wavelength_nm: Vec<f64> = (0..n)
        .map(|i| 570.0 + 130.0 * i as f64 / (n - 1) as f64)
        .collect();
    let zpl_area = 1.0e5;
    let psb_area = zpl_area * (s.exp() - 1.0);
    let counts = wavelength_nm
        .iter()
        .map(|&x| {
            let clean = 50.0
                + lorentz(x, center, fwhm, zpl_area)
                + lorentz(x, center + 22.0, 16.0, 0.55 * psb_area)
                + lorentz(x, center + 40.0, 24.0, 0.45 * psb_area);
            (clean + clean.sqrt() * gaussian(rng)).max(0.0)
        })
        .collect();
    Spectrum {
        wavelength_nm,
        counts,
    }
}

#[test]
fn c7_spectral_fits_and_ensemble() {
    criterion(7, "spectral fits and ensemble", (|| {
        let mut rng = Pcg64Mcg::seed_from_u64(0xacce_0007);
        for (center, fwhm, s, label) in [
            (605.5, 4.5, 0.5, "GeV1"),
            (601.5, 5.5, 0.79, "GeV2"),
        ] {
            let fit = fit_spectrum(&synthetic_spectrum(center, fwhm, s, &mut rng), 2)
                .map_err(|e| e.to_string())?;
            let got = (
                fit.require("zpl_center_nm").map_err(|e| e.to_string())?,
                fit.require("zpl_fwhm_nm").map_err(|e| e.to_string())?,
                fit.require("huang_rhys_s").map_err(|e| e.to_string())?,
            );
            if rel_err(got.0, center) > 0.02
                || rel_err(got.1, fwhm) > 0.02
                || rel_err(got.2, s) > 0.02
            {
                return Err(format!(
                    "{label}: fitted ({:.2} nm, {:.2} nm, {:.3}) vs ({center}, {fwhm}, {s})",
                    got.0, got.1, got.2
                ));
            }
        }

        // 20-emitter ensemble drawn around the reported sample means.
        let (mut drawn, mut fitted) = (Vec::new(), Vec::new());
        for _ in 0..20 {
            let center = 603.5 + 2.0 * gaussian(&mut rng);
            let fwhm = (5.2 + 0.5 * gaussian(&mut rng)).max(2.5);
            let s = (0.65 + 0.10 * gaussian(&mut rng)).clamp(0.2, 1.2);
            let fit = fit_spectrum(&synthetic_spectrum(center, fwhm, s, &mut rng), 2)
                .map_err(|e| e.to_string())?;
            drawn.push((center, fwhm, s));
            fitted.push((
                fit.require("zpl_center_nm").map_err(|e| e.to_string())?,
                fit.require("zpl_fwhm_nm").map_err(|e| e.to_string())?,
                fit.require("huang_rhys_s").map_err(|e| e.to_string())?,
            ));
        }
        let sem = [2.0 / 20f64.sqrt(), 0.5 / 20f64.sqrt(), 0.10 / 20f64.sqrt()];
        let targets = [603.5, 5.2, 0.65];
        let mut means = [0.0; 3];
        for k in 0..3 {
            let pick = |t: &(f64, f64, f64)| [t.0, t.1, t.2][k];
            let fit_mean = fitted.iter().map(pick).sum::<f64>() / fitted.len() as f64;
            let draw_mean = drawn.iter().map(pick).sum::<f64>() / drawn.len() as f64;
            means[k] = fit_mean;
            if (fit_mean - draw_mean).abs() > 0.02 * targets[k] {
                return Err(format!(
                    "ensemble mean {fit_mean:.3} drifted from generated mean {draw_mean:.3}"
                ));
            }
            if (fit_mean - targets[k]).abs() > 3.0 * sem[k] {
                return Err(format!(
                    "ensemble mean {fit_mean:.3} more than 3 SEM from {}",
                    targets[k]
                ));
            }
        }
        Ok(format!(
            "ensemble means {:.1} nm / {:.2} nm / {:.2}",
            means[0], means[1], means[2]
        ))
    })());
}

// ---------------------------------------------------------------------------
// Criterion 8: polarization visibility
// ---------------------------------------------------------------------------

#[test]
fn c8_polarization_visibility() {
    criterion(8, "polarization visibility", (|| {
        let mut rng = Pcg64Mcg::seed_from_u64(0xacce_0008);
        let visibility = 0.92;
        let beta = 1.0e5;
        let alpha = beta * (1.0 - visibility) / (2.0 * visibility);
        let angle_deg: Vec<f64> = (0..36).map(|i| 10.0 * i as f64).collect();
        let rate_hz: Vec<f64> = angle_deg
            .iter()
            .map(|&t| {
                let ideal = alpha + beta * ((t + 25.0).to_radians()).sin().powi(2);
                ideal * (1.0 + 0.01 * gaussian(&mut rng))
            })
            .collect();
        let data = PolarizationData { angle_deg, rate_hz };
        let fit = fit_polarization(&data).map_err(|e| e.to_string())?;
        let v = fit.require("visibility").map_err(|e| e.to_string())?;
        if (v - visibility).abs() > 0.02 {
            return Err(format!("visibility {v:.3} outside 0.92 +- 0.02"));
        }
        Ok(format!("V = {v:.3}"))
    })());
}

// ---------------------------------------------------------------------------
// Criterion 9: property bundle
// ---------------------------------------------------------------------------

#[test]
fn c9_property_bundle() {
    criterion(9, "property bundle", (|| {
        // Correlator vs O(N^2) oracle on a 10^4-event stream.
        let mut rng = Pcg64Mcg::seed_from_u64(0xacce_0009);
        let mut events: Vec<photophys::sim::TimeTag> = (0..10_000)
            .map(|_| photophys::sim::TimeTag {
                timestamp_ps: rng.random_range(0..5_000_000_000u64),
                channel: if rng.random::<bool>() {
                    photophys::sim::Channel::Det1
                } else {
                    photophys::sim::Channel::Det0
                },
            })
            .collect();
        events.sort();
        let stream = photophys::sim::TimeTagStream {
            events,
            duration_ps: 5_000_000_000,
            origin: None,
        };
        let (bin_ns, max_delay_ns) = (5.0, 250.0);
        let hist = correlate(&stream, bin_ns, max_delay_ns).map_err(|e| e.to_string())?;
        let half_bins = (max_delay_ns / bin_ns).ceil() as i64;
        let mut reference = vec![0u64; (2 * half_bins + 1) as usize];
        let bin_ps = bin_ns * 1000.0;
        for a in stream.events.iter().filter(|t| t.channel == photophys::sim::Channel::Det0) {
            for b in stream.events.iter().filter(|t| t.channel == photophys::sim::Channel::Det1) {
                let delay = b.timestamp_ps as i128 - a.timestamp_ps as i128;
                let offset = (delay as f64 / bin_ps).round() as i64;
                if offset.abs() <= half_bins {
                    reference[(offset + half_bins) as usize] += 1;
                }
            }
        }
        if hist.counts != reference {
            return Err("two-pointer correlator disagrees with all-pairs oracle".into());
        }

        // Analytic g2 boundary properties on random parameter sets.
        for _ in 0..200 {
            let tau1 = 10f64.powf(rng.random_range(-1.0..2.0));
            let tau2 = tau1 * 10f64.powf(rng.random_range(0.05..2.0));
            let a = 10f64.powf(rng.random_range(-3.0..1.0));
            let params = G2Parameters::new(a, tau1, tau2).map_err(|e| e.to_string())?;
            if params.evaluate(0.0).abs() > 1e-12
                || (params.evaluate(55.0 * tau2) - 1.0).abs() > 1e-6
            {
                return Err(format!("g2 boundary violation for a={a}, tau1={tau1}, tau2={tau2}"));
            }
        }

        // Vieta identities.
        for _ in 0..200 {
            let rates = RateCoefficients::new(
                10f64.powf(rng.random_range(-3.0..0.0)),
                10f64.powf(rng.random_range(-3.0..0.0)),
                10f64.powf(rng.random_range(-3.0..0.0)),
                10f64.powf(rng.random_range(-3.0..0.0)),
            )
            .map_err(|e| e.to_string())?;
            if let Ok(TimeConstants::Finite { tau1, tau2 }) = rates.time_constants() {
                let (a, b) = rates.decay_polynomial();
                if (1.0 / tau1 + 1.0 / tau2 - a).abs() > 1e-10 * a
                    || (1.0 / (tau1 * tau2) - b).abs() > 1e-10 * b
                {
                    return Err(format!("Vieta violation for {rates:?}"));
                }
            }
        }

        // Serialization round trips through real files.
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let config = SimConfig {
            detection_efficiency: 0.02,
            background_rate_ghz: 1e-5,
            rng_seed: 7,
            ..SimConfig::cw(presets::gev2(), 0.5, 2e7)
        };
        let sim = simulate_cw(&config).map_err(|e| e.to_string())?;
        let path = dir.path().join("tags.csv");
        photophys::io::write_timetags_path(&path, &sim).map_err(|e| e.to_string())?;
        if photophys::io::read_timetags_path(&path).map_err(|e| e.to_string())? != sim {
            return Err("time-tag file round trip altered the stream".into());
        }
        let model_path = dir.path().join("model.json");
        photophys::io::write_emitter_model_path(&model_path, &presets::gev1())
            .map_err(|e| e.to_string())?;
        if photophys::io::read_emitter_model_path(&model_path).map_err(|e| e.to_string())?
            != presets::gev1()
        {
            return Err("emitter model round trip altered the model".into());
        }

        // Determinism by seed.
        let again = simulate_cw(&config).map_err(|e| e.to_string())?;
        if again != sim {
            return Err("identical configs produced different streams".into());
        }
        let other = simulate_cw(&SimConfig {
            rng_seed: 8,
            ..config
        })
        .map_err(|e| e.to_string())?;
        if other == sim {
            return Err("different seeds produced identical streams".into());
        }

        Ok("correlator oracle, g2 boundaries, Vieta, file round trips, seed determinism".into())
    })());
}

// Quiet the unused-import lint when individual criteria are filtered out.
#[allow(dead_code)]
fn _keep(hist: &CorrelationHistogram) -> u64 {
    hist.total_counts()
}
