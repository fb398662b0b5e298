//! The simulate, correlate and fit subcommands.

use std::path::Path;

use chrono::Utc;
use photophys::correlator::{correlate as correlate_stream, decay_histogram, normalize, NormalizationMode};
use photophys::fit::{
    fit_g2_global, fit_g2_series, fit_lifetime, fit_polarization, fit_saturation, fit_spectrum,
    FitResult, PowerEntry, PowerSeries,
};
use photophys::io;
use photophys::sim::{simulate_cw, simulate_pulsed, SimConfig};
use photophys::Error;

use crate::manifest::{hash_input, write_run, RunManifest};
use crate::{AppError, CorrelateArgs, Family, FitArgs, Mode, Normalization, SimulateArgs};

fn usage(msg: impl Into<String>) -> AppError {
    AppError::Usage(msg.into())
}

pub fn simulate(args: &SimulateArgs, argv: &[String]) -> Result<u8, AppError> {
    let model = io::read_emitter_model_path(&args.model)?;
    let mut config = match args.mode {
        Mode::Cw => SimConfig::cw(model, args.power_mw, args.duration_s * 1e9),
        Mode::Pulsed => SimConfig::pulsed(
            model,
            args.power_mw,
            args.duration_s * 1e9,
            args.period_ns,
            args.pulse_probability,
        ),
    };
    config.detection_efficiency = args.efficiency;
    config.background_rate_ghz = args.background_mhz * 1e-3;
    config.splitter_ratio = args.splitter;
    config.rng_seed = args.seed;
    if args.efficiency == 0.0 {
        eprintln!("warning: detection efficiency is 0; no emitter photons will be recorded");
    }

    let stream = match args.mode {
        Mode::Cw => simulate_cw(&config)?,
        Mode::Pulsed => simulate_pulsed(&config)?,
    };
    let mut csv = Vec::new();
    io::write_timetags(&mut csv, &stream)?;

    let manifest = RunManifest::new(
        "simulate",
        argv,
        vec![hash_input(&args.model)?],
        Some(args.seed),
    );
    write_run(&args.out, &[("timetags.csv".into(), csv)], &manifest)?;
    Ok(0)
}

pub fn correlate(args: &CorrelateArgs, argv: &[String]) -> Result<u8, AppError> {
    let window = match (args.tail_from_ns, args.tail_to_ns) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => {
            return Err(usage(
                "--tail-from-ns and --tail-to-ns must be given together",
            ))
        }
    };
    if window.is_some() && args.normalize != Normalization::Tail {
        return Err(usage("a tail window only applies to --normalize tail"));
    }

    let stream = io::read_timetags_path(&args.input)?;
    let hist = correlate_stream(&stream, args.bin_ns, args.max_delay_ns)?;
    drop(stream);
    let mode = match args.normalize {
        Normalization::Tail => NormalizationMode::TailPlateau,
        Normalization::Rate => NormalizationMode::RateProduct,
    };
    let hist = normalize(&hist, mode, window)?;
    let mut csv = Vec::new();
    io::write_g2_series(&mut csv, &hist.to_series()?)?;

    let manifest = RunManifest::new("correlate", argv, vec![hash_input(&args.input)?], None);
    write_run(&args.out, &[("g2.csv".into(), csv)], &manifest)?;
    Ok(0)
}

fn run_fit(args: &FitArgs) -> Result<FitResult, AppError> {
    let one_input = || -> Result<&Path, AppError> {
        match args.input.as_slice() {
            [path] => Ok(path),
            _ => Err(usage("this family takes exactly one --in file")),
        }
    };
    match args.family {
        Family::G2 => {
            let series = io::read_g2_series_path(one_input()?)?;
            let initial = match (&args.init, args.power_mw.as_slice()) {
                (None, []) => None,
                (Some(path), [power]) => {
                    let model = io::read_emitter_model_path(path)?;
                    let params = model.rates_at_power(*power)?.g2_parameters()?;
                    Some((params.a, params.tau1, params.tau2))
                }
                _ => {
                    return Err(usage(
                        "g2 takes --init together with exactly one --power-mw, or neither",
                    ))
                }
            };
            Ok(fit_g2_series(&series, initial)?)
        }
        Family::G2Global => {
            if args.power_mw.len() != args.input.len() {
                return Err(usage(format!(
                    "g2-global needs one --power-mw per --in file, got {} powers for {} files",
                    args.power_mw.len(),
                    args.input.len()
                )));
            }
            let entries = args
                .input
                .iter()
                .zip(&args.power_mw)
                .map(|(path, &power_mw)| {
                    Ok(PowerEntry {
                        power_mw,
                        series: io::read_g2_series_path(path)?,
                    })
                })
                .collect::<Result<Vec<_>, Error>>()?;
            let initial = args
                .init
                .as_ref()
                .map(io::read_emitter_model_path)
                .transpose()?;
            Ok(fit_g2_global(&PowerSeries { entries }, initial)?)
        }
        Family::Spectrum => {
            let spectrum = io::read_spectrum_path(one_input()?)?;
            Ok(fit_spectrum(&spectrum, args.psb_peaks)?)
        }
        Family::Lifetime => {
            let stream = io::read_timetags_path(one_input()?)?;
            let hist = decay_histogram(&stream, args.period_ns, args.bin_ns)?;
            Ok(fit_lifetime(&hist)?)
        }
        Family::Saturation => {
            let data = io::read_saturation_path(one_input()?)?;
            Ok(fit_saturation(&data, args.background)?)
        }
        Family::Polarization => {
            let data = io::read_polarization_path(one_input()?)?;
            Ok(fit_polarization(&data)?)
        }
    }
}

pub fn fit(args: &FitArgs, argv: &[String]) -> Result<u8, AppError> {
    if args.init.is_some() && !matches!(args.family, Family::G2 | Family::G2Global) {
        return Err(usage("--init only applies to the g2 and g2-global families"));
    }
    let result = run_fit(args)?;
    let converged = result.convergence.converged;

    let inputs = args
        .input
        .iter()
        .map(|p| hash_input(p))
        .collect::<Result<Vec<_>, Error>>()?;
    let mut report = io::FitReport::new(result);
    report.created_utc = Some(Utc::now().to_rfc3339());
    report.command = Some(argv.join(" "));
    report.inputs = inputs.clone();
    let mut json = Vec::new();
    io::write_fit_report(&mut json, &report)?;

    let manifest = RunManifest::new("fit", argv, inputs, None);
    write_run(&args.out, &[("fit.json".into(), json)], &manifest)?;

    if converged {
        Ok(0)
    } else {
        eprintln!("warning: fit did not converge; report written with converged=false");
        Ok(3)
    }
}
