//! Command-line pipelines: simulate photon streams, correlate them into
//! g2 histograms, fit model families and render reports. Every run writes
//! a manifest that reproduces it; exit codes are 0 success, 1 usage error,
//! 2 data error, 3 fit did not converge (report still written).

mod commands;
mod manifest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum AppError {
    /// Flag combinations clap cannot express; exits 1.
    Usage(String),
    /// Anything the library rejected; exits 2.
    Lib(photophys::Error),
}

impl From<photophys::Error> for AppError {
    fn from(err: photophys::Error) -> Self {
        AppError::Lib(err)
    }
}

impl From<std::io::Error> for AppError {
    fn from(err: std::io::Error) -> Self {
        AppError::Lib(photophys::Error::Io(err))
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Usage(msg) => write!(f, "{msg}"),
            AppError::Lib(err) => write!(f, "{err}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "photophys", version, about = "Single-emitter photophysics pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a time-tag stream from an emitter model file.
    Simulate(SimulateArgs),
    /// Histogram two-channel coincidences into a normalized g2 series.
    Correlate(CorrelateArgs),
    /// Fit one model family to data files and write a fit report.
    Fit(FitArgs),
    /// Render fit reports into curve CSVs, summaries and optional SVGs.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Cw,
    Pulsed,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Normalization {
    /// Pin the long-delay plateau to 1.
    Tail,
    /// Divide by the channel rate product.
    Rate,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    G2,
    G2Global,
    Spectrum,
    Lifetime,
    Saturation,
    Polarization,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Emitter model JSON file.
    #[arg(long)]
    model: PathBuf,
    /// Excitation power in mW.
    #[arg(long)]
    power_mw: f64,
    /// Acquisition length in seconds.
    #[arg(long)]
    duration_s: f64,
    #[arg(long, value_enum, default_value_t = Mode::Cw)]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability that an emitted photon is detected at all.
    #[arg(long, default_value_t = 1.0)]
    efficiency: f64,
    /// Background rate per detector channel in MHz.
    #[arg(long, default_value_t = 0.0)]
    background_mhz: f64,
    /// Probability that a detected photon lands on channel 0.
    #[arg(long, default_value_t = 0.5)]
    splitter: f64,
    /// Pulse period in ns (pulsed mode only).
    #[arg(long, default_value_t = 100.0)]
    period_ns: f64,
    /// Excitation probability per pulse (pulsed mode only).
    #[arg(long, default_value_t = 0.9)]
    pulse_probability: f64,
    /// Output directory.
    #[arg(long, env = "PHOTOPHYS_OUT")]
    out: PathBuf,
}

#[derive(Args)]
pub struct CorrelateArgs {
    /// Time-tag CSV file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Histogram bin width in ns.
    #[arg(long)]
    bin_ns: f64,
    /// Largest delay magnitude in ns.
    #[arg(long)]
    max_delay_ns: f64,
    #[arg(long, value_enum, default_value_t = Normalization::Tail)]
    normalize: Normalization,
    /// Override the tail window start in ns (with --tail-to-ns).
    #[arg(long)]
    tail_from_ns: Option<f64>,
    /// Override the tail window end in ns (with --tail-from-ns).
    #[arg(long)]
    tail_to_ns: Option<f64>,
    /// Output directory.
    #[arg(long, env = "PHOTOPHYS_OUT")]
    out: PathBuf,
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    family: Family,
    /// Input data files; g2-global takes one g2 CSV per power.
    #[arg(long = "in", required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Excitation power per input in mW, same order (g2-global; optional
    /// single value for g2 together with --init).
    #[arg(long)]
    power_mw: Vec<f64>,
    /// Emitter model JSON used as the starting point (g2, g2-global).
    #[arg(long)]
    init: Option<PathBuf>,
    /// Number of phonon-sideband peaks besides the ZPL (spectrum).
    #[arg(long, default_value_t = 2)]
    psb_peaks: usize,
    /// Add a linear background term (saturation).
    #[arg(long)]
    background: bool,
    /// Pulse period in ns (lifetime).
    #[arg(long, default_value_t = 100.0)]
    period_ns: f64,
    /// Decay histogram bin width in ns (lifetime).
    #[arg(long, default_value_t = 0.2)]
    bin_ns: f64,
    /// Output directory.
    #[arg(long, env = "PHOTOPHYS_OUT")]
    out: PathBuf,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Fit report JSON files.
    #[arg(long = "in", required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Also render each curve as an SVG.
    #[arg(long)]
    svg: bool,
    /// Output directory.
    #[arg(long, env = "PHOTOPHYS_OUT")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // Help goes to stdout, usage errors to stderr, per clap.
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Simulate(args) => commands::simulate(&args, &argv),
        Command::Correlate(args) => commands::correlate(&args, &argv),
        Command::Fit(args) => commands::fit(&args, &argv),
        Command::Report(args) => report::report(&args, &argv),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                AppError::Usage(_) => ExitCode::from(1),
                AppError::Lib(_) => ExitCode::from(2),
            }
        }
    }
}
