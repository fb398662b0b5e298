//! The report subcommand: renders fit reports into plot-ready artifacts.
//! Each report yields dense model-curve CSVs spanning the fitted data, one
//! row in `summary.csv`, per-parameter rows in `parameters.csv`, an
//! ensemble table over spectrum reports and optional SVG renderings.

use std::fmt::Write as _;
use std::path::Path;

use photophys::fit::FitFamily;
use photophys::io::{self, FitReport};

use crate::manifest::{hash_input, write_run, RunManifest};
use crate::{AppError, ReportArgs};

const CURVE_POINTS: usize = 500;

struct Curve {
    file_stem: String,
    /// CSV column names, x then y.
    header: String,
    model: Vec<(f64, f64)>,
    data: Vec<(f64, f64)>,
}

fn family_name(family: FitFamily) -> &'static str {
    match family {
        FitFamily::G2Single => "g2",
        FitFamily::G2Global => "g2_global",
        FitFamily::Spectrum => "spectrum",
        FitFamily::Lifetime => "lifetime",
        FitFamily::Saturation => "saturation",
        FitFamily::Polarization => "polarization",
    }
}

fn sample(range: (f64, f64), f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    (0..CURVE_POINTS)
        .map(|i| {
            let x = range.0 + (range.1 - range.0) * i as f64 / (CURVE_POINTS - 1) as f64;
            (x, f(x))
        })
        .collect()
}

/// Reads overlay points from the first recorded input of the fit, if it is
/// still readable; reports run fine without the original data.
fn overlay<T>(
    report: &FitReport,
    read: impl Fn(&Path) -> photophys::Result<T>,
    points: impl Fn(T) -> Vec<(f64, f64)>,
) -> Vec<(f64, f64)> {
    let Some(record) = report.inputs.first() else {
        return Vec::new();
    };
    match read(Path::new(&record.path)) {
        Ok(data) => points(data),
        Err(err) => {
            eprintln!(
                "warning: cannot overlay data from {}: {err}",
                record.path
            );
            Vec::new()
        }
    }
}

fn span(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, _) in points {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo < hi).then_some((lo, hi))
}

fn curves(index: usize, report: &FitReport) -> Result<Vec<Curve>, AppError> {
    let fit = &report.fit;
    let stem = format!("curve_{index:02}");
    let curves = match fit.family {
        FitFamily::G2Single => {
            let (a, tau1, tau2) = (
                fit.require("a")?,
                fit.require("tau1_ns")?,
                fit.require("tau2_ns")?,
            );
            let data = overlay(report, |p: &Path| io::read_g2_series_path(p), |s| {
                s.tau_ns.iter().copied().zip(s.g2.iter().copied()).collect()
            });
            let range = span(&data).unwrap_or((-10.0 * tau2, 10.0 * tau2));
            vec![Curve {
                file_stem: stem,
                header: "tau_ns,g2".into(),
                model: sample(range, |t| {
                    let t = t.abs();
                    1.0 - (1.0 + a) * (-t / tau1).exp() + a * (-t / tau2).exp()
                }),
                data,
            }]
        }
        FitFamily::G2Global => {
            let mut out = Vec::new();
            let powers: Vec<f64> = fit
                .derived
                .iter()
                .filter_map(|p| {
                    p.name
                        .strip_prefix("a@")
                        .and_then(|s| s.strip_suffix("mW"))
                        .and_then(|s| s.parse().ok())
                })
                .collect();
            for (j, &power) in powers.iter().enumerate() {
                let a = fit.require(&format!("a@{power}mW"))?;
                let tau1 = fit.require(&format!("tau1_ns@{power}mW"))?;
                let tau2 = fit.require(&format!("tau2_ns@{power}mW"))?;
                let data = match report.inputs.get(j) {
                    Some(record) => match io::read_g2_series_path(Path::new(&record.path)) {
                        Ok(s) => s.tau_ns.iter().copied().zip(s.g2.iter().copied()).collect(),
                        Err(_) => Vec::new(),
                    },
                    None => Vec::new(),
                };
                let range = span(&data).unwrap_or((-10.0 * tau2, 10.0 * tau2));
                out.push(Curve {
                    file_stem: format!("{stem}_{power}mW"),
                    header: "tau_ns,g2".into(),
                    model: sample(range, |t| {
                        let t = t.abs();
                        1.0 - (1.0 + a) * (-t / tau1).exp() + a * (-t / tau2).exp()
                    }),
                    data,
                });
            }
            out
        }
        FitFamily::Lifetime => {
            let (offset, amplitude, tau) = (
                fit.require("offset_counts")?,
                fit.require("amplitude_counts")?,
                fit.require("tau_ns")?,
            );
            vec![Curve {
                file_stem: stem,
                header: "delay_ns,counts".into(),
                model: sample((0.0, 12.0 * tau), |t| offset + amplitude * (-t / tau).exp()),
                data: Vec::new(),
            }]
        }
        FitFamily::Saturation => {
            let (i_inf, p_sat) = (fit.require("i_infinity_hz")?, fit.require("p_sat_mw")?);
            let slope = fit.value("background_hz_per_mw").unwrap_or(0.0);
            let data = overlay(report, |p: &Path| io::read_saturation_path(p), |d| {
                d.power_mw.iter().copied().zip(d.rate_hz).collect()
            });
            let range = span(&data).unwrap_or((0.0, 10.0 * p_sat));
            vec![Curve {
                file_stem: stem,
                header: "power_mW,rate_Hz".into(),
                model: sample(range, |p| i_inf * p / (p + p_sat) + slope * p),
                data,
            }]
        }
        FitFamily::Polarization => {
            let (alpha, beta, phi) = (
                fit.require("alpha_hz")?,
                fit.require("beta_hz")?,
                fit.require("phi_deg")?,
            );
            let data = overlay(report, |p: &Path| io::read_polarization_path(p), |d| {
                d.angle_deg.iter().copied().zip(d.rate_hz).collect()
            });
            vec![Curve {
                file_stem: stem,
                header: "angle_deg,rate_Hz".into(),
                model: sample((0.0, 360.0), |t| {
                    alpha + beta * (t + phi).to_radians().sin().powi(2)
                }),
                data,
            }]
        }
        FitFamily::Spectrum => {
            let baseline = fit.require("baseline_counts")?;
            let mut peaks = Vec::new();
            for k in 0.. {
                let Some(center) = fit.value(&format!("center_{k}_nm")) else {
                    break;
                };
                peaks.push((
                    center,
                    fit.require(&format!("fwhm_{k}_nm"))?,
                    fit.require(&format!("area_{k}"))?,
                ));
            }
            let data = overlay(report, |p: &Path| io::read_spectrum_path(p), |s| {
                s.wavelength_nm.iter().copied().zip(s.counts).collect()
            });
            let range = span(&data).unwrap_or_else(|| {
                let lo = peaks.iter().map(|p| p.0 - 5.0 * p.1).fold(f64::INFINITY, f64::min);
                let hi = peaks.iter().map(|p| p.0 + 5.0 * p.1).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            });
            vec![Curve {
                file_stem: stem,
                header: "wavelength_nm,counts".into(),
                model: sample(range, |x| {
                    baseline
                        + peaks
                            .iter()
                            .map(|&(c, fwhm, area)| {
                                let hw = fwhm / 2.0;
                                area / std::f64::consts::PI * hw / ((x - c) * (x - c) + hw * hw)
                            })
                            .sum::<f64>()
                }),
                data,
            }]
        }
    };
    Ok(curves)
}

fn curve_csv(curve: &Curve, source: &Path) -> Vec<u8> {
    let mut s = String::new();
    let _ = writeln!(s, "# photophys report curve");
    let _ = writeln!(s, "# source={}", source.display());
    let _ = writeln!(s, "{}", curve.header);
    for &(x, y) in &curve.model {
        let _ = writeln!(s, "{x},{y}");
    }
    s.into_bytes()
}

fn render_svg(curve: &Curve) -> Vec<u8> {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const ML: f64 = 66.0;
    const MR: f64 = 18.0;
    const MT: f64 = 18.0;
    const MB: f64 = 48.0;

    let all = curve.model.iter().chain(&curve.data);
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 >= x1 || !x1.is_finite() {
        x1 = x0 + 1.0;
    }
    if y0 >= y1 || !y1.is_finite() {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let px = |x: f64| ML + (x - x0) / (x1 - x0) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - y0) / (y1 - y0) * (H - MT - MB);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"13\">"
    );
    let _ = writeln!(
        s,
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>",
        W - ML - MR,
        H - MT - MB
    );
    let (xlabel, ylabel) = curve.header.split_once(',').unwrap_or(("x", "y"));
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{xlabel}</text>",
        (ML + W - MR) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{ylabel}</text>",
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0
    );
    for (value, anchor, x, y) in [
        (x0, "start", ML, H - MB + 18.0),
        (x1, "end", W - MR, H - MB + 18.0),
        (y0, "end", ML - 6.0, H - MB),
        (y1, "end", ML - 6.0, MT + 10.0),
    ] {
        let _ = writeln!(
            s,
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\">{value:.4}</text>"
        );
    }
    for &(x, y) in &curve.data {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"none\" stroke=\"#888\"/>",
            px(x),
            py(y)
        );
    }
    let points: Vec<String> = curve
        .model
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();
    let _ = writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#c33\" stroke-width=\"1.5\"/>",
        points.join(" ")
    );
    let _ = writeln!(s, "</svg>");
    s.into_bytes()
}

pub fn report(args: &ReportArgs, argv: &[String]) -> Result<u8, AppError> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut inputs = Vec::new();
    let mut summary =
        String::from("index,source,family,converged,iterations,reduced_chi2,n_points,parameters\n");
    let mut parameters = String::from(
        "index,source,family,name,value,unit,standard_error,unidentifiable\n",
    );
    let mut spectra: Vec<(f64, f64, f64)> = Vec::new();

    for (index, path) in args.input.iter().enumerate() {
        let report = io::read_fit_report_path(path)?;
        inputs.push(hash_input(path)?);
        let fit = &report.fit;
        let family = family_name(fit.family);
        let source = path.display();

        let mut compact = Vec::new();
        for p in fit.parameters.iter().chain(&fit.derived) {
            let se = p.standard_error.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(
                parameters,
                "{index},{source},{family},{name},{value},{unit},{se},{unid}",
                name = p.name,
                value = p.value,
                unit = p.unit,
                unid = p.unidentifiable,
            );
            compact.push(match p.standard_error {
                Some(e) => format!("{}={}+-{e:.3e}", p.name, p.value),
                None => format!("{}={}", p.name, p.value),
            });
        }
        let _ = writeln!(
            summary,
            "{index},{source},{family},{converged},{iterations},{chi2},{n},\"{params}\"",
            converged = fit.convergence.converged,
            iterations = fit.convergence.iterations,
            chi2 = fit.reduced_chi2,
            n = fit.n_points,
            params = compact.join("; "),
        );

        if fit.family == FitFamily::Spectrum {
            if let (Some(c), Some(w), Some(s)) = (
                fit.value("zpl_center_nm"),
                fit.value("zpl_fwhm_nm"),
                fit.value("huang_rhys_s"),
            ) {
                spectra.push((c, w, s));
            }
        }

        for curve in curves(index, &report)? {
            files.push((format!("{}.csv", curve.file_stem), curve_csv(&curve, path)));
            if args.svg {
                files.push((format!("{}.svg", curve.file_stem), render_svg(&curve)));
            }
        }
    }

    if spectra.len() >= 2 {
        let n = spectra.len() as f64;
        let mut ensemble = String::from("metric,n,mean,std\n");
        for (label, values) in [
            ("zpl_center_nm", spectra.iter().map(|t| t.0).collect::<Vec<_>>()),
            ("zpl_fwhm_nm", spectra.iter().map(|t| t.1).collect()),
            ("huang_rhys_s", spectra.iter().map(|t| t.2).collect()),
        ] {
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            let _ = writeln!(ensemble, "{label},{},{mean},{}", spectra.len(), var.sqrt());
        }
        files.push(("ensemble.csv".into(), ensemble.into_bytes()));
    }

    files.push(("summary.csv".into(), summary.into_bytes()));
    files.push(("parameters.csv".into(), parameters.into_bytes()));
    let manifest = RunManifest::new("report", argv, inputs, None);
    write_run(&args.out, &files, &manifest)?;
    Ok(0)
}
