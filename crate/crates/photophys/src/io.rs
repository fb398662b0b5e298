//! File formats: time-tag CSV, measurement-series CSVs, emitter-model JSON
//! and fit-report JSON.
//!
//! All CSV files use `#`-prefixed comment preambles and mandatory headers
//! whose column names carry units. Readers reject files whose header does
//! not match the expected schema and report parse failures with 1-based
//! line numbers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::correlator::G2Series;
use crate::error::{Error, Result};
use crate::fit::saturation::SaturationData;
use crate::fit::polarization::PolarizationData;
use crate::fit::spectrum::Spectrum;
use crate::fit::FitResult;
use crate::rates::EmitterModel;
use crate::sim::{Channel, SimConfig, TimeTag, TimeTagStream, RNG_ALGORITHM};

pub const SCHEMA_VERSION: u32 = 1;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(line: usize, field: &str, text: &str) -> Result<f64> {
    let value: f64 = text
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {field}: {text:?}")))?;
    if !value.is_finite() {
        return Err(parse_err(line, format!("non-finite {field}: {text:?}")));
    }
    Ok(value)
}

/// Splits a CSV body line; the formats here never quote fields.
fn split_columns(line: usize, text: &str, n: usize) -> Result<Vec<&str>> {
    let fields: Vec<&str> = text.split(',').collect();
    if fields.len() != n {
        return Err(parse_err(
            line,
            format!("expected {n} columns, got {}", fields.len()),
        ));
    }
    Ok(fields)
}

struct CsvReader<R: BufRead> {
    inner: R,
    line: usize,
    comments: Vec<String>,
    header: Option<String>,
}

impl<R: BufRead> CsvReader<R> {
    fn new(inner: R) -> Self {
        Self {
            inner,
            line: 0,
            comments: Vec::new(),
            header: None,
        }
    }

    /// Next non-comment, non-blank line, collecting preamble comments.
    fn next_line(&mut self) -> Result<Option<(usize, String)>> {
        loop {
            let mut buf = String::new();
            if self.inner.read_line(&mut buf)? == 0 {
                return Ok(None);
            }
            self.line += 1;
            let text = buf.trim_end_matches(['\r', '\n']);
            if text.trim().is_empty() {
                continue;
            }
            if let Some(comment) = text.strip_prefix('#') {
                self.comments.push(comment.trim().to_string());
                continue;
            }
            return Ok(Some((self.line, text.to_string())));
        }
    }

    fn expect_header(&mut self, expected: &str) -> Result<()> {
        match self.next_line()? {
            Some((_, text)) if text.trim() == expected => {
                self.header = Some(text);
                Ok(())
            }
            Some((line, text)) => Err(parse_err(
                line,
                format!("expected header {expected:?}, got {text:?}"),
            )),
            None => Err(Error::Schema(format!(
                "file ended before header {expected:?}"
            ))),
        }
    }

    fn comment_value(&self, key: &str) -> Option<&str> {
        let prefix = format!("{key}=");
        self.comments
            .iter()
            .find_map(|c| c.strip_prefix(prefix.as_str()))
    }
}

fn preamble(out: &mut impl Write, kind: &str) -> Result<()> {
    writeln!(out, "# photophys {kind} schema_version={SCHEMA_VERSION}")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Time tags
// ---------------------------------------------------------------------------

const TIMETAG_HEADER: &str = "channel,timestamp_ps";

pub fn write_timetags(out: &mut impl Write, stream: &TimeTagStream) -> Result<()> {
    let mut out = BufWriter::new(out);
    preamble(&mut out, "timetags")?;
    writeln!(out, "# duration_ps={}", stream.duration_ps)?;
    if let Some(origin) = &stream.origin {
        writeln!(out, "# rng_algorithm={RNG_ALGORITHM}")?;
        writeln!(out, "# origin={}", serde_json::to_string(origin)?)?;
    }
    writeln!(out, "{TIMETAG_HEADER}")?;
    for tag in &stream.events {
        let channel = match tag.channel {
            Channel::Det0 => "0",
            Channel::Det1 => "1",
            Channel::Sync => "sync",
        };
        writeln!(out, "{},{}", channel, tag.timestamp_ps)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_timetags(input: impl Read) -> Result<TimeTagStream> {
    let mut reader = CsvReader::new(BufReader::new(input));
    reader.expect_header(TIMETAG_HEADER)?;

    let mut events: Vec<TimeTag> = Vec::new();
    let mut last_ps = 0u64;
    while let Some((line, text)) = reader.next_line()? {
        let fields = split_columns(line, &text, 2)?;
        let channel = match fields[0].trim() {
            "0" => Channel::Det0,
            "1" => Channel::Det1,
            "sync" => Channel::Sync,
            other => {
                return Err(parse_err(
                    line,
                    format!("channel must be 0, 1 or sync, got {other:?}"),
                ))
            }
        };
        let timestamp_ps: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("invalid timestamp_ps: {:?}", fields[1])))?;
        if timestamp_ps < last_ps {
            return Err(parse_err(
                line,
                format!("timestamps must be non-decreasing: {timestamp_ps} after {last_ps}"),
            ));
        }
        last_ps = timestamp_ps;
        events.push(TimeTag {
            timestamp_ps,
            channel,
        });
    }

    let duration_ps = match reader.comment_value("duration_ps") {
        Some(text) => text
            .parse()
            .map_err(|_| Error::Schema(format!("invalid duration_ps comment: {text:?}")))?,
        None => last_ps,
    };
    let origin: Option<SimConfig> = match reader.comment_value("origin") {
        Some(text) => Some(serde_json::from_str(text)?),
        None => None,
    };
    let stream = TimeTagStream {
        events,
        duration_ps,
        origin,
    };
    stream.validate()?;
    Ok(stream)
}

// ---------------------------------------------------------------------------
// Measurement series
// ---------------------------------------------------------------------------

const G2_HEADER: &str = "tau_ns,g2,sigma";
const SPECTRUM_HEADER: &str = "wavelength_nm,counts";
const SATURATION_HEADER: &str = "power_mW,rate_Hz";
const POLARIZATION_HEADER: &str = "angle_deg,rate_Hz";

pub fn write_g2_series(out: &mut impl Write, series: &G2Series) -> Result<()> {
    let mut out = BufWriter::new(out);
    preamble(&mut out, "g2")?;
    writeln!(out, "{G2_HEADER}")?;
    for i in 0..series.len() {
        writeln!(
            out,
            "{},{},{}",
            series.tau_ns[i], series.g2[i], series.sigma[i]
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_g2_series(input: impl Read) -> Result<G2Series> {
    let mut reader = CsvReader::new(BufReader::new(input));
    reader.expect_header(G2_HEADER)?;
    let mut series = G2Series::default();
    while let Some((line, text)) = reader.next_line()? {
        let fields = split_columns(line, &text, 3)?;
        series.push(
            parse_f64(line, "tau_ns", fields[0])?,
            parse_f64(line, "g2", fields[1])?,
            parse_f64(line, "sigma", fields[2])?,
        );
    }
    series.validate()?;
    Ok(series)
}

fn read_pairs(input: impl Read, header: &str) -> Result<Vec<(f64, f64)>> {
    let mut reader = CsvReader::new(BufReader::new(input));
    reader.expect_header(header)?;
    let (first, second) = header.split_once(',').expect("two-column header");
    let mut rows = Vec::new();
    while let Some((line, text)) = reader.next_line()? {
        let fields = split_columns(line, &text, 2)?;
        rows.push((
            parse_f64(line, first, fields[0])?,
            parse_f64(line, second, fields[1])?,
        ));
    }
    Ok(rows)
}

fn write_pairs<'a>(
    out: &mut impl Write,
    kind: &str,
    header: &str,
    rows: impl Iterator<Item = (&'a f64, &'a f64)>,
) -> Result<()> {
    let mut out = BufWriter::new(out);
    preamble(&mut out, kind)?;
    writeln!(out, "{header}")?;
    for (a, b) in rows {
        writeln!(out, "{a},{b}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_spectrum(out: &mut impl Write, spectrum: &Spectrum) -> Result<()> {
    write_pairs(
        out,
        "spectrum",
        SPECTRUM_HEADER,
        spectrum.wavelength_nm.iter().zip(&spectrum.counts),
    )
}

pub fn read_spectrum(input: impl Read) -> Result<Spectrum> {
    let rows = read_pairs(input, SPECTRUM_HEADER)?;
    let spectrum = Spectrum {
        wavelength_nm: rows.iter().map(|r| r.0).collect(),
        counts: rows.iter().map(|r| r.1).collect(),
    };
    spectrum.validate()?;
    Ok(spectrum)
}

pub fn write_saturation(out: &mut impl Write, data: &SaturationData) -> Result<()> {
    write_pairs(
        out,
        "saturation",
        SATURATION_HEADER,
        data.power_mw.iter().zip(&data.rate_hz),
    )
}

pub fn read_saturation(input: impl Read) -> Result<SaturationData> {
    let rows = read_pairs(input, SATURATION_HEADER)?;
    let data = SaturationData {
        power_mw: rows.iter().map(|r| r.0).collect(),
        rate_hz: rows.iter().map(|r| r.1).collect(),
    };
    data.validate()?;
    Ok(data)
}

pub fn write_polarization(out: &mut impl Write, data: &PolarizationData) -> Result<()> {
    write_pairs(
        out,
        "polarization",
        POLARIZATION_HEADER,
        data.angle_deg.iter().zip(&data.rate_hz),
    )
}

pub fn read_polarization(input: impl Read) -> Result<PolarizationData> {
    let rows = read_pairs(input, POLARIZATION_HEADER)?;
    let data = PolarizationData {
        angle_deg: rows.iter().map(|r| r.0).collect(),
        rate_hz: rows.iter().map(|r| r.1).collect(),
    };
    data.validate()?;
    Ok(data)
}

// ---------------------------------------------------------------------------
// JSON documents
// ---------------------------------------------------------------------------

pub fn write_emitter_model(out: &mut impl Write, model: &EmitterModel) -> Result<()> {
    model.validate()?;
    serde_json::to_writer_pretty(&mut *out, model)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_emitter_model(input: impl Read) -> Result<EmitterModel> {
    let model: EmitterModel = serde_json::from_reader(input)?;
    model.validate()?;
    Ok(model)
}

/// One input consumed by a fit, identified by content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// Fit result plus enough provenance to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub generator: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub created_utc: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub inputs: Vec<InputRecord>,
    pub fit: FitResult,
}

impl FitReport {
    pub fn new(fit: FitResult) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            generator: format!("photophys {}", env!("CARGO_PKG_VERSION")),
            created_utc: None,
            command: None,
            inputs: Vec::new(),
            fit,
        }
    }
}

pub fn write_fit_report(out: &mut impl Write, report: &FitReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, report)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_fit_report(input: impl Read) -> Result<FitReport> {
    let report: FitReport = serde_json::from_reader(input)?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "unsupported fit report schema_version {}",
            report.schema_version
        )));
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Path-based convenience wrappers
// ---------------------------------------------------------------------------

macro_rules! path_wrappers {
    ($read_fn:ident, $write_fn:ident, $read_path:ident, $write_path:ident, $ty:ty) => {
        pub fn $read_path(path: impl AsRef<Path>) -> Result<$ty> {
            $read_fn(File::open(path)?)
        }

        pub fn $write_path(path: impl AsRef<Path>, value: &$ty) -> Result<()> {
            let mut file = File::create(path)?;
            $write_fn(&mut file, value)
        }
    };
}

path_wrappers!(
    read_timetags,
    write_timetags,
    read_timetags_path,
    write_timetags_path,
    TimeTagStream
);
path_wrappers!(
    read_g2_series,
    write_g2_series,
    read_g2_series_path,
    write_g2_series_path,
    G2Series
);
path_wrappers!(
    read_spectrum,
    write_spectrum,
    read_spectrum_path,
    write_spectrum_path,
    Spectrum
);
path_wrappers!(
    read_saturation,
    write_saturation,
    read_saturation_path,
    write_saturation_path,
    SaturationData
);
path_wrappers!(
    read_polarization,
    write_polarization,
    read_polarization_path,
    write_polarization_path,
    PolarizationData
);
path_wrappers!(
    read_emitter_model,
    write_emitter_model,
    read_emitter_model_path,
    write_emitter_model_path,
    EmitterModel
);
path_wrappers!(
    read_fit_report,
    write_fit_report,
    read_fit_report_path,
    write_fit_report_path,
    FitReport
);
