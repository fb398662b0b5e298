//! Coincidence histograms from time-tag streams.
//!
//! [`correlate`] builds the full symmetric cross-correlation between the
//! two detector channels (every pair within the delay window, not
//! start-stop, which would distort the histogram beyond the mean
//! inter-arrival time). Bins are centered on zero delay: bin j of 2m+1
//! covers [(j-m-1/2)w, (j-m+1/2)w) for bin width w, so the dip sits in the
//! middle bin and mirrored streams give mirrored histograms.
//!
//! Normalization either pins the long-delay plateau to 1 (`TailPlateau`)
//! or divides by the accidental-coincidence level r0*r1*w*T
//! (`RateProduct`). Pulsed streams get [`pulsed_g2_zero`] for the
//! center-to-side peak ratio and [`decay_histogram`] for delays since the
//! last sync marker.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Channel, TimeTagStream};

/// How a raw coincidence histogram is scaled to a g2 estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Divide by the mean count of the outer-delay plateau.
    TailPlateau,
    /// Divide by the accidental level from channel rates and duration.
    RateProduct,
}

/// Applied normalization, kept so counts can be mapped to g2 and back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mode: NormalizationMode,
    /// Counts-per-bin divisor.
    pub factor: f64,
    /// Absolute-delay window used by `TailPlateau`, in ns.
    pub tail_window_ns: Option<(f64, f64)>,
}

/// Binned cross-correlation between detector channels 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationHistogram {
    pub bin_width_ns: f64,
    /// Raw pair counts; length is odd, the middle bin is centered on zero
    /// delay.
    pub counts: Vec<u64>,
    /// g2 estimate per bin, present after normalization.
    pub normalized: Option<Vec<f64>>,
    /// Standard error per bin (sqrt of counts through the normalization).
    pub sigma: Option<Vec<f64>>,
    pub normalization: Option<Normalization>,
    /// Channel totals and duration of the source stream, for the
    /// rate-product normalization.
    pub events_ch0: u64,
    pub events_ch1: u64,
    pub duration_ns: f64,
}

impl CorrelationHistogram {
    /// Bins on each side of the center bin.
    pub fn half_bins(&self) -> usize {
        self.counts.len() / 2
    }

    /// Delay at the center of bin `index`, in ns.
    pub fn bin_center_ns(&self, index: usize) -> f64 {
        (index as f64 - self.half_bins() as f64) * self.bin_width_ns
    }

    /// Outermost bin-center delay, in ns.
    pub fn max_delay_ns(&self) -> f64 {
        self.half_bins() as f64 * self.bin_width_ns
    }

    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_counts() == 0
    }

    /// Normalized points (tau, g2, sigma) ready for fitting or export.
    /// Zero-count bins get the sqrt(count + 1) uncertainty so weights stay
    /// finite.
    pub fn to_series(&self) -> Result<G2Series> {
        let (normalized, normalization) = match (&self.normalized, &self.normalization) {
            (Some(n), Some(info)) => (n, info),
            _ => {
                return Err(Error::Normalization(
                    "histogram must be normalized before export".into(),
                ))
            }
        };
        let mut series = G2Series::with_capacity(self.counts.len());
        for (j, (&c, &g2)) in self.counts.iter().zip(normalized).enumerate() {
            let sigma = (c.max(1) as f64).sqrt() / normalization.factor;
            series.push(self.bin_center_ns(j), g2, sigma);
        }
        Ok(series)
    }
}

/// Plain (tau, g2, sigma) points, the exchange format between correlator,
/// fitters and disk.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct G2Series {
    pub tau_ns: Vec<f64>,
    pub g2: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl G2Series {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            tau_ns: Vec::with_capacity(n),
            g2: Vec::with_capacity(n),
            sigma: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, tau_ns: f64, g2: f64, sigma: f64) {
        self.tau_ns.push(tau_ns);
        self.g2.push(g2);
        self.sigma.push(sigma);
    }

    pub fn len(&self) -> usize {
        self.tau_ns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_ns.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.g2.len() != self.tau_ns.len() || self.sigma.len() != self.tau_ns.len() {
            return Err(Error::Data("g2 series columns differ in length".into()));
        }
        if self.sigma.iter().any(|&s| !s.is_finite() || s < 0.0) {
            return Err(Error::Data("g2 series sigma must be finite and >= 0".into()));
        }
        Ok(())
    }
}

fn channel_times_ps(stream: &TimeTagStream, channel: Channel) -> Vec<i64> {
    stream
        .events
        .iter()
        .filter(|t| t.channel == channel)
        .map(|t| t.timestamp_ps as i64)
        .collect()
}

/// Raw symmetric cross-correlation of channels 0 and 1.
///
/// Cost is O(N * k) with k the mean number of partner events per delay
/// window, via a sliding window over the two sorted channel sequences. An
/// empty channel yields an all-zero histogram; callers can check
/// [`CorrelationHistogram::is_empty`].
pub fn correlate(
    stream: &TimeTagStream,
    bin_width_ns: f64,
    max_delay_ns: f64,
) -> Result<CorrelationHistogram> {
    if !bin_width_ns.is_finite() || bin_width_ns <= 0.0 {
        return Err(Error::Config(format!(
            "bin width must be positive, got {bin_width_ns} ns"
        )));
    }
    if max_delay_ns < 10.0 * bin_width_ns {
        return Err(Error::Config(format!(
            "max delay {max_delay_ns} ns must be at least 10 bin widths ({bin_width_ns} ns)"
        )));
    }
    stream.validate()?;

    let half_bins = (max_delay_ns / bin_width_ns).ceil() as usize;
    let mut counts = vec![0u64; 2 * half_bins + 1];
    let starts = channel_times_ps(stream, Channel::Det0);
    let stops = channel_times_ps(stream, Channel::Det1);

    let bin_ps = bin_width_ns * 1000.0;
    // Everything that rounds into a bin is kept.
    let window_ps = ((half_bins as f64 + 0.5) * bin_ps).ceil() as i64;
    let mut lo = 0usize;
    for &t0 in &starts {
        while lo < stops.len() && stops[lo] < t0 - window_ps {
            lo += 1;
        }
        for &t1 in &stops[lo..] {
            if t1 > t0 + window_ps {
                break;
            }
            let offset = ((t1 - t0) as f64 / bin_ps).round() as i64 + half_bins as i64;
            if (0..counts.len() as i64).contains(&offset) {
                counts[offset as usize] += 1;
            }
        }
    }

    Ok(CorrelationHistogram {
        bin_width_ns,
        counts,
        normalized: None,
        sigma: None,
        normalization: None,
        events_ch0: starts.len() as u64,
        events_ch1: stops.len() as u64,
        duration_ns: stream.duration_ns(),
    })
}

/// Default plateau window: the outermost quarter of each side.
pub fn default_tail_window(hist: &CorrelationHistogram) -> (f64, f64) {
    let edge = hist.max_delay_ns();
    (0.75 * edge, edge)
}

/// Scales raw counts into a g2 estimate.
///
/// `tail_window_ns` applies to `TailPlateau` only and defaults to the
/// outermost 25% of delays on both sides; it must lie inside
/// [max_delay/2, max_delay] and cover at least 20 bins.
pub fn normalize(
    hist: &CorrelationHistogram,
    mode: NormalizationMode,
    tail_window_ns: Option<(f64, f64)>,
) -> Result<CorrelationHistogram> {
    let factor;
    let mut window = None;
    match mode {
        NormalizationMode::TailPlateau => {
            let (lo, hi) = tail_window_ns.unwrap_or_else(|| default_tail_window(hist));
            let edge = hist.max_delay_ns();
            if !(lo.is_finite() && hi.is_finite())
                || lo >= hi
                || lo < edge / 2.0 - 1e-9
                || hi > edge + hist.bin_width_ns
            {
                return Err(Error::Normalization(format!(
                    "tail window [{lo}, {hi}] ns must lie inside [{}, {}] ns",
                    edge / 2.0,
                    edge
                )));
            }
            let mut total = 0u64;
            let mut bins = 0u64;
            for (j, &c) in hist.counts.iter().enumerate() {
                let tau = hist.bin_center_ns(j).abs();
                if tau >= lo && tau <= hi {
                    total += c;
                    bins += 1;
                }
            }
            if bins < 20 {
                return Err(Error::Normalization(format!(
                    "tail window covers only {bins} bins; need at least 20"
                )));
            }
            if total == 0 {
                return Err(Error::Normalization(
                    "tail window holds no counts; cannot pin plateau to 1".into(),
                ));
            }
            factor = total as f64 / bins as f64;
            window = Some((lo, hi));
        }
        NormalizationMode::RateProduct => {
            if hist.duration_ns <= 0.0 {
                return Err(Error::Normalization(
                    "rate-product normalization needs the stream duration".into(),
                ));
            }
            let r0 = hist.events_ch0 as f64 / hist.duration_ns;
            let r1 = hist.events_ch1 as f64 / hist.duration_ns;
            factor = r0 * r1 * hist.bin_width_ns * hist.duration_ns;
            if factor <= 0.0 {
                return Err(Error::Normalization(
                    "rate-product normalization needs events on both channels".into(),
                ));
            }
        }
    }

    let normalized: Vec<f64> = hist.counts.iter().map(|&c| c as f64 / factor).collect();
    let sigma: Vec<f64> = hist.counts.iter().map(|&c| (c as f64).sqrt() / factor).collect();
    Ok(CorrelationHistogram {
        bin_width_ns: hist.bin_width_ns,
        counts: hist.counts.clone(),
        normalized: Some(normalized),
        sigma: Some(sigma),
        normalization: Some(Normalization {
            mode,
            factor,
            tail_window_ns: window,
        }),
        events_ch0: hist.events_ch0,
        events_ch1: hist.events_ch1,
        duration_ns: hist.duration_ns,
    })
}

/// Side peaks consulted on each side of zero by [`pulsed_g2_zero`].
const SIDE_PEAKS: i64 = 10;

/// Center-to-side peak coincidence ratio of a pulsed stream.
///
/// Every pair is assigned to the nearest pulse-lag peak, so each peak
/// integrates coincidences over one full period and Poissonian background
/// contributes the textbook 1 - rho^2 floor; the estimate is the zero-lag
/// count over the mean of up to ten side peaks per side.
pub fn pulsed_g2_zero(stream: &TimeTagStream, period_ns: f64) -> Result<f64> {
    if !period_ns.is_finite() || period_ns <= 0.0 {
        return Err(Error::Config(format!(
            "period must be positive, got {period_ns} ns"
        )));
    }
    stream.validate()?;
    let starts = channel_times_ps(stream, Channel::Det0);
    let stops = channel_times_ps(stream, Channel::Det1);

    let period_ps = period_ns * 1000.0;
    let available = (stream.duration_ns() / period_ns).floor() as i64 - 1;
    let side_peaks = SIDE_PEAKS.min(available.max(0));
    if side_peaks < 5 {
        return Err(Error::Statistics(format!(
            "only {side_peaks} side peaks available; need at least 5"
        )));
    }
    let window_ps = ((side_peaks as f64 + 0.5) * period_ps) as i64;

    let mut peak_counts = vec![0u64; 2 * side_peaks as usize + 1];
    let mut lo = 0usize;
    for &t0 in &starts {
        while lo < stops.len() && stops[lo] < t0 - window_ps {
            lo += 1;
        }
        for &t1 in &stops[lo..] {
            if t1 > t0 + window_ps {
                break;
            }
            let d = (t1 - t0) as f64;
            let peak = (d / period_ps).round() as i64;
            if peak.abs() <= side_peaks {
                peak_counts[(peak + side_peaks) as usize] += 1;
            }
        }
    }

    let center = peak_counts[side_peaks as usize] as f64;
    let side_total: u64 = peak_counts
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != side_peaks as usize)
        .map(|(_, &c)| c)
        .sum();
    if side_total == 0 {
        return Err(Error::Statistics(
            "no side-peak coincidences; stream too sparse for a g2(0) estimate".into(),
        ));
    }
    let side_mean = side_total as f64 / (2 * side_peaks) as f64;
    Ok(center / side_mean)
}

/// Histogram of detection delays since the previous sync marker.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayHistogram {
    pub bin_width_ns: f64,
    pub counts: Vec<u64>,
}

impl DelayHistogram {
    pub fn bin_center_ns(&self, index: usize) -> f64 {
        (index as f64 + 0.5) * self.bin_width_ns
    }

    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Bins detection delays relative to the most recent sync tag, for
/// lifetime fitting. Detections before the first sync are skipped.
pub fn decay_histogram(
    stream: &TimeTagStream,
    period_ns: f64,
    bin_width_ns: f64,
) -> Result<DelayHistogram> {
    if !(period_ns.is_finite() && bin_width_ns.is_finite())
        || period_ns <= 0.0
        || bin_width_ns <= 0.0
    {
        return Err(Error::Config(
            "period and bin width must be positive".into(),
        ));
    }
    if bin_width_ns >= period_ns / 50.0 {
        return Err(Error::Config(format!(
            "bin width {bin_width_ns} ns too coarse; need < period/50 = {} ns",
            period_ns / 50.0
        )));
    }
    stream.validate()?;

    let bins = (period_ns / bin_width_ns).ceil() as usize;
    let mut counts = vec![0u64; bins];
    let mut last_sync: Option<u64> = None;
    let mut seen_sync = false;
    for tag in &stream.events {
        match tag.channel {
            Channel::Sync => {
                seen_sync = true;
                last_sync = Some(tag.timestamp_ps);
            }
            Channel::Det0 | Channel::Det1 => {
                if let Some(sync) = last_sync {
                    let delay_ns = (tag.timestamp_ps - sync) as f64 / 1000.0;
                    let bin = (delay_ns / bin_width_ns) as usize;
                    if bin < bins {
                        counts[bin] += 1;
                    }
                }
            }
        }
    }
    if !seen_sync {
        return Err(Error::Data(
            "stream has no sync channel; cannot build a decay histogram".into(),
        ));
    }
    Ok(DelayHistogram {
        bin_width_ns,
        counts,
    })
}
