//! Kinetic Monte Carlo simulation of the three-level emitter.
//!
//! The emitter trajectory is a continuous-time Markov chain sampled with
//! exponential waiting times. Every radiative decay (excited -> ground)
//! emits a photon, which survives detection with probability eta and is
//! routed to one of two detector channels by a beamsplitter. Independent
//! homogeneous Poisson background tags are added per detector channel.
//! Pulsed mode replaces the continuous pump with instantaneous excitation
//! attempts at fixed pulse instants and records a sync marker per pulse.
//!
//! Randomness contract: a run is fully determined by `rng_seed`. The seed
//! is expanded with a SplitMix64 step into four pinned PCG (Pcg64Mcg)
//! substreams: 0 emitter trajectory, 1 detection thinning and routing,
//! 2 background channel 0, 3 background channel 1. Splitting keeps the
//! trajectory invariant under detection-chain changes and lets segments
//! be generated independently.

use rand::{RngExt, SeedableRng};
use rand_distr::Exp1;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::{EmitterModel, RateCoefficients};

/// RNG family identifier pinned into stream metadata.
pub const RNG_ALGORITHM: &str = "pcg64mcg";

/// Detector or sync channel of a time tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Det0,
    Det1,
    Sync,
}

/// One detection or sync event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TimeTag {
    pub timestamp_ps: u64,
    pub channel: Channel,
}

/// Excitation scheme of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExcitationMode {
    Cw,
    Pulsed {
        period_ns: f64,
        excitation_probability: f64,
    },
}

/// Full description of a simulation run; identical configs (seed included)
/// produce identical streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub model: EmitterModel,
    pub power_mw: f64,
    pub duration_ns: f64,
    /// Probability that an emitted photon is detected at all.
    pub detection_efficiency: f64,
    /// Homogeneous Poisson background rate per detector channel, GHz.
    pub background_rate_ghz: f64,
    /// Probability that a detected photon lands on channel 0.
    pub splitter_ratio: f64,
    pub rng_seed: u64,
    #[serde(flatten)]
    pub mode: ExcitationMode,
}

impl SimConfig {
    /// Continuous-wave run with ideal detection and no background.
    pub fn cw(model: EmitterModel, power_mw: f64, duration_ns: f64) -> Self {
        Self {
            model,
            power_mw,
            duration_ns,
            detection_efficiency: 1.0,
            background_rate_ghz: 0.0,
            splitter_ratio: 0.5,
            rng_seed: 0,
            mode: ExcitationMode::Cw,
        }
    }

    /// Pulsed run; `power_mw` still sets the de-shelving rate, which tracks
    /// the average illumination.
    pub fn pulsed(
        model: EmitterModel,
        power_mw: f64,
        duration_ns: f64,
        period_ns: f64,
        excitation_probability: f64,
    ) -> Self {
        Self {
            mode: ExcitationMode::Pulsed {
                period_ns,
                excitation_probability,
            },
            ..Self::cw(model, power_mw, duration_ns)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !self.power_mw.is_finite() || self.power_mw < 0.0 {
            return Err(Error::Config(format!(
                "power must be finite and >= 0 mW, got {}",
                self.power_mw
            )));
        }
        if !self.duration_ns.is_finite() || self.duration_ns <= 0.0 {
            return Err(Error::Config(format!(
                "duration must be positive and finite, got {} ns",
                self.duration_ns
            )));
        }
        if !(0.0..=1.0).contains(&self.detection_efficiency) {
            return Err(Error::Config(format!(
                "detection efficiency must lie in [0, 1], got {}",
                self.detection_efficiency
            )));
        }
        if !(0.0..=1.0).contains(&self.splitter_ratio) {
            return Err(Error::Config(format!(
                "splitter ratio must lie in [0, 1], got {}",
                self.splitter_ratio
            )));
        }
        if !self.background_rate_ghz.is_finite() || self.background_rate_ghz < 0.0 {
            return Err(Error::Config(format!(
                "background rate must be finite and >= 0 GHz, got {}",
                self.background_rate_ghz
            )));
        }
        if let ExcitationMode::Pulsed {
            period_ns,
            excitation_probability,
        } = self.mode
        {
            if !period_ns.is_finite() || period_ns <= 0.0 {
                return Err(Error::Config(format!(
                    "pulse period must be positive, got {period_ns} ns"
                )));
            }
            if !(0.0..=1.0).contains(&excitation_probability) {
                return Err(Error::Config(format!(
                    "excitation probability must lie in [0, 1], got {excitation_probability}"
                )));
            }
        }
        Ok(())
    }
}

/// Time-ordered detection events plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    /// Sorted by (timestamp, channel).
    pub events: Vec<TimeTag>,
    pub duration_ps: u64,
    /// Present when the stream came from the simulator; `None` marks
    /// acquired or hand-built data.
    pub origin: Option<SimConfig>,
}

impl TimeTagStream {
    pub fn new(events: Vec<TimeTag>, duration_ps: u64) -> Result<Self> {
        let stream = Self {
            events,
            duration_ps,
            origin: None,
        };
        stream.validate()?;
        Ok(stream)
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev = 0u64;
        for tag in &self.events {
            if tag.timestamp_ps < prev {
                return Err(Error::Data(format!(
                    "timestamps must be nondecreasing: {} after {}",
                    tag.timestamp_ps, prev
                )));
            }
            if tag.timestamp_ps > self.duration_ps {
                return Err(Error::Data(format!(
                    "timestamp {} ps beyond stream duration {} ps",
                    tag.timestamp_ps, self.duration_ps
                )));
            }
            prev = tag.timestamp_ps;
        }
        Ok(())
    }

    pub fn duration_ns(&self) -> f64 {
        self.duration_ps as f64 / 1000.0
    }

    pub fn channel_count(&self, channel: Channel) -> usize {
        self.events.iter().filter(|t| t.channel == channel).count()
    }

    /// Mean event rate of one channel in GHz.
    pub fn channel_rate_ghz(&self, channel: Channel) -> f64 {
        self.channel_count(channel) as f64 / self.duration_ns()
    }

    /// Timestamps (ns) of one channel, in order.
    pub fn channel_times_ns(&self, channel: Channel) -> Vec<f64> {
        self.events
            .iter()
            .filter(|t| t.channel == channel)
            .map(|t| t.timestamp_ps as f64 / 1000.0)
            .collect()
    }
}

/// Internal state labels of the emitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitterState {
    Ground,
    Excited,
    Shelved,
}

/// One transition of the emitter chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub at_ns: f64,
    pub from: EmitterState,
    pub to: EmitterState,
}

impl Jump {
    /// A photon leaves on every radiative decay.
    pub fn emits_photon(&self) -> bool {
        self.from == EmitterState::Excited && self.to == EmitterState::Ground
    }
}

/// Low-level continuous-wave trajectory sampler. Most callers want
/// [`simulate_cw`]; this exists so statistical tests can observe dwell
/// times directly. The iterator ends when the chain can no longer move
/// (pump off in the ground state, or a shelf with no return path).
pub struct CwTrajectory {
    rates: RateCoefficients,
    radiative_fraction: f64,
    state: EmitterState,
    t_ns: f64,
    rng: Pcg64Mcg,
}

impl CwTrajectory {
    pub fn new(rates: RateCoefficients, rng: Pcg64Mcg) -> Result<Self> {
        rates.validate()?;
        Ok(Self {
            rates,
            radiative_fraction: rates.k21 / (rates.k21 + rates.k23),
            state: EmitterState::Ground,
            t_ns: 0.0,
            rng,
        })
    }
}

impl Iterator for CwTrajectory {
    type Item = Jump;

    fn next(&mut self) -> Option<Jump> {
        let from = self.state;
        let (rate, to) = match self.state {
            EmitterState::Ground => {
                if self.rates.k12 == 0.0 {
                    return None;
                }
                (self.rates.k12, EmitterState::Excited)
            }
            EmitterState::Excited => {
                let to = if self.rng.random::<f64>() < self.radiative_fraction {
                    EmitterState::Ground
                } else {
                    EmitterState::Shelved
                };
                (self.rates.k21 + self.rates.k23, to)
            }
            EmitterState::Shelved => {
                if self.rates.k31 == 0.0 {
                    return None;
                }
                (self.rates.k31, EmitterState::Ground)
            }
        };
        let wait: f64 = self.rng.sample(Exp1);
        self.t_ns += wait / rate;
        self.state = to;
        Some(Jump {
            at_ns: self.t_ns,
            from,
            to,
        })
    }
}

/// Derives the pinned substream generator for (seed, index).
pub fn substream(seed: u64, index: u64) -> Pcg64Mcg {
    // SplitMix64 finalizer decorrelates adjacent seeds and indices.
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    Pcg64Mcg::seed_from_u64(z ^ (z >> 31))
}

const STREAM_EMITTER: u64 = 0;
const STREAM_DETECTION: u64 = 1;
const STREAM_BACKGROUND0: u64 = 2;
const STREAM_BACKGROUND1: u64 = 3;

fn to_ps(t_ns: f64) -> u64 {
    (t_ns * 1000.0).round() as u64
}

/// Thins and routes an emitted photon; returns the tagged detection if it
/// survives.
fn detect(t_ns: f64, config: &SimConfig, rng: &mut Pcg64Mcg) -> Option<TimeTag> {
    if config.detection_efficiency < 1.0 && rng.random::<f64>() >= config.detection_efficiency {
        return None;
    }
    let channel = if rng.random::<f64>() < config.splitter_ratio {
        Channel::Det0
    } else {
        Channel::Det1
    };
    Some(TimeTag {
        timestamp_ps: to_ps(t_ns),
        channel,
    })
}

fn background_tags(config: &SimConfig, channel: Channel, rng: &mut Pcg64Mcg, out: &mut Vec<TimeTag>) {
    let rate = config.background_rate_ghz;
    if rate == 0.0 {
        return;
    }
    let mut t_ns = 0.0;
    loop {
        let wait: f64 = rng.sample(Exp1);
        t_ns += wait / rate;
        if t_ns > config.duration_ns {
            return;
        }
        out.push(TimeTag {
            timestamp_ps: to_ps(t_ns),
            channel,
        });
    }
}

fn finish_stream(mut events: Vec<TimeTag>, config: &SimConfig) -> TimeTagStream {
    events.sort_unstable();
    TimeTagStream {
        events,
        duration_ps: to_ps(config.duration_ns),
        origin: Some(*config),
    }
}

/// Simulates a continuous-wave run. Deterministic per config.
pub fn simulate_cw(config: &SimConfig) -> Result<TimeTagStream> {
    config.validate()?;
    if config.mode != ExcitationMode::Cw {
        return Err(Error::Config("simulate_cw requires CW mode".into()));
    }
    let rates = config.model.rates_at_power(config.power_mw)?;

    let mut events = Vec::new();
    if config.detection_efficiency > 0.0 {
        let trajectory = CwTrajectory::new(rates, substream(config.rng_seed, STREAM_EMITTER))?;
        let mut detection = substream(config.rng_seed, STREAM_DETECTION);
        let expected = config.detection_efficiency
            * rates.steady_state()?.emission_rate
            * config.duration_ns;
        events.reserve((expected * 1.02) as usize + 64);
        for jump in trajectory {
            if jump.at_ns > config.duration_ns {
                break;
            }
            if jump.emits_photon() {
                if let Some(tag) = detect(jump.at_ns, config, &mut detection) {
                    events.push(tag);
                }
            }
        }
    }
    background_tags(
        config,
        Channel::Det0,
        &mut substream(config.rng_seed, STREAM_BACKGROUND0),
        &mut events,
    );
    background_tags(
        config,
        Channel::Det1,
        &mut substream(config.rng_seed, STREAM_BACKGROUND1),
        &mut events,
    );
    Ok(finish_stream(events, config))
}

/// Simulates a pulsed run. Each pulse writes a sync marker; an emitter
/// found in the ground state is promoted with the configured probability
/// and then decays exactly as in CW but with the pump off, so an excitation
/// or a shelving episode can silently swallow later pulses.
pub fn simulate_pulsed(config: &SimConfig) -> Result<TimeTagStream> {
    config.validate()?;
    let ExcitationMode::Pulsed {
        period_ns,
        excitation_probability,
    } = config.mode
    else {
        return Err(Error::Config("simulate_pulsed requires pulsed mode".into()));
    };
    let rates = config.model.rates_at_power(config.power_mw)?;
    let radiative_fraction = rates.k21 / (rates.k21 + rates.k23);
    let decay_rate = rates.k21 + rates.k23;

    let pulses = (config.duration_ns / period_ns).floor() as u64;
    let mut events = Vec::with_capacity(pulses as usize + 1024);
    let mut emitter = substream(config.rng_seed, STREAM_EMITTER);
    let mut detection = substream(config.rng_seed, STREAM_DETECTION);

    // Time at which the emitter is back in the ground state.
    let mut free_at_ns = 0.0;
    for n in 0..=pulses {
        let pulse_ns = n as f64 * period_ns;
        if pulse_ns > config.duration_ns {
            break;
        }
        events.push(TimeTag {
            timestamp_ps: to_ps(pulse_ns),
            channel: Channel::Sync,
        });
        if pulse_ns < free_at_ns {
            continue;
        }
        if excitation_probability == 0.0
            || (excitation_probability < 1.0
                && emitter.random::<f64>() >= excitation_probability)
        {
            continue;
        }
        let wait: f64 = emitter.sample(Exp1);
        let decay_ns = pulse_ns + wait / decay_rate;
        if emitter.random::<f64>() < radiative_fraction {
            free_at_ns = decay_ns;
            if decay_ns <= config.duration_ns {
                if let Some(tag) = detect(decay_ns, config, &mut detection) {
                    events.push(tag);
                }
            }
        } else {
            if rates.k31 == 0.0 {
                free_at_ns = f64::INFINITY;
                continue;
            }
            let shelf: f64 = emitter.sample(Exp1);
            free_at_ns = decay_ns + shelf / rates.k31;
        }
    }
    background_tags(
        config,
        Channel::Det0,
        &mut substream(config.rng_seed, STREAM_BACKGROUND0),
        &mut events,
    );
    background_tags(
        config,
        Channel::Det1,
        &mut substream(config.rng_seed, STREAM_BACKGROUND1),
        &mut events,
    );
    Ok(finish_stream(events, config))
}
