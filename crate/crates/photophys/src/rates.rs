//! Closed-form photophysics of a three-level emitter with intensity
//! dependent de-shelving.
//!
//! States are numbered 1 (ground), 2 (excited) and 3 (metastable shelf);
//! `k_ij` is the transition rate from state i to state j. Pumping is linear
//! in excitation power, `k12 = K * P`, and de-shelving saturates,
//! `k31(P) = A1 * P / (P + B1) + C1`. Solving the rate equations for the
//! populations gives a second-order correlation
//!
//! ```text
//! g2(tau) = 1 - (1 + a) exp(-|tau|/tau1) + a exp(-|tau|/tau2)
//! ```
//!
//! where 1/tau1 and 1/tau2 are the roots of x^2 - A x + B with
//! A = k12 + k21 + k23 + k31 and B = k12 k23 + k12 k31 + k21 k31 + k23 k31,
//! and a = (1 - tau2 k31) / (k31 (tau2 - tau1)).
//!
//! Units are fixed project-wide: rates in GHz (1/ns), times in ns, powers
//! in mW.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for deciding that the root discriminant A^2 - 4B
/// vanishes. Scaled by A^2 before comparison.
const DISCRIMINANT_TOL: f64 = 1e-12;

fn check_finite_nonneg(name: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value < 0.0 {
        return Err(Error::Domain(format!(
            "{name} must be finite and >= 0, got {value}"
        )));
    }
    Ok(())
}

/// Transition rates of the three-level system at one excitation power.
/// All rates in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCoefficients {
    /// Ground -> excited pump rate.
    pub k12: f64,
    /// Excited -> ground radiative rate.
    pub k21: f64,
    /// Excited -> metastable shelving rate.
    pub k23: f64,
    /// Metastable -> ground de-shelving rate.
    pub k31: f64,
}

impl RateCoefficients {
    pub fn new(k12: f64, k21: f64, k23: f64, k31: f64) -> Result<Self> {
        let rates = Self { k12, k21, k23, k31 };
        rates.validate()?;
        Ok(rates)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite_nonneg("k12", self.k12)?;
        check_finite_nonneg("k21", self.k21)?;
        check_finite_nonneg("k23", self.k23)?;
        check_finite_nonneg("k31", self.k31)?;
        if self.k21 <= 0.0 {
            return Err(Error::Domain(
                "k21 must be > 0 (emitter needs a radiative channel)".into(),
            ));
        }
        Ok(())
    }

    /// Coefficients (A, B) of the characteristic polynomial
    /// x^2 - A x + B whose roots are the two relaxation rates 1/tau1
    /// and 1/tau2.
    pub fn decay_polynomial(&self) -> (f64, f64) {
        let a = self.k12 + self.k21 + self.k23 + self.k31;
        let b = self.k12 * self.k23
            + self.k12 * self.k31
            + self.k21 * self.k31
            + self.k23 * self.k31;
        (a, b)
    }

    /// Antibunching and bunching time constants in ns.
    ///
    /// The fast root of the characteristic polynomial is always tau1, the
    /// slow root tau2. The slow root is computed from the product identity
    /// tau2 = fast_rate / B, which stays accurate when B is tiny. B = 0
    /// (possible only with k31 = 0) makes tau2 infinite and is reported as
    /// a sentinel rather than an error so two-level configurations remain
    /// usable.
    pub fn time_constants(&self) -> Result<TimeConstants> {
        self.validate()?;
        let (a, b) = self.decay_polynomial();
        let disc = a * a - 4.0 * b;
        if disc <= 0.0 {
            if disc >= -DISCRIMINANT_TOL * a * a {
                return Err(Error::DegenerateTimeConstants { tau_ns: 2.0 / a });
            }
            return Err(Error::OscillatoryRegime { a, b });
        }
        let fast_rate = 0.5 * (a + disc.sqrt());
        let tau1 = 1.0 / fast_rate;
        if b == 0.0 {
            return Ok(TimeConstants::InfiniteTau2 { tau1 });
        }
        Ok(TimeConstants::Finite {
            tau1,
            tau2: fast_rate / b,
        })
    }

    /// Bunching degree a from the de-shelving rate and the two time
    /// constants. Reports the raw value, which is negative in unphysical
    /// regimes; clamping happens only in [`G2Parameters`].
    pub fn bunching_amplitude(&self, tau1: f64, tau2: f64) -> Result<f64> {
        if self.k31 <= 0.0 {
            return Err(Error::PermanentShelving);
        }
        if !(tau1 > 0.0 && tau2 > 0.0) {
            return Err(Error::Domain(format!(
                "time constants must be positive, got tau1={tau1} tau2={tau2}"
            )));
        }
        if tau2 <= tau1 {
            if tau2 == tau1 {
                return Err(Error::DegenerateTimeConstants { tau_ns: tau1 });
            }
            return Err(Error::Domain(format!(
                "expected tau1 <= tau2, got tau1={tau1} tau2={tau2}"
            )));
        }
        Ok((1.0 - tau2 * self.k31) / (self.k31 * (tau2 - tau1)))
    }

    /// Full correlation parameter set (a, tau1, tau2) for these rates.
    pub fn g2_parameters(&self) -> Result<G2Parameters> {
        match self.time_constants()? {
            TimeConstants::Finite { tau1, tau2 } => {
                let a = self.bunching_amplitude(tau1, tau2)?;
                G2Parameters::new(a, tau1, tau2)
            }
            TimeConstants::InfiniteTau2 { .. } => Err(Error::PermanentShelving),
        }
    }

    /// Stationary occupations and emission rate.
    ///
    /// With the pump off the ground state holds everything. k31 = 0 while
    /// the shelf is reachable drains the population there; that case
    /// returns the n3 = 1 sentinel with zero emission.
    pub fn steady_state(&self) -> Result<SteadyState> {
        self.validate()?;
        if self.k12 == 0.0 {
            return Ok(SteadyState {
                n1: 1.0,
                n2: 0.0,
                n3: 0.0,
                emission_rate: 0.0,
            });
        }
        let shelf_ratio = if self.k23 == 0.0 {
            0.0
        } else if self.k31 == 0.0 {
            return Ok(SteadyState {
                n1: 0.0,
                n2: 0.0,
                n3: 1.0,
                emission_rate: 0.0,
            });
        } else {
            self.k23 / self.k31
        };
        let n2 = 1.0 / ((self.k21 + self.k23) / self.k12 + 1.0 + shelf_ratio);
        let n3 = shelf_ratio * n2;
        Ok(SteadyState {
            n1: 1.0 - n2 - n3,
            n2,
            n3,
            emission_rate: self.k21 * n2,
        })
    }
}

/// Relaxation times of the correlation function, in ns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeConstants {
    Finite { tau1: f64, tau2: f64 },
    /// The slow mode does not relax (k31 = 0 with the shelving path
    /// otherwise closed): bunching never decays.
    InfiniteTau2 { tau1: f64 },
}

impl TimeConstants {
    pub fn tau1(&self) -> f64 {
        match *self {
            TimeConstants::Finite { tau1, .. } => tau1,
            TimeConstants::InfiniteTau2 { tau1 } => tau1,
        }
    }

    pub fn tau2(&self) -> Option<f64> {
        match *self {
            TimeConstants::Finite { tau2, .. } => Some(tau2),
            TimeConstants::InfiniteTau2 { .. } => None,
        }
    }

    /// Both constants, erroring on the infinite-bunching sentinel.
    pub fn finite(&self) -> Result<(f64, f64)> {
        match *self {
            TimeConstants::Finite { tau1, tau2 } => Ok((tau1, tau2)),
            TimeConstants::InfiniteTau2 { .. } => Err(Error::PermanentShelving),
        }
    }
}

/// Parameters of the analytic correlation function.
///
/// `a` is clamped to 0 from below on construction; use
/// [`RateCoefficients::bunching_amplitude`] for the unclamped diagnostic
/// value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Parameters {
    /// Bunching degree, dimensionless, >= 0.
    pub a: f64,
    /// Antibunching time constant in ns.
    pub tau1: f64,
    /// Bunching time constant in ns, >= tau1.
    pub tau2: f64,
}

impl G2Parameters {
    pub fn new(a: f64, tau1: f64, tau2: f64) -> Result<Self> {
        if !a.is_finite() || !tau1.is_finite() || !tau2.is_finite() {
            return Err(Error::Domain("g2 parameters must be finite".into()));
        }
        if tau1 <= 0.0 || tau2 <= 0.0 {
            return Err(Error::Domain(format!(
                "time constants must be positive, got tau1={tau1} tau2={tau2}"
            )));
        }
        if tau1 > tau2 {
            return Err(Error::Domain(format!(
                "root ordering requires tau1 <= tau2, got tau1={tau1} tau2={tau2}"
            )));
        }
        Ok(Self {
            a: a.max(0.0),
            tau1,
            tau2,
        })
    }

    /// The normalized correlation at delay `tau_ns`. Even in tau, exactly 0
    /// at tau = 0, approaches 1 at long delay.
    pub fn evaluate(&self, tau_ns: f64) -> f64 {
        let t = tau_ns.abs();
        1.0 - (1.0 + self.a) * (-t / self.tau1).exp() + self.a * (-t / self.tau2).exp()
    }
}

/// Stationary solution of the rate equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    /// Photon emission rate k21 * n2, in GHz.
    pub emission_rate: f64,
}

/// Power-independent parameters defining one emitter.
///
/// Serialized field names carry units so model files are self-describing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterModel {
    /// Pump efficiency K in GHz/mW: k12 = K * P.
    #[serde(rename = "pump_efficiency_ghz_per_mw")]
    pub pump_efficiency: f64,
    /// Radiative decay rate in GHz.
    #[serde(rename = "k21_ghz")]
    pub k21: f64,
    /// Shelving rate in GHz.
    #[serde(rename = "k23_ghz")]
    pub k23: f64,
    /// High-power gain A1 of the de-shelving rate, in GHz.
    #[serde(rename = "deshelve_high_ghz")]
    pub deshelve_high: f64,
    /// De-shelving saturation power B1, in mW.
    #[serde(rename = "deshelve_sat_mw")]
    pub deshelve_sat: f64,
    /// Zero-power de-shelving rate C1, in GHz.
    #[serde(rename = "deshelve_low_ghz")]
    pub deshelve_low: f64,
}

impl EmitterModel {
    pub fn new(
        pump_efficiency: f64,
        k21: f64,
        k23: f64,
        deshelve_high: f64,
        deshelve_sat: f64,
        deshelve_low: f64,
    ) -> Result<Self> {
        let model = Self {
            pump_efficiency,
            k21,
            k23,
            deshelve_high,
            deshelve_sat,
            deshelve_low,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite_nonneg("pump_efficiency", self.pump_efficiency)?;
        check_finite_nonneg("k21", self.k21)?;
        check_finite_nonneg("k23", self.k23)?;
        check_finite_nonneg("deshelve_high", self.deshelve_high)?;
        check_finite_nonneg("deshelve_sat", self.deshelve_sat)?;
        check_finite_nonneg("deshelve_low", self.deshelve_low)?;
        if self.k21 <= 0.0 {
            return Err(Error::Domain(
                "k21 must be > 0 (emitter needs a radiative channel)".into(),
            ));
        }
        if self.deshelve_sat <= 0.0 {
            return Err(Error::Domain("deshelve_sat (B1) must be > 0".into()));
        }
        Ok(())
    }

    fn check_power(power_mw: f64) -> Result<()> {
        if !power_mw.is_finite() || power_mw < 0.0 {
            return Err(Error::Domain(format!(
                "power must be finite and >= 0 mW, got {power_mw}"
            )));
        }
        Ok(())
    }

    /// Pump rate k12 = K * P, in GHz.
    pub fn pump_rate(&self, power_mw: f64) -> Result<f64> {
        Self::check_power(power_mw)?;
        Ok(self.pump_efficiency * power_mw)
    }

    /// De-shelving rate k31(P) = A1 * P / (P + B1) + C1, in GHz.
    /// Monotonically nondecreasing in P, bounded in [C1, A1 + C1].
    pub fn deshelving_rate(&self, power_mw: f64) -> Result<f64> {
        Self::check_power(power_mw)?;
        Ok(self.deshelve_high * power_mw / (power_mw + self.deshelve_sat) + self.deshelve_low)
    }

    /// The four transition rates at one excitation power.
    pub fn rates_at_power(&self, power_mw: f64) -> Result<RateCoefficients> {
        Ok(RateCoefficients {
            k12: self.pump_rate(power_mw)?,
            k21: self.k21,
            k23: self.k23,
            k31: self.deshelving_rate(power_mw)?,
        })
    }

    /// Excited-state lifetime in the vanishing-pump limit, in ns.
    ///
    /// At k12 = 0 the relaxation rates are exactly k21 + k23 and k31, so
    /// for any emitter with k21 + k23 > C1 this is 1/(k21 + k23).
    pub fn zero_power_lifetime(&self) -> f64 {
        let rates = RateCoefficients {
            k12: 0.0,
            k21: self.k21,
            k23: self.k23,
            k31: self.deshelve_low,
        };
        // Discriminant (k21 + k23 - k31)^2 >= 0: never oscillatory, and a
        // degenerate root still reports tau via the error payload.
        match rates.time_constants() {
            Ok(tc) => tc.tau1(),
            Err(Error::DegenerateTimeConstants { tau_ns }) => tau_ns,
            Err(_) => unreachable!("zero-pump discriminant is a perfect square"),
        }
    }

    /// Steady-state emission rate (GHz) at each listed power.
    pub fn predicted_saturation_curve(&self, powers_mw: &[f64]) -> Result<Vec<f64>> {
        powers_mw
            .iter()
            .map(|&p| Ok(self.rates_at_power(p)?.steady_state()?.emission_rate))
            .collect()
    }

    /// Shelving-to-deshelving ratio k23 / k31(P) at a caller-chosen power.
    pub fn ratio_k23_k31(&self, power_mw: f64) -> Result<f64> {
        let k31 = self.deshelving_rate(power_mw)?;
        if k31 == 0.0 {
            return Err(Error::PermanentShelving);
        }
        Ok(self.k23 / k31)
    }

    /// Non-radiative rate estimate gamma_nr = 1/tau_measured - k21, in GHz.
    ///
    /// Attributes any excess of the measured decay rate over the radiative
    /// rate to non-radiative channels. Purely a bookkeeping difference; it
    /// can come out negative when the measured lifetime exceeds 1/k21.
    pub fn nonradiative_rate(&self, measured_lifetime_ns: f64) -> Result<f64> {
        if !measured_lifetime_ns.is_finite() || measured_lifetime_ns <= 0.0 {
            return Err(Error::Domain(format!(
                "measured lifetime must be > 0 ns, got {measured_lifetime_ns}"
            )));
        }
        Ok(1.0 / measured_lifetime_ns - self.k21)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn pump_rate_is_linear() {
        let m = presets::gev1();
        assert_eq!(m.pump_rate(0.0).unwrap(), 0.0);
        let k1 = m.pump_rate(1.0).unwrap();
        assert_relative_eq!(m.pump_rate(2.0).unwrap(), 2.0 * k1);
        let custom = EmitterModel::new(0.05, 0.1, 0.0, 0.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(custom.pump_rate(4.0).unwrap(), 0.2);
        assert!(m.pump_rate(-1.0).is_err());
    }

    #[test]
    fn deshelving_rate_limits_and_half_saturation() {
        let g1 = presets::gev1();
        assert_relative_eq!(g1.deshelving_rate(0.0).unwrap(), 0.0022);
        assert_relative_eq!(g1.deshelving_rate(0.45).unwrap(), 0.00475);
        let g2 = presets::gev2();
        assert_relative_eq!(g2.deshelving_rate(1.42).unwrap(), 0.0017);
        // Monotone, bounded by the high-power limit.
        let mut prev = 0.0;
        for i in 0..400 {
            let p = 0.05 * f64::from(i);
            let k31 = g1.deshelving_rate(p).unwrap();
            assert!(k31 >= prev);
            assert!(k31 <= g1.deshelve_high + g1.deshelve_low);
            prev = k31;
        }
    }

    #[test]
    fn rates_at_power_zero_matches_model() {
        let r = presets::gev1().rates_at_power(0.0).unwrap();
        assert_eq!(r.k12, 0.0);
        assert_relative_eq!(r.k21, 0.1014);
        assert_relative_eq!(r.k23, 0.0065);
        assert_relative_eq!(r.k31, 0.0022);
    }

    #[test]
    fn vieta_identities_hold_on_grid() {
        let g1 = presets::gev1();
        for i in 1..60 {
            let p = 0.1 * f64::from(i);
            let rates = g1.rates_at_power(p).unwrap();
            let (a, b) = rates.decay_polynomial();
            let (tau1, tau2) = rates.time_constants().unwrap().finite().unwrap();
            assert!(tau1 <= tau2);
            assert_relative_eq!(1.0 / tau1 + 1.0 / tau2, a, max_relative = 1e-10);
            assert_relative_eq!(1.0 / (tau1 * tau2), b, max_relative = 1e-10);
        }
    }

    #[test]
    fn two_level_limit_has_infinite_tau2() {
        let rates = RateCoefficients::new(0.02, 0.1, 0.0, 0.0).unwrap();
        match rates.time_constants().unwrap() {
            TimeConstants::InfiniteTau2 { tau1 } => {
                assert_relative_eq!(tau1, 1.0 / 0.12, max_relative = 1e-12);
            }
            other => panic!("expected infinite tau2, got {other:?}"),
        }
    }

    #[test]
    fn oscillatory_rates_are_rejected() {
        // A^2 - 4B = 3.01^2 - 4 * 2.01 < 0.
        let rates = RateCoefficients::new(1.0, 0.01, 1.0, 1.0).unwrap();
        assert!(matches!(
            rates.time_constants(),
            Err(Error::OscillatoryRegime { .. })
        ));
    }

    #[test]
    fn zero_power_lifetimes() {
        // 1/(k21 + k23): 1/0.1079 and 1/0.0510.
        let t1 = presets::gev1().zero_power_lifetime();
        let t2 = presets::gev2().zero_power_lifetime();
        assert_relative_eq!(t1, 9.267841, max_relative = 1e-6);
        assert_relative_eq!(t2, 19.607843, max_relative = 1e-6);
        assert!((t1 - 9.25).abs() / 9.25 < 0.01);
        assert!((t2 - 19.58).abs() / 19.58 < 0.01);
        let pure = EmitterModel::new(0.1, 0.25, 0.0, 0.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(pure.zero_power_lifetime(), 4.0, max_relative = 1e-12);
    }

    #[test]
    fn no_shelving_means_no_bunching() {
        let rates = RateCoefficients::new(0.05, 0.1, 0.0, 0.004).unwrap();
        let (tau1, tau2) = rates.time_constants().unwrap().finite().unwrap();
        assert_relative_eq!(tau2, 1.0 / 0.004, max_relative = 1e-10);
        let a = rates.bunching_amplitude(tau1, tau2).unwrap();
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn bunching_amplitude_edge_cases() {
        let shelved = RateCoefficients::new(0.05, 0.1, 0.01, 0.0).unwrap();
        assert!(matches!(
            shelved.bunching_amplitude(1.0, 2.0),
            Err(Error::PermanentShelving)
        ));
        let rates = RateCoefficients::new(0.05, 0.1, 0.01, 0.002).unwrap();
        assert!(matches!(
            rates.bunching_amplitude(3.0, 3.0),
            Err(Error::DegenerateTimeConstants { .. })
        ));
    }

    #[test]
    fn g2_shape() {
        let p = G2Parameters::new(2.0, 10.0, 200.0).unwrap();
        assert_eq!(p.evaluate(0.0), 0.0);
        assert_relative_eq!(p.evaluate(50.0), 2.5373877, max_relative = 1e-7);
        assert_relative_eq!(p.evaluate(-50.0), p.evaluate(50.0));
        assert_abs_diff_eq!(p.evaluate(60.0 * p.tau2), 1.0, epsilon = 1e-6);
        let pure = G2Parameters::new(0.0, 10.0, 10.0).unwrap();
        assert_relative_eq!(pure.evaluate(10.0), 1.0 - (-1.0f64).exp());
        // Negative amplitudes clamp to zero at the type boundary.
        assert_eq!(G2Parameters::new(-0.3, 1.0, 2.0).unwrap().a, 0.0);
        assert!(G2Parameters::new(1.0, 5.0, 2.0).is_err());
    }

    #[test]
    fn steady_state_limits() {
        let off = RateCoefficients::new(0.0, 0.1, 0.01, 0.002).unwrap();
        let s = off.steady_state().unwrap();
        assert_eq!((s.n1, s.emission_rate), (1.0, 0.0));

        let balanced = RateCoefficients::new(0.1, 0.1, 0.0, 0.002).unwrap();
        assert_relative_eq!(balanced.steady_state().unwrap().n2, 0.5);

        let trapped = RateCoefficients::new(0.1, 0.1, 0.01, 0.0).unwrap();
        let t = trapped.steady_state().unwrap();
        assert_eq!((t.n3, t.emission_rate), (1.0, 0.0));

        for i in 1..50 {
            let p = 0.2 * f64::from(i);
            let s = presets::gev1().rates_at_power(p).unwrap().steady_state().unwrap();
            assert_abs_diff_eq!(s.n1 + s.n2 + s.n3, 1.0, epsilon = 1e-12);
            assert!(s.n1 >= 0.0 && s.n2 >= 0.0 && s.n3 >= 0.0);
        }
    }

    #[test]
    fn saturation_curve_rises_from_zero() {
        let powers: Vec<f64> = (0..200).map(|i| 0.05 * f64::from(i)).collect();
        let curve = presets::gev1().predicted_saturation_curve(&powers).unwrap();
        assert_eq!(curve[0], 0.0);
        for w in curve.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert!(curve.last().unwrap() < &presets::gev1().k21);
    }

    #[test]
    fn shelving_ratio_and_nonradiative_rate() {
        let g1 = presets::gev1();
        assert_relative_eq!(g1.ratio_k23_k31(0.0).unwrap(), 0.0065 / 0.0022);
        let g2 = presets::gev2();
        assert_relative_eq!(
            g2.nonradiative_rate(20.5).unwrap(),
            1.0 / 20.5 - 0.0458,
            max_relative = 1e-12
        );
        assert!(g1.nonradiative_rate(0.0).is_err());
    }
}
