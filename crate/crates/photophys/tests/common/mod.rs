//! Numeric oracles shared by the integration suites: the full 3x3 rate
//! matrix, its matrix-exponential propagator and an LU steady state. These
//! deliberately avoid the crate's closed-form solutions so the two routes
//! stay independent.

use nalgebra::{Matrix3, Vector3};
use photophys::rates::RateCoefficients;

/// Generator of d/dt (n1, n2, n3) for the three-level system.
pub fn rate_matrix(r: &RateCoefficients) -> Matrix3<f64> {
    Matrix3::new(
        -r.k12,
        r.k21,
        r.k31,
        r.k12,
        -(r.k21 + r.k23),
        0.0,
        0.0,
        r.k23,
        -r.k31,
    )
}

/// Populations after `t_ns` starting from `start`, via scaling-and-squaring
/// matrix exponential.
pub fn propagate(m: &Matrix3<f64>, start: &Vector3<f64>, t_ns: f64) -> Vector3<f64> {
    (m * t_ns).exp() * start
}

/// Stationary populations solved as the null space of the generator with
/// the normalization row appended.
pub fn stationary(m: &Matrix3<f64>) -> Vector3<f64> {
    let mut a = *m;
    a.set_row(2, &nalgebra::RowVector3::new(1.0, 1.0, 1.0));
    let b = Vector3::new(0.0, 0.0, 1.0);
    a.lu().solve(&b).expect("generator with normalization row is regular")
}

/// Conditional g2: population of the excited state after a detection
/// (system reset to the ground state), normalized by its stationary value.
pub fn ode_g2(r: &RateCoefficients, tau_ns: f64) -> f64 {
    let m = rate_matrix(r);
    let n = propagate(&m, &Vector3::new(1.0, 0.0, 0.0), tau_ns);
    n[1] / stationary(&m)[1]
}
