//! Weighted nonlinear least-squares engine.
//!
//! Damped Gauss-Newton (Levenberg-Marquardt with multiplicative damping on
//! the normal-matrix diagonal): accepted steps never increase the
//! objective. Positivity constraints are imposed smoothly by fitting
//! log-transformed parameters; the model callback always sees natural
//! units. Jacobians come from central finite differences in the internal
//! coordinates, and standard errors from the scaled SVD pseudo-inverse of
//! the normal matrix, which also exposes unidentifiable parameters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Coordinate change between the fitted internal parameter and its natural
/// value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// Fit the value directly.
    Identity,
    /// Fit ln(value); keeps the natural value strictly positive.
    Log,
}

impl Transform {
    fn to_internal(self, natural: f64) -> Result<f64> {
        match self {
            Transform::Identity => Ok(natural),
            Transform::Log => {
                if natural <= 0.0 || !natural.is_finite() {
                    return Err(Error::Config(format!(
                        "log-transformed parameter needs a positive initial value, got {natural}"
                    )));
                }
                Ok(natural.ln())
            }
        }
    }

    fn to_natural(self, internal: f64) -> f64 {
        match self {
            Transform::Identity => internal,
            Transform::Log => internal.exp(),
        }
    }

    /// d(natural)/d(internal), for mapping covariances back.
    fn scale_at(self, internal: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Log => internal.exp(),
        }
    }
}

/// One fitted parameter: name, unit and starting point.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub unit: String,
    pub initial: f64,
    pub transform: Transform,
}

impl Param {
    pub fn new(name: &str, unit: &str, initial: f64, transform: Transform) -> Self {
        Self {
            name: name.to_string(),
            unit: unit.to_string(),
            initial,
            transform,
        }
    }

    /// Positive physical quantity, fitted in log space.
    pub fn positive(name: &str, unit: &str, initial: f64) -> Self {
        Self::new(name, unit, initial, Transform::Log)
    }

    /// Sign-free quantity, fitted directly.
    pub fn free(name: &str, unit: &str, initial: f64) -> Self {
        Self::new(name, unit, initial, Transform::Identity)
    }
}

/// Observations and their weights; the abscissae live inside the model
/// callback.
#[derive(Debug, Clone)]
pub struct FitData {
    pub y: Vec<f64>,
    /// Least-squares weights, conventionally 1/sigma^2. Must be positive.
    pub weights: Vec<f64>,
}

impl FitData {
    pub fn validate(&self) -> Result<()> {
        if self.y.len() != self.weights.len() {
            return Err(Error::Data(
                "observations and weights differ in length".into(),
            ));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("observations must be finite".into()));
        }
        if self.weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
            return Err(Error::Data("weights must be positive and finite".into()));
        }
        Ok(())
    }
}

pub const MAX_ITERATIONS: usize = 500;
pub const OBJECTIVE_TOL: f64 = 1e-10;
pub const GRADIENT_TOL: f64 = 1e-8;

/// Relative singular-value cutoff below which a direction of the normal
/// matrix counts as unresolved.
const SINGULAR_CUTOFF: f64 = 1e-10;

/// Raw engine output in natural parameter space.
#[derive(Debug, Clone)]
pub struct EngineResult {
    pub values: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Covariance of the natural parameters (delta method through the
    /// transforms). Rows/columns of unidentifiable parameters are not
    /// meaningful.
    pub covariance: DMatrix<f64>,
    pub unidentifiable: Vec<bool>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    /// Weighted residual sum of squares at the solution.
    pub objective: f64,
    pub n_points: usize,
}

impl EngineResult {
    pub fn reduced_chi2(&self) -> f64 {
        let dof = self.n_points - self.values.len();
        self.objective / dof as f64
    }
}

/// A model evaluation: fills `out` with predictions for the given natural
/// parameters, or reports the point as infeasible.
pub type ModelFn<'a> = dyn Fn(&[f64], &mut [f64]) -> bool + 'a;

struct Workspace<'a> {
    model: &'a ModelFn<'a>,
    params: &'a [Param],
    data: &'a FitData,
    predictions: Vec<f64>,
}

impl Workspace<'_> {
    fn natural(&self, internal: &[f64]) -> Vec<f64> {
        internal
            .iter()
            .zip(self.params)
            .map(|(&u, p)| p.transform.to_natural(u))
            .collect()
    }

    /// Weighted residual sum of squares, or None when infeasible.
    fn objective(&mut self, internal: &[f64]) -> Option<f64> {
        let natural = self.natural(internal);
        if !(self.model)(&natural, &mut self.predictions) {
            return None;
        }
        let mut s = 0.0;
        for ((&f, &y), &w) in self
            .predictions
            .iter()
            .zip(&self.data.y)
            .zip(&self.data.weights)
        {
            if !f.is_finite() {
                return None;
            }
            let r = f - y;
            s += w * r * r;
        }
        Some(s)
    }

    /// Weighted residual vector sqrt(w) * (f - y).
    fn residuals(&mut self, internal: &[f64]) -> Option<DVector<f64>> {
        let natural = self.natural(internal);
        if !(self.model)(&natural, &mut self.predictions) {
            return None;
        }
        let mut r = DVector::zeros(self.data.y.len());
        for (i, ((&f, &y), &w)) in self
            .predictions
            .iter()
            .zip(&self.data.y)
            .zip(&self.data.weights)
            .enumerate()
        {
            if !f.is_finite() {
                return None;
            }
            r[i] = w.sqrt() * (f - y);
        }
        Some(r)
    }

    /// Central-difference Jacobian of the weighted residuals with respect
    /// to the internal coordinates. Falls back to one-sided differences at
    /// feasibility boundaries.
    fn jacobian(&mut self, internal: &[f64], base: &DVector<f64>) -> Option<DMatrix<f64>> {
        let n = self.data.y.len();
        let p = internal.len();
        let mut jac = DMatrix::zeros(n, p);
        let mut probe = internal.to_vec();
        for j in 0..p {
            let h = 1e-6 * internal[j].abs().max(1.0);
            probe[j] = internal[j] + h;
            let plus = self.residuals(&probe);
            probe[j] = internal[j] - h;
            let minus = self.residuals(&probe);
            probe[j] = internal[j];
            let column = match (plus, minus) {
                (Some(rp), Some(rm)) => (rp - rm) / (2.0 * h),
                (Some(rp), None) => (rp - base) / h,
                (None, Some(rm)) => (base - rm) / h,
                (None, None) => return None,
            };
            jac.set_column(j, &column);
        }
        Some(jac)
    }
}

/// Minimizes sum_i w_i (y_i - f_i(theta))^2 from `params` initial values.
///
/// Non-convergence is not an error: the result comes back flagged so
/// callers can surface diagnostics. Errors are reserved for structurally
/// bad input (shape mismatches, infeasible start, too few points).
pub fn least_squares(model: &ModelFn, params: &[Param], data: &FitData) -> Result<EngineResult> {
    data.validate()?;
    if params.is_empty() {
        return Err(Error::Config("no parameters to fit".into()));
    }
    if data.y.len() <= params.len() {
        return Err(Error::Statistics(format!(
            "{} points cannot constrain {} parameters",
            data.y.len(),
            params.len()
        )));
    }

    let mut internal: Vec<f64> = params
        .iter()
        .map(|p| p.transform.to_internal(p.initial))
        .collect::<Result<_>>()?;
    let mut ws = Workspace {
        model,
        params,
        data,
        predictions: vec![0.0; data.y.len()],
    };

    let mut objective = ws.objective(&internal).ok_or_else(|| {
        Error::Config("model is infeasible at the initial parameters".into())
    })?;

    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut gradient_norm = f64::INFINITY;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let residuals = match ws.residuals(&internal) {
            Some(r) => r,
            None => break,
        };
        let jac = match ws.jacobian(&internal, &residuals) {
            Some(j) => j,
            None => break,
        };
        let gradient = jac.transpose() * &residuals;
        gradient_norm = 2.0 * gradient.norm();
        if gradient_norm < GRADIENT_TOL {
            converged = true;
            break;
        }
        let normal = jac.transpose() * &jac;

        // Inner damping loop: inflate lambda until a step helps.
        let mut accepted = false;
        for _ in 0..30 {
            let mut damped = normal.clone();
            for j in 0..internal.len() {
                let d = normal[(j, j)];
                damped[(j, j)] = d + lambda * d.max(1e-12);
            }
            let step = match damped.lu().solve(&(-&gradient)) {
                Some(s) => s,
                None => {
                    lambda *= 9.0;
                    continue;
                }
            };
            let trial: Vec<f64> = internal
                .iter()
                .zip(step.iter())
                .map(|(&u, &d)| u + d)
                .collect();
            match ws.objective(&trial) {
                Some(s) if s <= objective => {
                    let improvement = objective - s;
                    internal = trial;
                    objective = s;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if improvement <= OBJECTIVE_TOL * objective.max(1e-300) {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 9.0,
            }
        }
        if !accepted {
            // Damping exhausted: we are at a (possibly flat) minimum.
            converged = gradient_norm.is_finite();
            break;
        }
        if converged {
            break;
        }
    }

    // Uncertainties from the normal matrix at the solution.
    let residuals = ws
        .residuals(&internal)
        .ok_or_else(|| Error::Config("model infeasible at the solution".into()))?;
    let jac = ws
        .jacobian(&internal, &residuals)
        .ok_or_else(|| Error::Config("Jacobian unavailable at the solution".into()))?;
    let normal = jac.transpose() * &jac;
    let p = internal.len();
    let dof = (data.y.len() - p) as f64;
    let variance_scale = objective / dof;

    // The normal matrix is symmetric PSD, so its SVD doubles as an
    // eigendecomposition: pseudo-inverse = sum_k v_k v_k^T / s_k.
    let svd = normal.clone().svd(false, true);
    let vt = svd.v_t.as_ref().expect("svd with vectors");
    let s_max = svd.singular_values.max();
    let cutoff = s_max * SINGULAR_CUTOFF;

    let mut unidentifiable = vec![false; p];
    let mut cov_internal = DMatrix::zeros(p, p);
    for k in 0..p {
        let sv = svd.singular_values[k];
        if sv <= cutoff {
            // Null direction: any parameter dominating it is unresolved.
            for j in 0..p {
                if vt[(k, j)].powi(2) >= 0.4 {
                    unidentifiable[j] = true;
                }
            }
            continue;
        }
        for i in 0..p {
            for j in 0..p {
                cov_internal[(i, j)] += vt[(k, i)] * vt[(k, j)] / sv;
            }
        }
    }
    cov_internal *= variance_scale;

    let values: Vec<f64> = ws.natural(&internal);
    let mut covariance = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let si = params[i].transform.scale_at(internal[i]);
            let sj = params[j].transform.scale_at(internal[j]);
            covariance[(i, j)] = cov_internal[(i, j)] * si * sj;
        }
    }
    let standard_errors: Vec<f64> = (0..p)
        .map(|j| {
            if unidentifiable[j] {
                f64::INFINITY
            } else {
                covariance[(j, j)].max(0.0).sqrt()
            }
        })
        .collect();

    Ok(EngineResult {
        values,
        standard_errors,
        covariance,
        unidentifiable,
        converged,
        iterations,
        final_gradient_norm: gradient_norm,
        objective,
        n_points: data.y.len(),
    })
}

/// Objective value and its gradient in internal coordinates at the given
/// natural-space point. Diagnostic hook used by the test suite to compare
/// the engine's search direction against direct finite differences.
pub fn objective_and_gradient(
    model: &ModelFn,
    params: &[Param],
    data: &FitData,
    natural: &[f64],
) -> Result<(f64, Vec<f64>)> {
    data.validate()?;
    let internal: Vec<f64> = natural
        .iter()
        .zip(params)
        .map(|(&v, p)| p.transform.to_internal(v))
        .collect::<Result<_>>()?;
    let mut ws = Workspace {
        model,
        params,
        data,
        predictions: vec![0.0; data.y.len()],
    };
    let objective = ws
        .objective(&internal)
        .ok_or_else(|| Error::Config("model infeasible at the probe point".into()))?;
    let residuals = ws
        .residuals(&internal)
        .ok_or_else(|| Error::Config("model infeasible at the probe point".into()))?;
    let jac = ws
        .jacobian(&internal, &residuals)
        .ok_or_else(|| Error::Config("Jacobian unavailable at the probe point".into()))?;
    let gradient = 2.0 * jac.transpose() * residuals;
    Ok((objective, gradient.iter().copied().collect()))
}
