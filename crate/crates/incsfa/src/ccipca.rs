//! Candid covariance-free incremental PCA.
//!
//! Principal components are estimated one sample at a time without ever
//! forming a covariance matrix: each stored vector doubles as direction
//! (its orientation) and eigenvalue estimate (its norm), and lower-order
//! components learn from residuals left after deflating the higher ones.
//! An amnesic learning-rate schedule gradually shifts the estimator from
//! "average everything" to "track the recent past", which is what lets
//! downstream consumers survive non-stationary input.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{IncSfaError, Result};
use crate::signal::Frame;

/// Vectors with norm at or below this are treated as uninitialized /
/// degenerate and skipped by updates and deflation.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// Eigenvalue estimates below this cannot be whitened (their inverse square
/// root would explode) and are dropped or rejected per policy.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

/// Three-stage amnesic schedule controlling the per-sample learning rate.
///
/// The amnesic parameter mu(t) is 0 up to `t1` (plain sample averaging),
/// rises linearly to `c` between `t1` and `t2`, then keeps growing as
/// `c + (t - t2) / r`. The resulting rate `(1 + mu(t)) / t` starts at 1,
/// decays roughly like 1/t, and levels off at `1/r`, so the estimator
/// never stops adapting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmnesicSchedule {
    pub t1: u64,
    pub t2: u64,
    pub c: f64,
    pub r: f64,
}

impl AmnesicSchedule {
    pub fn new(t1: u64, t2: u64, c: f64, r: f64) -> Result<Self> {
        let s = AmnesicSchedule { t1, t2, c, r };
        s.validate()?;
        Ok(s)
    }

    /// A schedule whose amnesic term stays negligible, making the rate an
    /// effectively plain running average `1/t`: the unbiased choice for a
    /// statistic of a stationary stream with no bootstrap problem, such as
    /// the input mean.
    pub fn inverse_t() -> Self {
        AmnesicSchedule {
            t1: 1,
            t2: 2,
            c: 1e-12,
            r: 1e12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t1 == 0 || self.t1 >= self.t2 {
            return Err(IncSfaError::Config(format!(
                "amnesic schedule requires 0 < t1 < t2, got t1={} t2={}",
                self.t1, self.t2
            )));
        }
        if !(self.c > 0.0) || !(self.r > 0.0) {
            return Err(IncSfaError::Config(format!(
                "amnesic schedule requires c > 0 and r > 0, got c={} r={}",
                self.c, self.r
            )));
        }
        Ok(())
    }

    /// Amnesic parameter at step `t` (1-indexed).
    pub fn mu(&self, t: u64) -> f64 {
        if t <= self.t1 {
            0.0
        } else if t <= self.t2 {
            self.c * (t - self.t1) as f64 / (self.t2 - self.t1) as f64
        } else {
            self.c + (t - self.t2) as f64 / self.r
        }
    }

    /// Learning rate `(1 + mu(t)) / t` for step `t >= 1`. The first step
    /// returns exactly 1 (the sample is adopted outright) and the rate
    /// approaches `1/r` as `t` grows.
    pub fn rate(&self, t: u64) -> f64 {
        debug_assert!(t >= 1, "amnesic rate is defined for t >= 1");
        (1.0 + self.mu(t)) / t as f64
    }
}

/// Effective weight each of the first `t_max` samples carries in an
/// estimate blended with per-step rates `rate(t)`: sample `tau` ends up
/// weighted by `rate(tau) * prod_{s>tau} (1 - rate(s))`.
///
/// Diagnostic helper, mostly useful for reasoning about schedules: a plain
/// `1/t` rate yields uniform weights, amnesic schedules tilt toward the
/// recent past.
pub fn schedule_weights<F: Fn(u64) -> f64>(rate: F, t_max: u64) -> Vec<f64> {
    let mut weights = vec![0.0; t_max as usize];
    let mut tail = 1.0; // prod of (1 - rate(s)) for s in (tau, t_max]
    for tau in (1..=t_max).rev() {
        let eta = rate(tau);
        weights[(tau - 1) as usize] = eta * tail;
        tail *= 1.0 - eta;
    }
    weights
}

/// Expected squared estimation error implied by a set of effective sample
/// weights: `trace_estimate * sum(w^2)`. For uniform weights over T samples
/// this is `trace / T`, the familiar averaging rate.
pub fn expected_error_bound(weights: &[f64], trace_estimate: f64) -> f64 {
    trace_estimate * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Per-update diagnostics from [`PrincipalComponentSet::update`].
#[derive(Debug, Clone, Copy, Default)]
pub struct CcipcaTrace {
    /// Largest |residual . v_hat| left after deflating against any
    /// component this step; should sit at float-noise level.
    pub max_residual_dot: f64,
    /// True when this sample was consumed to initialize a component
    /// instead of updating the set.
    pub initialized_component: bool,
}

/// An ordered bank of K incremental principal component estimates.
///
/// Stored vectors are deliberately unnormalized: `v / |v|` estimates the
/// eigenvector and `|v|` the eigenvalue. The first K valid samples seed the
/// K slots one by one; every later sample updates all components, each
/// against the residual left by its predecessors.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalComponentSet {
    vectors: Vec<DVector<f64>>,
    dim: usize,
    initialized: usize,
    t: u64,
}

impl PrincipalComponentSet {
    pub fn new(k: usize, dim: usize) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(IncSfaError::Config(format!(
                "component set requires k >= 1 and dim >= 1, got k={k} dim={dim}"
            )));
        }
        if k > dim {
            return Err(IncSfaError::Config(format!(
                "cannot estimate {k} components in {dim} dimensions"
            )));
        }
        Ok(PrincipalComponentSet {
            vectors: vec![DVector::zeros(dim); k],
            dim,
            initialized: 0,
            t: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of update calls consumed, including initialization steps.
    pub fn step(&self) -> u64 {
        self.t
    }

    pub fn initialized_count(&self) -> usize {
        self.initialized
    }

    /// True once every slot has been seeded with a sample.
    pub fn is_ready(&self) -> bool {
        self.initialized == self.vectors.len()
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    /// Eigenvalue estimate of component `i` in stored order.
    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.vectors[i].norm()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.vectors.iter().map(|v| v.norm()).collect()
    }

    /// Component indices sorted by descending eigenvalue estimate; ties keep
    /// the lower stored index first. Stored state is never permuted.
    pub fn sorted_indices(&self) -> Vec<usize> {
        let lambdas = self.eigenvalues();
        let mut idx: Vec<usize> = (0..lambdas.len()).collect();
        idx.sort_by(|&a, &b| {
            lambdas[b]
                .partial_cmp(&lambdas[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        idx
    }

    /// Consumes one centered sample.
    ///
    /// While slots remain unseeded the sample initializes the next one
    /// (zero-norm samples are skipped so a degenerate start cannot poison a
    /// slot). Once seeded, every component blends toward its response-scaled
    /// input and passes the deflated residual down the chain, so component
    /// i+1 only ever sees what components 1..=i could not explain.
    pub fn update(&mut self, u: &Frame, eta: f64) -> Result<CcipcaTrace> {
        if u.len() != self.dim {
            return Err(IncSfaError::InvalidInput(format!(
                "sample dimension {} does not match component dimension {}",
                u.len(),
                self.dim
            )));
        }
        debug_assert!(eta > 0.0 && eta <= 1.0, "rate must lie in (0, 1]");
        let mut trace = CcipcaTrace::default();

        if self.initialized < self.vectors.len() {
            if u.norm() > ZERO_NORM_EPS {
                self.vectors[self.initialized].copy_from(u);
                self.initialized += 1;
                trace.initialized_component = true;
            }
            self.t += 1;
            return Ok(trace);
        }

        let mut residual = u.clone();
        for v in &mut self.vectors {
            let norm = v.norm();
            if norm <= ZERO_NORM_EPS {
                warn!("skipping degenerate principal component during update");
                continue;
            }
            let response = residual.dot(v) / norm;
            // v <- (1 - eta) v + eta * response * residual
            v.axpy(eta * response, &residual, 1.0 - eta);

            let new_norm = v.norm();
            if new_norm > ZERO_NORM_EPS {
                let proj = residual.dot(v) / new_norm;
                // residual <- residual - (residual . v_hat) v_hat
                residual.axpy(-proj / new_norm, v, 1.0);
                let leftover = (residual.dot(v) / new_norm).abs();
                trace.max_residual_dot = trace.max_residual_dot.max(leftover);
            }
        }
        self.t += 1;
        Ok(trace)
    }

    pub(crate) fn from_parts(vectors: Vec<DVector<f64>>, initialized: usize, t: u64) -> Self {
        let dim = vectors.first().map(|v| v.len()).unwrap_or(0);
        PrincipalComponentSet {
            vectors,
            dim,
            initialized,
            t,
        }
    }

    /// Drops the `remove` weakest components (smallest current eigenvalue
    /// estimates), preserving the stored order of the survivors. Returns the
    /// stored indices that were kept, in their original order.
    pub(crate) fn shrink_to(&mut self, keep: usize) -> Vec<usize> {
        debug_assert!(keep >= 1 && keep <= self.vectors.len());
        let order = self.sorted_indices();
        let mut keep_flags = vec![false; self.vectors.len()];
        for &i in order.iter().take(keep) {
            keep_flags[i] = true;
        }
        let mut kept = Vec::with_capacity(keep);
        let mut vectors = Vec::with_capacity(keep);
        for (i, v) in self.vectors.drain(..).enumerate() {
            if keep_flags[i] {
                kept.push(i);
                vectors.push(v);
            }
        }
        self.initialized = self.initialized.min(keep);
        self.vectors = vectors;
        kept
    }
}

/// What to do with components whose eigenvalue estimate sits below
/// [`EIGENVALUE_FLOOR`] when building a whitening transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneratePolicy {
    /// Drop the offending rows (output dimension shrinks), with a warning.
    Drop,
    /// Refuse to build the transform.
    Fail,
}

/// A linear map taking centered inputs to decorrelated, unit-variance
/// coordinates: row i is `v_hat_i / sqrt(lambda_i)` with rows ordered by
/// descending eigenvalue estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl WhiteningTransform {
    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Eigenvalue estimates backing each row, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn apply(&self, u: &Frame) -> Result<Frame> {
        if u.len() != self.matrix.ncols() {
            return Err(IncSfaError::InvalidInput(format!(
                "whitening expects dimension {}, got {}",
                self.matrix.ncols(),
                u.len()
            )));
        }
        Ok(&self.matrix * u)
    }
}

/// Builds the whitening transform for the current component estimates.
pub fn whitening_transform(
    pcs: &PrincipalComponentSet,
    policy: DegeneratePolicy,
) -> Result<WhiteningTransform> {
    let order = pcs.sorted_indices();
    let mut rows = Vec::with_capacity(order.len());
    let mut eigenvalues = Vec::with_capacity(order.len());
    for &i in &order {
        let lambda = pcs.eigenvalue(i);
        if lambda < EIGENVALUE_FLOOR {
            match policy {
                DegeneratePolicy::Drop => {
                    warn!("dropping component {i} with near-zero eigenvalue estimate {lambda:e}");
                    continue;
                }
                DegeneratePolicy::Fail => {
                    return Err(IncSfaError::InvalidInput(format!(
                        "component {i} has eigenvalue estimate {lambda:e} below the whitening floor"
                    )));
                }
            }
        }
        rows.push(pcs.vectors()[i].transpose() / (lambda.sqrt() * lambda));
        eigenvalues.push(lambda);
    }
    if rows.is_empty() {
        return Err(IncSfaError::Untrained(
            "no component has a usable eigenvalue estimate".into(),
        ));
    }
    let matrix = DMatrix::from_rows(&rows);
    Ok(WhiteningTransform {
        matrix,
        eigenvalues,
    })
}

/// Whitening rows with a stable output dimension: always K rows, sorted by
/// descending eigenvalue estimate, with degenerate components contributing
/// an all-zero row instead of being dropped. Returns the matrix, the
/// eigenvalue estimates per row, and the stored index each row came from.
pub(crate) fn whitening_rows_stable(
    pcs: &PrincipalComponentSet,
) -> (DMatrix<f64>, Vec<f64>, Vec<usize>) {
    let order = pcs.sorted_indices();
    let k = pcs.k();
    let mut matrix = DMatrix::zeros(k, pcs.dim());
    let mut eigenvalues = Vec::with_capacity(k);
    for (row, &i) in order.iter().enumerate() {
        let lambda = pcs.eigenvalue(i);
        eigenvalues.push(lambda);
        if lambda >= EIGENVALUE_FLOOR {
            let scale = 1.0 / (lambda.sqrt() * lambda);
            matrix
                .row_mut(row)
                .copy_from(&(pcs.vectors()[i].transpose() * scale));
        }
        // Degenerate rows stay zero: the coordinate carries no signal until
        // its component picks one up.
    }
    (matrix, eigenvalues, order)
}

/// Smallest retained dimension whose cumulative eigenvalue mass exceeds the
/// fraction `beta` of the previously observed total.
///
/// `eigenvalues` must be sorted descending. If every eigenvalue is zero the
/// answer is 1 (nothing to retain); if the mass never reaches the threshold
/// (the total shrank), everything is kept.
pub fn reduce_dim(eigenvalues: &[f64], eigenvalues_prev_total: f64, beta: f64) -> usize {
    debug_assert!(beta > 0.0 && beta < 1.0, "beta must lie in (0, 1)");
    if eigenvalues.iter().all(|&l| l <= 0.0) {
        return 1;
    }
    if eigenvalues_prev_total > 0.0 {
        let mut cum = 0.0;
        for (i, &l) in eigenvalues.iter().enumerate() {
            cum += l;
            if cum / eigenvalues_prev_total > beta {
                return i + 1;
            }
        }
    }
    eigenvalues.len().max(1)
}
