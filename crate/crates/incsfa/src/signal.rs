//! Frame-level preprocessing: quadratic expansion, time embedding, running
//! first/second moments, and value clipping.
//!
//! Everything here is covariance-free and O(dim) per sample; the running
//! moments take their per-step learning rate from the caller so that the
//! same amnesic schedule drives the mean, the variance, and the principal
//! component estimates.

use nalgebra::DVector;

use crate::error::{IncSfaError, Result};

/// A single observation: a finite real vector.
pub type Frame = DVector<f64>;

/// Variance estimates below this floor are treated as degenerate; the
/// affected component is passed through centered but unscaled instead of
/// being divided by a vanishing number.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Dimension of [`quadratic_expand`] output for a `d`-dimensional input.
#[inline]
pub fn quadratic_expansion_dim(d: usize) -> usize {
    d + d * (d + 1) / 2
}

/// Expands a frame with all linear and unordered quadratic terms:
/// `[x1..xd, x1*x1, x1*x2, .., x1*xd, x2*x2, .., xd*xd]`.
///
/// The monomial order is fixed (linear terms first, then products in
/// lexicographic `i <= j` order) so expanded streams are comparable across
/// runs and across the batch/incremental paths.
pub fn quadratic_expand(x: &Frame) -> Result<Frame> {
    let d = x.len();
    if d == 0 {
        return Err(IncSfaError::InvalidInput(
            "cannot expand an empty frame".into(),
        ));
    }
    let mut out = DVector::zeros(quadratic_expansion_dim(d));
    out.rows_mut(0, d).copy_from(x);
    let mut k = d;
    for i in 0..d {
        for j in i..d {
            out[k] = x[i] * x[j];
            k += 1;
        }
    }
    Ok(out)
}

/// Converts a scalar stream into overlapping window frames:
/// `frame[t] = [s[t], s[t+1], .., s[t+w-1]]`, yielding `len - w + 1` frames.
pub fn time_embed(stream: &[f64], window: usize) -> Result<Vec<Frame>> {
    if window == 0 || window > stream.len() {
        return Err(IncSfaError::InvalidInput(format!(
            "embedding window {} invalid for stream of length {}",
            window,
            stream.len()
        )));
    }
    Ok(stream
        .windows(window)
        .map(|w| DVector::from_row_slice(w))
        .collect())
}

/// Clamps every component of `x` into `[lo, hi]`.
pub fn clip(mut x: Frame, lo: f64, hi: f64) -> Frame {
    debug_assert!(lo < hi, "clip bounds must satisfy lo < hi");
    for v in x.iter_mut() {
        *v = v.clamp(lo, hi);
    }
    x
}

/// Streaming estimates of the per-component mean and variance.
///
/// Both moments blend with caller-supplied rates; the first mean update
/// adopts the sample outright so the estimate is exact at `count == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMoments {
    mean: DVector<f64>,
    variance: DVector<f64>,
    count: u64,
}

impl RunningMoments {
    pub fn new(dim: usize) -> Self {
        RunningMoments {
            mean: DVector::zeros(dim),
            variance: DVector::zeros(dim),
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn variance(&self) -> &DVector<f64> {
        &self.variance
    }

    fn check_dim(&self, x: &Frame) -> Result<()> {
        if x.len() != self.mean.len() {
            return Err(IncSfaError::InvalidInput(format!(
                "frame dimension {} does not match moment dimension {}",
                x.len(),
                self.mean.len()
            )));
        }
        Ok(())
    }

    /// `mean <- (1 - eta) * mean + eta * x`; the very first call sets
    /// `mean = x` regardless of `eta`.
    pub fn update_mean(&mut self, x: &Frame, eta: f64) -> Result<()> {
        self.check_dim(x)?;
        debug_assert!(eta > 0.0 && eta <= 1.0, "mean rate must lie in (0, 1]");
        if self.count == 0 {
            self.mean.copy_from(x);
        } else {
            self.mean.axpy(eta, x, 1.0 - eta);
        }
        self.count += 1;
        Ok(())
    }

    /// `var_i <- (1 - eta) * var_i + eta * (x_i - mean_i)^2`, using the mean
    /// as already updated for this sample.
    pub fn update_variance(&mut self, x: &Frame, eta: f64) -> Result<()> {
        self.check_dim(x)?;
        debug_assert!(eta > 0.0 && eta <= 1.0, "variance rate must lie in (0, 1]");
        for i in 0..self.variance.len() {
            let diff = x[i] - self.mean[i];
            self.variance[i] = (1.0 - eta) * self.variance[i] + eta * diff * diff;
        }
        Ok(())
    }

    /// Subtracts the current mean estimate.
    pub fn center(&self, x: &Frame) -> Result<Frame> {
        self.check_dim(x)?;
        Ok(x - &self.mean)
    }

    /// Subtracts the mean and scales each component to unit variance.
    /// Components whose variance estimate sits below [`VARIANCE_FLOOR`] are
    /// passed through centered but unscaled.
    pub fn center_and_normalize(&self, x: &Frame) -> Result<Frame> {
        let mut u = self.center(x)?;
        for i in 0..u.len() {
            if self.variance[i] >= VARIANCE_FLOOR {
                u[i] /= self.variance[i].sqrt();
            }
        }
        Ok(u)
    }

    pub(crate) fn from_parts(mean: DVector<f64>, variance: DVector<f64>, count: u64) -> Self {
        RunningMoments {
            mean,
            variance,
            count,
        }
    }
}
