//! Batch references for the streaming estimators.
//!
//! These solve the same problems — principal components, whitening, slow
//! features — by dense eigendecomposition over a full sample set. They are
//! the ground truth the incremental paths are measured against in tests and
//! experiments, and deliberately share conventions with the streaming side:
//! whitening maps to `D^{-1/2} V^T (x - mean)`, derivatives are forward
//! differences with the first sample dropped, and features come out
//! slowest-first.

use nalgebra::{DMatrix, DVector};

use crate::error::{IncSfaError, Result};
use crate::signal::{quadratic_expand, Frame};

/// Dense PCA of a sample set: eigenvalues descending, eigenvectors
/// orthonormal columns in matching order.
#[derive(Debug, Clone)]
pub struct BatchPca {
    pub mean: DVector<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<DVector<f64>>,
}

/// Population-covariance PCA (normalization by `n`, so whitened outputs
/// have exactly unit sample variance).
pub fn batch_pca(samples: &[Frame]) -> Result<BatchPca> {
    if samples.len() < 2 {
        return Err(IncSfaError::InvalidInput(format!(
            "batch pca needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let d = samples[0].len();
    if d == 0 || samples.iter().any(|x| x.len() != d) {
        return Err(IncSfaError::InvalidInput(
            "batch pca needs nonempty, equally sized samples".into(),
        ));
    }
    let n = samples.len() as f64;
    let mut mean = DVector::zeros(d);
    for x in samples {
        mean += x;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for x in samples {
        let c = x - &mean;
        cov += &c * c.transpose();
    }
    cov /= n;

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(BatchPca {
        mean,
        eigenvalues: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        eigenvectors: order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect(),
    })
}

/// A fitted batch slow-feature model: an instantaneous linear read-out of
/// the whitened (optionally quadratically expanded) input.
#[derive(Debug, Clone)]
pub struct BatchSfa {
    mean: DVector<f64>,
    whitening: DMatrix<f64>,
    features: DMatrix<f64>,
    delta_values: Vec<f64>,
    expand: bool,
}

impl BatchSfa {
    pub fn j(&self) -> usize {
        self.features.nrows()
    }

    pub fn whitened_dim(&self) -> usize {
        self.whitening.nrows()
    }

    pub fn expands_input(&self) -> bool {
        self.expand
    }

    /// Delta value of each extracted feature on the training data,
    /// ascending (the features are ordered slowest-first).
    pub fn delta_values(&self) -> &[f64] {
        &self.delta_values
    }

    /// Feature `i` pulled back into (expanded) input space: the direction a
    /// centered input is project onto to produce output i. Useful for
    /// comparing learned features across models with different whitenings.
    pub fn input_space_feature(&self, i: usize) -> DVector<f64> {
        self.whitening.transpose() * self.features.row(i).transpose()
    }

    fn prepare(&self, x: &Frame) -> Result<DVector<f64>> {
        let expanded = if self.expand {
            quadratic_expand(x)?
        } else {
            x.clone()
        };
        if expanded.len() != self.mean.len() {
            return Err(IncSfaError::InvalidInput(format!(
                "input dimension {} does not match model dimension {}",
                expanded.len(),
                self.mean.len()
            )));
        }
        Ok(expanded - &self.mean)
    }

    /// Whitened coordinates of one raw input.
    pub fn whiten(&self, x: &Frame) -> Result<DVector<f64>> {
        Ok(&self.whitening * self.prepare(x)?)
    }

    /// Slow-feature outputs for one raw input.
    pub fn transform(&self, x: &Frame) -> Result<Frame> {
        Ok(&self.features * self.whiten(x)?)
    }

    /// Slow-feature outputs for a whole stream.
    pub fn outputs(&self, xs: &[Frame]) -> Result<Vec<Frame>> {
        xs.iter().map(|x| self.transform(x)).collect()
    }
}

/// Fits slow features on a full stream: center (after optional quadratic
/// expansion), whiten by PCA, forward-difference the whitened signal, and
/// take the `j` smallest principal directions of the derivative.
///
/// Directions whose input variance is negligible relative to the largest
/// eigenvalue are dropped before whitening, so nearly redundant expanded
/// coordinates cannot blow up the derivative statistics.
pub fn batch_sfa(samples: &[Frame], j: usize, expand: bool) -> Result<BatchSfa> {
    if j == 0 {
        return Err(IncSfaError::InvalidInput(
            "batch sfa needs at least one output feature".into(),
        ));
    }
    if samples.len() < 3 {
        return Err(IncSfaError::InvalidInput(format!(
            "batch sfa needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    let expanded: Vec<Frame> = if expand {
        samples
            .iter()
            .map(quadratic_expand)
            .collect::<Result<_>>()?
    } else {
        samples.to_vec()
    };

    let pca = batch_pca(&expanded)?;
    let lambda_max = pca.eigenvalues[0].max(0.0);
    let floor = (lambda_max * 1e-10).max(1e-12);
    let kept: Vec<usize> = (0..pca.eigenvalues.len())
        .filter(|&i| pca.eigenvalues[i] > floor)
        .collect();
    if kept.len() < j {
        return Err(IncSfaError::InvalidInput(format!(
            "input supports only {} whitened dimensions, cannot extract {} features",
            kept.len(),
            j
        )));
    }
    let dim = expanded[0].len();
    let mut whitening = DMatrix::zeros(kept.len(), dim);
    for (row, &i) in kept.iter().enumerate() {
        let scale = 1.0 / pca.eigenvalues[i].sqrt();
        whitening
            .row_mut(row)
            .copy_from(&(pca.eigenvectors[i].transpose() * scale));
    }

    let z: Vec<DVector<f64>> = expanded
        .iter()
        .map(|x| &whitening * (x - &pca.mean))
        .collect();
    let kdim = kept.len();
    let mut dcov = DMatrix::zeros(kdim, kdim);
    for pair in z.windows(2) {
        let zdot = &pair[1] - &pair[0];
        dcov += &zdot * zdot.transpose();
    }
    dcov /= (z.len() - 1) as f64;

    let eig = dcov.symmetric_eigen();
    let mut order: Vec<usize> = (0..kdim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut features = DMatrix::zeros(j, kdim);
    let mut delta_values = Vec::with_capacity(j);
    for (row, &i) in order.iter().take(j).enumerate() {
        features
            .row_mut(row)
            .copy_from(&eig.eigenvectors.column(i).transpose());
        delta_values.push(eig.eigenvalues[i].max(0.0));
    }

    Ok(BatchSfa {
        mean: pca.mean,
        whitening,
        features,
        delta_values,
        expand,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{correlation, delta_value};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_diag(stds: &[f64], n: usize, seed: u64) -> Vec<Frame> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = StandardNormal;
        (0..n)
            .map(|_| {
                DVector::from_fn(stds.len(), |i, _| {
                    let v: f64 = normal.sample(&mut rng);
                    v * stds[i]
                })
            })
            .collect()
    }

    /// The fast/slow two-channel toy signal: a slow sine buried under a
    /// fast squared cosine, plus the fast cosine itself.
    fn toy_signal(n: usize) -> Vec<Frame> {
        (0..n)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / (n - 1) as f64;
                DVector::from_row_slice(&[
                    t.sin() + (11.0 * t).cos().powi(2),
                    (11.0 * t).cos(),
                ])
            })
            .collect()
    }

    #[test]
    fn batch_pca_recovers_diagonal_covariance() {
        let samples = gaussian_diag(&[2.0, 1.0], 10_000, 51);
        let pca = batch_pca(&samples).unwrap();
        assert!((pca.eigenvalues[0] - 4.0).abs() / 4.0 < 0.05);
        assert!((pca.eigenvalues[1] - 1.0).abs() < 0.05);
        // Orthonormal basis.
        for i in 0..2 {
            for k in 0..2 {
                let expected = if i == k { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(
                    pca.eigenvectors[i].dot(&pca.eigenvectors[k]),
                    expected,
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn batch_pca_of_constant_samples_is_degenerate() {
        let x = DVector::from_row_slice(&[1.0, 2.0]);
        let pca = batch_pca(&vec![x; 5]).unwrap();
        for l in &pca.eigenvalues {
            assert!(l.abs() < 1e-12);
        }
    }

    #[test]
    fn batch_pca_rejects_tiny_sample_sets() {
        assert!(batch_pca(&[DVector::zeros(2)]).is_err());
    }

    #[test]
    fn slowest_feature_of_toy_signal_is_the_hidden_sine() {
        let frames = toy_signal(2000);
        let model = batch_sfa(&frames, 3, true).unwrap();
        let outputs = model.outputs(&frames).unwrap();
        let y1: Vec<f64> = outputs.iter().map(|y| y[0]).collect();
        let target: Vec<f64> = (0..2000)
            .map(|k| (std::f64::consts::TAU * k as f64 / 1999.0).sin())
            .collect();
        let c = correlation(&y1, &target).unwrap().abs();
        assert!(c > 0.99, "slowest feature correlates only {c} with the sine");
        // Ordered slowest-first.
        let d = model.delta_values();
        assert!(d[0] <= d[1] && d[1] <= d[2]);
    }

    #[test]
    fn outputs_satisfy_zero_mean_unit_variance_decorrelation() {
        let frames = toy_signal(1500);
        let model = batch_sfa(&frames, 3, true).unwrap();
        let outputs = model.outputs(&frames).unwrap();
        let n = outputs.len() as f64;
        for f in 0..3 {
            let mean: f64 = outputs.iter().map(|y| y[f]).sum::<f64>() / n;
            assert!(mean.abs() < 1e-6, "feature {f} mean {mean}");
            let var: f64 = outputs.iter().map(|y| (y[f] - mean).powi(2)).sum::<f64>() / n;
            assert!((var - 1.0).abs() < 1e-6, "feature {f} variance {var}");
        }
        for a in 0..3 {
            for b in (a + 1)..3 {
                let cov: f64 = outputs.iter().map(|y| y[a] * y[b]).sum::<f64>() / n;
                assert!(cov.abs() < 1e-6, "features {a},{b} covariance {cov}");
            }
        }
    }

    #[test]
    fn iid_noise_yields_delta_near_two_for_all_features() {
        let frames = gaussian_diag(&[1.0, 1.0, 1.0, 1.0], 20_000, 77);
        let model = batch_sfa(&frames, 2, false).unwrap();
        let outputs = model.outputs(&frames).unwrap();
        for f in 0..2 {
            let series: Vec<f64> = outputs.iter().map(|y| y[f]).collect();
            let d = delta_value(&series).unwrap();
            assert!((d - 2.0).abs() < 0.1, "feature {f} delta {d}");
        }
    }

    #[test]
    fn driving_force_of_chaotic_series_is_recovered() {
        // Logistic map with a slowly swept growth rate; the slow feature of
        // the time-embedded series should track the sweep.
        let n = 1000usize;
        let gamma: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 / n as f64;
                (10.0 * std::f64::consts::PI * t).sin()
                    + (22.0 * std::f64::consts::PI * t).sin()
            })
            .collect();
        let mut x = vec![0.6f64];
        for k in 0..n - 1 {
            let v = x[k];
            x.push((3.6 + 0.13 * gamma[k]) * v * (1.0 - v));
        }
        let window = 10usize;
        let frames = crate::signal::time_embed(&x, window).unwrap();
        let model = batch_sfa(&frames, 1, true).unwrap();
        let outputs = model.outputs(&frames).unwrap();
        let y1: Vec<f64> = outputs.iter().map(|y| y[0]).collect();
        // Each frame is labeled with the force at its window midpoint.
        let labels: Vec<f64> = (0..frames.len()).map(|k| gamma[k + window / 2]).collect();
        let c = correlation(&y1, &labels).unwrap().abs();
        assert!(c > 0.95, "driving force correlation only {c}");
    }

    #[test]
    fn batch_sfa_rejects_overly_ambitious_feature_counts() {
        // Rank-1 stream: only one usable whitened dimension.
        let frames: Vec<Frame> = (0..100)
            .map(|k| DVector::from_row_slice(&[k as f64, 2.0 * k as f64]))
            .collect();
        assert!(batch_sfa(&frames, 2, false).is_err());
        assert!(batch_sfa(&frames, 0, false).is_err());
    }
}
