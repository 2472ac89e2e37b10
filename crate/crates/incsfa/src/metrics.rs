//! Evaluation metrics: sign-aligned errors, direction cosines, and the
//! delta/slowness measures used to judge how slow an extracted feature is.

use nalgebra::DVector;

use crate::error::{IncSfaError, Result};
use crate::signal::Frame;

/// Root-mean-square error between two scalar series, minimized over a
/// global sign flip of `b`. Slow-feature solutions are only defined up to
/// sign, so a plain RMSE would punish an arbitrary convention.
pub fn rmse_sign_aligned_scalar(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(IncSfaError::InvalidInput(format!(
            "sign-aligned rmse needs equal nonempty lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let mut same = 0.0;
    let mut flipped = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d1 = x - y;
        let d2 = x + y;
        same += d1 * d1;
        flipped += d2 * d2;
    }
    Ok((same.min(flipped) / n).sqrt())
}

/// Per-feature sign-aligned RMSE between two equally long sequences of
/// J-dimensional outputs; each feature column picks its own sign.
pub fn rmse_sign_aligned(a: &[Frame], b: &[Frame]) -> Result<Vec<f64>> {
    if a.len() != b.len() || a.is_empty() {
        return Err(IncSfaError::InvalidInput(format!(
            "sign-aligned rmse needs equal nonempty lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let j = a[0].len();
    if b[0].len() != j {
        return Err(IncSfaError::InvalidInput(format!(
            "output dimensions differ: {} vs {}",
            j,
            b[0].len()
        )));
    }
    let mut out = Vec::with_capacity(j);
    for f in 0..j {
        let col_a: Vec<f64> = a.iter().map(|x| x[f]).collect();
        let col_b: Vec<f64> = b.iter().map(|x| x[f]).collect();
        out.push(rmse_sign_aligned_scalar(&col_a, &col_b)?);
    }
    Ok(out)
}

/// Absolute cosine of the angle between two directions; 1 means parallel
/// (up to sign), 0 means orthogonal. Zero-norm input is an error.
pub fn direction_cosine(a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(IncSfaError::InvalidInput(
            "direction cosine of a zero vector is undefined".into(),
        ));
    }
    if a.len() != b.len() {
        return Err(IncSfaError::InvalidInput(format!(
            "direction cosine dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok((a.dot(b) / (na * nb)).abs())
}

/// Mean squared discrete derivative of a scalar series: the lower, the
/// slower the signal.
pub fn delta_value(signal: &[f64]) -> Result<f64> {
    if signal.len() < 2 {
        return Err(IncSfaError::InvalidInput(
            "delta value needs at least two samples".into(),
        ));
    }
    let sum: f64 = signal.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum();
    Ok(sum / (signal.len() - 1) as f64)
}

/// Slowness index `S = (P / 2 pi) * sqrt(delta)`: the number of full
/// oscillations a unit-variance sine with the same delta value would make
/// over a window of `P` samples.
pub fn slowness_s(signal: &[f64], window: f64) -> Result<f64> {
    let delta = delta_value(signal)?;
    Ok(window / std::f64::consts::TAU * delta.sqrt())
}

/// Pearson correlation between two equally long series.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(IncSfaError::InvalidInput(format!(
            "correlation needs equal lengths of at least 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(IncSfaError::InvalidInput(
            "correlation with a constant series is undefined".into(),
        ));
    }
    Ok(cov / (va * vb).sqrt())
}

/// Frobenius distance between the sample covariance of `frames` (assumed
/// centered) and the identity: a convergence measure for whitening.
pub fn covariance_identity_deviation(frames: &[Frame]) -> Result<f64> {
    if frames.is_empty() {
        return Err(IncSfaError::InvalidInput(
            "covariance of an empty sample set is undefined".into(),
        ));
    }
    let d = frames[0].len();
    let mut cov = nalgebra::DMatrix::zeros(d, d);
    for z in frames {
        cov += z * z.transpose();
    }
    cov /= frames.len() as f64;
    Ok((cov - nalgebra::DMatrix::identity(d, d)).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn rmse_identical_and_negated_are_zero() {
        let a = vec![1.0, -2.0, 3.0];
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert_abs_diff_eq!(rmse_sign_aligned_scalar(&a, &a).unwrap(), 0.0);
        assert_abs_diff_eq!(rmse_sign_aligned_scalar(&a, &neg).unwrap(), 0.0);
    }

    #[test]
    fn rmse_picks_better_sign_per_feature() {
        let a = vec![
            DVector::from_row_slice(&[1.0, 1.0]),
            DVector::from_row_slice(&[2.0, -1.0]),
        ];
        let b = vec![
            DVector::from_row_slice(&[-1.0, 1.1]),
            DVector::from_row_slice(&[-2.0, -1.0]),
        ];
        let rmse = rmse_sign_aligned(&a, &b).unwrap();
        assert_abs_diff_eq!(rmse[0], 0.0); // feature 0 matches after a flip
        assert!(rmse[1] < 0.1 && rmse[1] > 0.0);
    }

    #[test]
    fn rmse_rejects_mismatched_lengths() {
        assert!(rmse_sign_aligned_scalar(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse_sign_aligned_scalar(&[], &[]).is_err());
    }

    #[test]
    fn direction_cosine_reference_points() {
        let e1 = DVector::from_row_slice(&[1.0, 0.0]);
        let e2 = DVector::from_row_slice(&[0.0, 1.0]);
        let diag = DVector::from_row_slice(&[1.0, 1.0]);
        assert_abs_diff_eq!(direction_cosine(&e1, &e1).unwrap(), 1.0);
        assert_abs_diff_eq!(direction_cosine(&e1, &(-&e1)).unwrap(), 1.0);
        assert_abs_diff_eq!(direction_cosine(&e1, &e2).unwrap(), 0.0);
        assert_abs_diff_eq!(
            direction_cosine(&e1, &diag).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-12
        );
        assert!(direction_cosine(&e1, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn delta_of_constant_is_zero() {
        assert_abs_diff_eq!(delta_value(&[3.0; 50]).unwrap(), 0.0);
        assert_abs_diff_eq!(slowness_s(&[3.0; 50], 50.0).unwrap(), 0.0);
    }

    #[test]
    fn unit_variance_sine_scores_one_oscillation() {
        // One full period of a unit-variance sinusoid (amplitude sqrt 2)
        // over P samples must score S close to 1.
        let p = 500usize;
        let signal: Vec<f64> = (0..p)
            .map(|k| 2f64.sqrt() * (std::f64::consts::TAU * k as f64 / p as f64).sin())
            .collect();
        let s = slowness_s(&signal, p as f64).unwrap();
        assert!((s - 1.0).abs() < 0.05, "sine slowness came out as {s}");
    }

    #[test]
    fn iid_noise_delta_is_near_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let normal = StandardNormal;
        let signal: Vec<f64> = (0..50_000).map(|_| normal.sample(&mut rng)).collect();
        let d = delta_value(&signal).unwrap();
        assert!((d - 2.0).abs() < 0.1, "iid delta came out as {d}");
    }

    #[test]
    fn correlation_reference_points() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b: Vec<f64> = a.iter().map(|x| -2.0 * x + 1.0).collect();
        assert_abs_diff_eq!(correlation(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(correlation(&a, &b).unwrap(), -1.0, epsilon = 1e-12);
        assert!(correlation(&a, &[1.0, 1.0, 1.0, 1.0]).is_err());
    }
}
