//! The streaming slow-feature unit.
//!
//! [`IncSfaUnit`] owns the full per-sample chain: optional quadratic
//! expansion, running mean/variance tracking, incremental whitening via
//! candid covariance-free PCA, forward differencing of the whitened signal,
//! and minor-component extraction of the derivative. Every call to
//! [`IncSfaUnit::update`] advances all stages by one step and returns the
//! current slow-feature outputs; [`IncSfaUnit::infer`] runs the same
//! read-out without touching any state.
//!
//! Sample bookkeeping follows one invariant: every sample either starts an
//! episode or contributes a derivative, so
//! `samples_seen == episodes + derivative_updates` at all times.
//! [`IncSfaUnit::begin_episode`] only forgets the previous whitened sample;
//! calling it twice in a row is the same as calling it once.

use log::info;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::ccipca::{
    reduce_dim, whitening_rows_stable, AmnesicSchedule, PrincipalComponentSet, ZERO_NORM_EPS,
};
use crate::error::{IncSfaError, Result};
use crate::mca::{adapt_eta_from_slowness, GammaEstimator, McaRateSchedule, SlowFeatureSet};
use crate::signal::{clip, quadratic_expand, quadratic_expansion_dim, Frame, RunningMoments};

/// Instantaneous nonlinearity applied to raw inputs before any statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    /// Pass the input through unchanged (linear features).
    #[default]
    None,
    /// Append all degree-two monomials; dimension d becomes d + d(d+1)/2.
    Quadratic,
}

/// When the minor-component updates renormalize the feature vectors.
///
/// Explicit normalization keeps every feature exactly unit length and is
/// the robust default; the unnormalized rule preserves the self-stabilizing
/// length dynamics, which some schedules rely on once the estimates are
/// close. `FirstUpdates(n)` normalizes for the first `n` derivative updates
/// and then switches to the unnormalized rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum McaNormalization {
    #[default]
    Always,
    Never,
    FirstUpdates(u64),
}

/// Periodic pruning of whitened dimensions that stopped carrying variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimReduction {
    /// Fraction of the previously observed total variance that the retained
    /// components must explain. Must lie in (0, 1).
    pub beta: f64,
    /// How many samples pass between pruning checks.
    pub interval: u64,
}

fn default_slowness_window() -> u64 {
    2000
}

/// Full configuration of one streaming slow-feature unit.
///
/// Only the structural fields are mandatory in serialized form; expansion,
/// clipping, normalization policy, rate adaptation and dimension reduction
/// all default to off or to their conservative setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncSfaConfig {
    /// Raw input dimension, before any expansion.
    pub input_dim: usize,
    #[serde(default)]
    pub expansion: Expansion,
    /// Divide centered inputs by their running standard deviation.
    #[serde(default)]
    pub variance_normalization: bool,
    /// Saturate whitened coordinates at these bounds.
    #[serde(default)]
    pub clip: Option<(f64, f64)>,
    /// Number of principal components kept for whitening (K).
    pub num_components: usize,
    /// Number of slow features extracted (J <= K).
    pub num_features: usize,
    /// Amnesic schedule driving the mean, variance and component updates.
    pub amnesic: AmnesicSchedule,
    /// Separate schedule for the running mean and variance. Defaults to
    /// `amnesic`. The input average has no bootstrap problem, so on
    /// stationary streams a plain running average
    /// ([`AmnesicSchedule::inverse_t`]) estimates it with less residual
    /// oscillation than the component schedule, which must stay plastic.
    #[serde(default)]
    pub mean_amnesic: Option<AmnesicSchedule>,
    /// Learning-rate schedule for the minor-component updates.
    pub mca_rate: McaRateSchedule,
    #[serde(default)]
    pub mca_normalize: McaNormalization,
    /// Derivative updates between successive feature activations: feature
    /// `i` starts learning at update `(i + 1) * mca_stagger`, so no feature
    /// learns during the first `mca_stagger` updates while the whitened
    /// basis is still finding its shape. Zero activates all features
    /// immediately. Staggering makes the slowness ordering of the features
    /// deterministic instead of a race (see
    /// [`SlowFeatureSet::update_leading`]).
    #[serde(default)]
    pub mca_stagger: u64,
    /// Rescale the feature learning rate when the measured speed of the
    /// whitened derivative changes (checked once per slowness window).
    #[serde(default)]
    pub adapt_rate: bool,
    #[serde(default)]
    pub dim_reduction: Option<DimReduction>,
    /// Window length (in samples) used to convert delta values into the
    /// slowness index S, and the cadence of rate-adaptation checks.
    #[serde(default = "default_slowness_window")]
    pub slowness_window: u64,
    /// Seed for the only stochastic element: re-initialization of feature
    /// estimates that collapse.
    pub seed: u64,
}

impl IncSfaConfig {
    /// A conservative configuration: linear features, normalization always
    /// on, no clipping, no pruning, no rate adaptation.
    pub fn defaults(
        input_dim: usize,
        num_components: usize,
        num_features: usize,
        seed: u64,
    ) -> Self {
        IncSfaConfig {
            input_dim,
            expansion: Expansion::None,
            variance_normalization: false,
            clip: None,
            num_components,
            num_features,
            amnesic: AmnesicSchedule {
                t1: 20,
                t2: 200,
                c: 2.0,
                r: 5000.0,
            },
            mean_amnesic: None,
            mca_rate: McaRateSchedule {
                eta_low: 0.01,
                eta_high: 0.01,
                ramp: 0,
            },
            mca_normalize: McaNormalization::Always,
            mca_stagger: 0,
            adapt_rate: false,
            dim_reduction: None,
            slowness_window: default_slowness_window(),
            seed: 0,
        }
        .with_seed(seed)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Input dimension after the configured expansion.
    pub fn expanded_dim(&self) -> usize {
        match self.expansion {
            Expansion::None => self.input_dim,
            Expansion::Quadratic => quadratic_expansion_dim(self.input_dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(IncSfaError::Config("input dimension must be positive".into()));
        }
        let expanded = self.expanded_dim();
        if self.num_components == 0 || self.num_components > expanded {
            return Err(IncSfaError::Config(format!(
                "component count must lie in 1..={expanded} (expanded input dimension), got {}",
                self.num_components
            )));
        }
        if self.num_features == 0 || self.num_features > self.num_components {
            return Err(IncSfaError::Config(format!(
                "feature count must lie in 1..={} (component count), got {}",
                self.num_components, self.num_features
            )));
        }
        self.amnesic.validate()?;
        if let Some(m) = &self.mean_amnesic {
            m.validate()?;
        }
        self.mca_rate.validate()?;
        if let Some((lo, hi)) = self.clip {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(IncSfaError::Config(format!(
                    "clip bounds must be finite with lo < hi, got ({lo}, {hi})"
                )));
            }
        }
        if let Some(dr) = self.dim_reduction {
            if !(dr.beta > 0.0 && dr.beta < 1.0) {
                return Err(IncSfaError::Config(format!(
                    "dimension-reduction beta must lie in (0, 1), got {}",
                    dr.beta
                )));
            }
            if dr.interval == 0 {
                return Err(IncSfaError::Config(
                    "dimension-reduction interval must be positive".into(),
                ));
            }
        }
        if self.slowness_window == 0 {
            return Err(IncSfaError::Config("slowness window must be positive".into()));
        }
        Ok(())
    }
}

/// Current slowness estimates of the extracted features.
///
/// `delta` holds exponentially weighted mean squared output derivatives;
/// `s` converts each into the dimensionless slowness index
/// `S = window / (2 pi) * sqrt(delta)`, which is 1.0 for a unit-variance
/// sine wave whose period equals the window.
#[derive(Debug, Clone, Serialize)]
pub struct SlownessReport {
    pub delta: Vec<f64>,
    pub s: Vec<f64>,
    /// Feature learning rate that the next derivative update would use.
    pub learning_rate: f64,
    /// Current estimate of the largest derivative eigenvalue.
    pub derivative_lambda1: f64,
}

/// One streaming slow-feature extractor. See the module docs for the
/// per-sample processing chain.
#[derive(Debug, Clone)]
pub struct IncSfaUnit {
    pub(crate) config: IncSfaConfig,
    pub(crate) moments: RunningMoments,
    pub(crate) pcs: PrincipalComponentSet,
    pub(crate) gamma: GammaEstimator,
    pub(crate) features: SlowFeatureSet,
    pub(crate) t: u64,
    pub(crate) derivative_updates: u64,
    pub(crate) episodes: u64,
    /// Plateau learning rate currently in effect (differs from the
    /// configured one only while rate adaptation is active).
    pub(crate) eta_high_current: f64,
    /// Derivative-speed measure captured at the first adaptation check;
    /// later checks rescale the rate relative to this anchor.
    pub(crate) s_anchor: Option<f64>,
    pub(crate) prev_z: Option<DVector<f64>>,
    pub(crate) prev_y: Option<DVector<f64>>,
    /// Per-coordinate EWMA of squared whitened derivatives.
    pub(crate) zdot_delta: DVector<f64>,
    /// Per-feature EWMA of squared output derivatives.
    pub(crate) ydot_delta: DVector<f64>,
    /// Total eigenvalue mass at the previous pruning check.
    pub(crate) prev_total_variance: f64,
}

impl IncSfaUnit {
    pub fn new(config: IncSfaConfig) -> Result<Self> {
        config.validate()?;
        let expanded = config.expanded_dim();
        let k = config.num_components;
        let j = config.num_features;
        Ok(IncSfaUnit {
            moments: RunningMoments::new(expanded),
            pcs: PrincipalComponentSet::new(k, expanded)?,
            gamma: GammaEstimator::new(k),
            features: SlowFeatureSet::new(j, k, config.seed)?,
            t: 0,
            derivative_updates: 0,
            episodes: 0,
            eta_high_current: config.mca_rate.eta_high,
            s_anchor: None,
            prev_z: None,
            prev_y: None,
            zdot_delta: DVector::zeros(k),
            ydot_delta: DVector::zeros(j),
            prev_total_variance: 0.0,
            config,
        })
    }

    pub fn config(&self) -> &IncSfaConfig {
        &self.config
    }

    pub fn samples_seen(&self) -> u64 {
        self.t
    }

    pub fn derivative_updates(&self) -> u64 {
        self.derivative_updates
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// Whitened dimension currently in use (can shrink below the configured
    /// component count when pruning is enabled).
    pub fn current_components(&self) -> usize {
        self.pcs.k()
    }

    pub fn num_features(&self) -> usize {
        self.features.j()
    }

    /// True once every component and every feature has been seeded.
    pub fn is_ready(&self) -> bool {
        self.pcs.is_ready() && self.features.is_ready()
    }

    /// Feature learning rate the next derivative update would use.
    pub fn current_rate(&self) -> f64 {
        self.config
            .mca_rate
            .with_high(self.eta_high_current)
            .rate(self.derivative_updates)
    }

    /// Component eigenvalue estimates, descending.
    pub fn eigenvalues_descending(&self) -> Vec<f64> {
        let mut l = self.pcs.eigenvalues();
        l.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        l
    }

    /// Forget the previous sample so the next one starts a new episode and
    /// produces no derivative across the boundary. Idempotent.
    pub fn begin_episode(&mut self) {
        self.prev_z = None;
        self.prev_y = None;
    }

    /// Advance every stage by one sample and return the current outputs.
    pub fn update(&mut self, x: &Frame) -> Result<Frame> {
        let expanded = self.expand_input(x)?;
        self.t += 1;
        let eta = self.config.amnesic.rate(self.t);
        let eta_stats = self
            .config
            .mean_amnesic
            .as_ref()
            .unwrap_or(&self.config.amnesic)
            .rate(self.t);
        self.moments.update_mean(&expanded, eta_stats)?;
        self.moments.update_variance(&expanded, eta_stats)?;
        let u = self.normalize_input(&expanded)?;
        self.pcs.update(&u, eta)?;
        self.maybe_reduce_dim();

        let z = self.whiten_expanded(&expanded)?;
        match self.prev_z.take() {
            None => {
                self.episodes += 1;
            }
            Some(prev) => {
                debug_assert_eq!(prev.len(), z.len());
                let zdot = &z - &prev;
                self.derivative_updates += 1;
                let deta = self.config.amnesic.rate(self.derivative_updates);
                self.gamma.update(&zdot, deta)?;
                let normalize = match self.config.mca_normalize {
                    McaNormalization::Always => true,
                    McaNormalization::Never => false,
                    McaNormalization::FirstUpdates(n) => self.derivative_updates <= n,
                };
                let eta_m = self
                    .config
                    .mca_rate
                    .with_high(self.eta_high_current)
                    .rate(self.derivative_updates - 1);
                let active = if self.config.mca_stagger == 0 {
                    self.config.num_features
                } else {
                    (self.derivative_updates / self.config.mca_stagger) as usize
                };
                self.features
                    .update_leading(&zdot, self.gamma.gamma(), eta_m, normalize, active)?;
                for i in 0..zdot.len() {
                    self.zdot_delta[i] += deta * (zdot[i] * zdot[i] - self.zdot_delta[i]);
                }
                self.maybe_adapt_rate();
            }
        }

        let y = self.read_out(&z);
        if let Some(prev_y) = self.prev_y.take() {
            let deta = self.config.amnesic.rate(self.derivative_updates);
            for i in 0..y.len() {
                let d = y[i] - prev_y[i];
                self.ydot_delta[i] += deta * (d * d - self.ydot_delta[i]);
            }
        }
        self.prev_z = Some(z);
        self.prev_y = Some(y.clone());
        debug_assert_eq!(self.t, self.episodes + self.derivative_updates);
        Ok(y)
    }

    /// Feed a contiguous stretch of samples, collecting the outputs.
    pub fn update_stream(&mut self, frames: &[Frame]) -> Result<Vec<Frame>> {
        frames.iter().map(|x| self.update(x)).collect()
    }

    /// Read-only transform of one input with the current estimates. Returns
    /// exactly what [`IncSfaUnit::update`] returned for the sample it was
    /// last trained on.
    pub fn infer(&self, x: &Frame) -> Result<Frame> {
        if self.t == 0 {
            return Err(IncSfaError::Untrained(
                "unit has not been trained on any samples yet".into(),
            ));
        }
        let expanded = self.expand_input(x)?;
        let z = self.whiten_expanded(&expanded)?;
        Ok(self.read_out(&z))
    }

    /// Read-only transform of a whole stream.
    pub fn infer_stream(&self, frames: &[Frame]) -> Result<Vec<Frame>> {
        frames.iter().map(|x| self.infer(x)).collect()
    }

    /// Whitened representation of one raw input under the current
    /// estimates: expansion, centering, projection onto the component
    /// basis and per-component rescaling, plus the configured clipping.
    /// Useful for checking how close the whitened stream is to identity
    /// covariance.
    pub fn whiten(&self, x: &Frame) -> Result<Frame> {
        if self.t == 0 {
            return Err(IncSfaError::Untrained(
                "unit has not been trained on any samples yet".into(),
            ));
        }
        let expanded = self.expand_input(x)?;
        self.whiten_expanded(&expanded)
    }

    /// Feature `i` pulled back into (expanded) input space: the direction a
    /// centered input is projected onto to produce output `i`. Comparable
    /// across models regardless of their internal whitening bases.
    pub fn input_space_feature(&self, i: usize) -> Result<DVector<f64>> {
        if i >= self.features.j() {
            return Err(IncSfaError::InvalidInput(format!(
                "feature index {i} out of range for {} features",
                self.features.j()
            )));
        }
        let (rows, _, _) = whitening_rows_stable(&self.pcs);
        Ok(rows.transpose() * self.features.feature(i))
    }

    /// The slow-feature vectors in whitened-derivative space, slowest first.
    /// Mutually orthogonal once converged (with normalization on, each has
    /// unit length), so pairwise direction cosines measure decorrelation.
    pub fn feature_vectors(&self) -> Vec<DVector<f64>> {
        (0..self.features.j())
            .map(|i| self.features.feature(i).clone())
            .collect()
    }

    /// Current slowness estimates of the outputs.
    pub fn slowness_report(&self) -> SlownessReport {
        let window = self.config.slowness_window as f64;
        let delta: Vec<f64> = self.ydot_delta.iter().copied().collect();
        let s = delta
            .iter()
            .map(|&d| window / std::f64::consts::TAU * d.max(0.0).sqrt())
            .collect();
        SlownessReport {
            delta,
            s,
            learning_rate: self.current_rate(),
            derivative_lambda1: self.gamma.lambda1(),
        }
    }

    fn expand_input(&self, x: &Frame) -> Result<DVector<f64>> {
        if x.len() != self.config.input_dim {
            return Err(IncSfaError::InvalidInput(format!(
                "input dimension {} does not match configured dimension {}",
                x.len(),
                self.config.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(IncSfaError::InvalidInput(
                "input sample contains a non-finite value".into(),
            ));
        }
        match self.config.expansion {
            Expansion::None => Ok(x.clone()),
            Expansion::Quadratic => quadratic_expand(x),
        }
    }

    fn normalize_input(&self, expanded: &DVector<f64>) -> Result<DVector<f64>> {
        if self.config.variance_normalization {
            self.moments.center_and_normalize(expanded)
        } else {
            self.moments.center(expanded)
        }
    }

    fn whiten_expanded(&self, expanded: &DVector<f64>) -> Result<DVector<f64>> {
        let u = self.normalize_input(expanded)?;
        let (rows, _, _) = whitening_rows_stable(&self.pcs);
        let mut z = &rows * &u;
        if let Some((lo, hi)) = self.config.clip {
            z = clip(z, lo, hi);
        }
        Ok(z)
    }

    fn read_out(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.features.j(),
            self.features.features().iter().map(|w| w.dot(z)),
        )
    }

    /// Periodically drop whitened dimensions whose variance share fell
    /// below the configured threshold. The retained coordinates are the
    /// leading ones in eigenvalue order, so downstream state is truncated
    /// rather than invalidated and no episode break is introduced.
    fn maybe_reduce_dim(&mut self) {
        let Some(dr) = self.config.dim_reduction else {
            return;
        };
        if self.t % dr.interval != 0 || !self.pcs.is_ready() {
            return;
        }
        let sorted = self.pcs.sorted_indices();
        let lambdas: Vec<f64> = sorted.iter().map(|&i| self.pcs.eigenvalue(i)).collect();
        let total: f64 = lambdas.iter().sum();
        let prev_total = self.prev_total_variance;
        self.prev_total_variance = total;
        if prev_total <= 0.0 {
            return;
        }
        let k_new = reduce_dim(&lambdas, prev_total, dr.beta)
            .max(self.config.num_features)
            .min(self.pcs.k());
        if k_new >= self.pcs.k() {
            return;
        }
        info!(
            "pruning whitened dimensions {} -> {} at sample {}",
            self.pcs.k(),
            k_new,
            self.t
        );
        self.pcs.shrink_to(k_new);
        let keep: Vec<usize> = (0..k_new).collect();
        self.gamma.retain_coords(&keep);
        self.features.retain_coords(&keep);
        if let Some(pz) = &mut self.prev_z {
            *pz = pz.rows(0, k_new).into_owned();
        }
        self.zdot_delta = self.zdot_delta.rows(0, k_new).into_owned();
    }

    /// Once per slowness window, rescale the plateau learning rate by the
    /// squared ratio of the anchored derivative-speed measure to the
    /// current one, so the rate keeps a constant margin to the stability
    /// ceiling when the input statistics drift.
    fn maybe_adapt_rate(&mut self) {
        if !self.config.adapt_rate || self.derivative_updates % self.config.slowness_window != 0 {
            return;
        }
        let s_now = self.gamma.lambda1().max(0.0).sqrt();
        if s_now <= ZERO_NORM_EPS {
            return;
        }
        match self.s_anchor {
            None => self.s_anchor = Some(s_now),
            Some(anchor) => {
                let adapted = adapt_eta_from_slowness(self.config.mca_rate.eta_high, anchor, s_now)
                    .clamp(1e-6, 0.5);
                if (adapted - self.eta_high_current).abs() > 0.1 * self.eta_high_current {
                    info!(
                        "adapting feature learning rate {:.3e} -> {:.3e} at derivative update {}",
                        self.eta_high_current, adapted, self.derivative_updates
                    );
                }
                self.eta_high_current = adapted;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::batch_sfa;
    use crate::metrics::{correlation, direction_cosine};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn base_config(input_dim: usize, k: usize, j: usize) -> IncSfaConfig {
        IncSfaConfig::defaults(input_dim, k, j, 7)
    }

    /// Two mixed sines, one slow and one fast, with an anisotropic mixing
    /// matrix so the principal directions are well separated.
    fn mixed_sines(n: usize) -> (Vec<Frame>, Vec<f64>) {
        let mut frames = Vec::with_capacity(n);
        let mut slow = Vec::with_capacity(n);
        for k in 0..n {
            let p = std::f64::consts::TAU * k as f64 / 4000.0;
            let s1 = p.sin();
            let s2 = (23.0 * p + 1.0).sin();
            frames.push(DVector::from_row_slice(&[
                0.9 * s1 + 0.4 * s2,
                -0.2 * s1 + 0.8 * s2,
            ]));
            slow.push(s1);
        }
        (frames, slow)
    }

    #[test]
    fn config_validation_rejects_inconsistent_shapes() {
        let mut c = base_config(3, 2, 1);
        assert!(c.validate().is_ok());
        c.num_components = 4;
        assert!(c.validate().is_err());
        c.num_components = 2;
        c.num_features = 3;
        assert!(c.validate().is_err());
        c.num_features = 1;
        c.clip = Some((1.0, 1.0));
        assert!(c.validate().is_err());
        c.clip = None;
        c.dim_reduction = Some(DimReduction {
            beta: 1.5,
            interval: 10,
        });
        assert!(c.validate().is_err());
        c.dim_reduction = None;
        c.input_dim = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn quadratic_config_sizes_against_expanded_dim() {
        let mut c = base_config(10, 65, 3);
        c.expansion = Expansion::Quadratic;
        assert_eq!(c.expanded_dim(), 65);
        assert!(c.validate().is_ok());
        c.num_components = 66;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let json = r#"{
            "input_dim": 4,
            "num_components": 3,
            "num_features": 2,
            "amnesic": {"t1": 20, "t2": 200, "c": 2.0, "r": 2000.0},
            "mca_rate": {"eta_low": 0.01, "eta_high": 0.08, "ramp": 500},
            "seed": 42
        }"#;
        let c: IncSfaConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.expansion, Expansion::None);
        assert_eq!(c.mca_normalize, McaNormalization::Always);
        assert!(!c.variance_normalization);
        assert!(c.clip.is_none());
        assert_eq!(c.slowness_window, 2000);
        let back: IncSfaConfig =
            serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn sample_bookkeeping_splits_into_episodes_and_derivatives() {
        let mut unit = IncSfaUnit::new(base_config(2, 2, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = StandardNormal;
        let feed = |unit: &mut IncSfaUnit, n: usize, rng: &mut ChaCha8Rng| {
            for _ in 0..n {
                let x = DVector::from_fn(2, |_, _| normal.sample(rng));
                let y = unit.update(&x).unwrap();
                assert_eq!(y.len(), 1);
            }
        };
        feed(&mut unit, 10, &mut rng);
        unit.begin_episode();
        feed(&mut unit, 5, &mut rng);
        unit.begin_episode();
        unit.begin_episode(); // idempotent
        feed(&mut unit, 3, &mut rng);
        assert_eq!(unit.samples_seen(), 18);
        assert_eq!(unit.episodes(), 3);
        assert_eq!(unit.derivative_updates(), 15);
    }

    #[test]
    fn update_and_infer_agree_exactly() {
        let mut unit = IncSfaUnit::new(base_config(2, 2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = StandardNormal;
        for _ in 0..50 {
            let x = DVector::from_fn(2, |_, _| {
                let v: f64 = normal.sample(&mut rng);
                v
            });
            let y = unit.update(&x).unwrap();
            let y2 = unit.infer(&x).unwrap();
            assert_eq!(y, y2);
        }
    }

    #[test]
    fn infer_requires_training() {
        let unit = IncSfaUnit::new(base_config(2, 2, 1)).unwrap();
        assert!(matches!(
            unit.infer(&DVector::zeros(2)),
            Err(IncSfaError::Untrained(_))
        ));
    }

    #[test]
    fn update_rejects_wrong_dimension_and_non_finite_input() {
        let mut unit = IncSfaUnit::new(base_config(2, 2, 1)).unwrap();
        let err = unit.update(&DVector::zeros(3)).unwrap_err();
        assert!(err.to_string().contains('3') && err.to_string().contains('2'));
        let bad = DVector::from_row_slice(&[1.0, f64::NAN]);
        assert!(unit.update(&bad).is_err());
        assert_eq!(unit.samples_seen(), 0);
    }

    #[test]
    fn recovers_slow_source_of_mixed_sines() {
        let (frames, slow) = mixed_sines(4000);
        let mut config = base_config(2, 2, 1);
        config.mca_rate = McaRateSchedule::constant(0.3).unwrap();
        config.amnesic = AmnesicSchedule::new(20, 200, 2.0, 2000.0).unwrap();
        let mut unit = IncSfaUnit::new(config).unwrap();
        for _ in 0..3 {
            unit.update_stream(&frames).unwrap();
        }
        let outputs = unit.infer_stream(&frames).unwrap();
        let y1: Vec<f64> = outputs.iter().map(|y| y[0]).collect();
        let c = correlation(&y1, &slow).unwrap().abs();
        assert!(c > 0.95, "slow source recovered with correlation {c}");

        // The input-space read-out direction agrees with the dense solver.
        let oracle = batch_sfa(&frames, 1, false).unwrap();
        let a_inc = unit.input_space_feature(0).unwrap();
        let a_bat = oracle.input_space_feature(0);
        let d = direction_cosine(&a_inc, &a_bat).unwrap().abs();
        assert!(d > 0.9, "input-space feature direction cosine {d}");

        // Slowness report: first feature much slower than white noise.
        let report = unit.slowness_report();
        assert!(report.delta[0] < 0.1, "delta {}", report.delta[0]);
        assert!(report.derivative_lambda1 > 0.0);
    }

    #[test]
    fn variance_normalization_makes_outputs_scale_invariant() {
        let (frames, _) = mixed_sines(2000);
        let scaled: Vec<Frame> = frames.iter().map(|f| f * 100.0).collect();
        let mut config = base_config(2, 2, 1);
        config.variance_normalization = true;
        let mut a = IncSfaUnit::new(config.clone()).unwrap();
        let mut b = IncSfaUnit::new(config).unwrap();
        let ya = a.update_stream(&frames).unwrap();
        let yb = b.update_stream(&scaled).unwrap();
        for (u, v) in ya.iter().zip(&yb).skip(10) {
            assert_abs_diff_eq!(u[0], v[0], epsilon = 1e-9);
        }
    }

    #[test]
    fn clipping_saturates_whitened_coordinates() {
        let mut config = base_config(2, 2, 1);
        config.clip = Some((-0.5, 0.5));
        let mut unit = IncSfaUnit::new(config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = StandardNormal;
        for _ in 0..500 {
            let x = DVector::from_fn(2, |_, _| {
                let v: f64 = normal.sample(&mut rng);
                10.0 * v
            });
            unit.update(&x).unwrap();
            let expanded = unit.expand_input(&x).unwrap();
            let z = unit.whiten_expanded(&expanded).unwrap();
            assert!(z.iter().all(|v| (-0.5..=0.5).contains(v)));
        }
    }

    #[test]
    fn pruning_drops_silent_dimensions_without_breaking_episodes() {
        let mut config = base_config(8, 8, 2);
        config.dim_reduction = Some(DimReduction {
            beta: 0.9,
            interval: 500,
        });
        config.mca_rate = McaRateSchedule::constant(0.05).unwrap();
        let mut unit = IncSfaUnit::new(config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let normal = StandardNormal;
        for k in 0..3000u64 {
            let p = k as f64 * 0.01;
            let mut x = DVector::zeros(8);
            x[0] = p.sin();
            x[1] = (3.1 * p).sin();
            x[2] = (7.7 * p).cos();
            for i in 3..8 {
                let v: f64 = normal.sample(&mut rng);
                x[i] = 1e-6 * v;
            }
            let y = unit.update(&x).unwrap();
            assert_eq!(y.len(), 2);
        }
        assert!(
            unit.current_components() <= 4,
            "kept {} components",
            unit.current_components()
        );
        assert!(unit.current_components() >= 2);
        assert_eq!(unit.episodes(), 1);
        assert_eq!(unit.derivative_updates(), 2999);
    }

    #[test]
    fn rate_adaptation_tracks_input_speed() {
        let mut config = base_config(1, 1, 1);
        config.adapt_rate = true;
        config.slowness_window = 100;
        config.mca_rate = McaRateSchedule::constant(0.2).unwrap();
        config.amnesic = AmnesicSchedule::new(20, 200, 2.0, 1000.0).unwrap();

        // Control: stationary input leaves the rate close to the plateau.
        let mut control = IncSfaUnit::new(config.clone()).unwrap();
        for k in 0..8000u64 {
            let x = DVector::from_row_slice(&[(std::f64::consts::TAU * k as f64 / 40.0).sin()]);
            control.update(&x).unwrap();
        }
        let r = control.current_rate();
        assert!((0.1..=0.4).contains(&r), "control rate drifted to {r}");

        // A five-fold faster input should cut the rate by roughly the
        // squared frequency ratio.
        let mut unit = IncSfaUnit::new(config).unwrap();
        for k in 0..3000u64 {
            let x = DVector::from_row_slice(&[(std::f64::consts::TAU * k as f64 / 40.0).sin()]);
            unit.update(&x).unwrap();
        }
        for k in 3000..8000u64 {
            let x = DVector::from_row_slice(&[(std::f64::consts::TAU * k as f64 / 8.0).sin()]);
            unit.update(&x).unwrap();
        }
        let r = unit.current_rate();
        assert!(r < 0.03, "rate should drop well below the plateau, got {r}");
        assert!(r > 0.002, "rate collapsed too far: {r}");
    }
}
