//! Named desk-scale experiments with deterministic, file-ready artifacts.
//!
//! Each experiment bundles its canonical parameters; only the seed is free.
//! Running one returns an [`ExperimentArtifacts`]: a metrics map, a
//! plot-ready trace table, the trained model, and the full parameter record
//! with its fingerprint. [`ExperimentArtifacts::write`] lays these out as
//! `metrics.json`, `outputs.csv`, and `model.bin`/`network.bin`.
//!
//! The experiments:
//!
//! | name            | what it shows                                              |
//! |-----------------|------------------------------------------------------------|
//! | `simple-signal` | recovers a slow sine from a fast 2-channel mixture         |
//! | `driving-force` | driving force of a chaotic series via time embedding       |
//! | `spatial-coding`| axis-aligned half-cosine features from a 2-D random walk   |
//! | `adaptation`    | re-learning after the input channels are switched          |
//! | `outlier`       | recovery from a single corrupted sample that ruins batch   |
//! | `episodic`      | slow latents across episode resets (no derivative at cuts) |
//! | `linear-video`  | one linear unit compressing a synthetic video              |
//! | `hierarchy`     | two-layer receptive-field network on the same video        |

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::batch::batch_sfa;
use crate::ccipca::AmnesicSchedule;
use crate::error::{IncSfaError, Result};
use crate::generators::{
    gen_episodic, gen_logistic, gen_moving_board, gen_random_walk, gen_simple,
    gen_simple_swapped, inject_outlier, EpisodicSpec, MovingBoardSpec, RandomWalkSpec,
};
use crate::hierarchy::{LayerSpec, Network, NetworkSpec};
use crate::io::{config_hash, write_json, write_table_csv};
use crate::mca::McaRateSchedule;
use crate::metrics::{correlation, delta_value, direction_cosine, rmse_sign_aligned};
use crate::model_io::save_unit;
use crate::pipeline::{Expansion, IncSfaConfig, IncSfaUnit, McaNormalization};
use crate::signal::{time_embed, Frame};

/// Every experiment name [`run_named`] accepts.
pub const EXPERIMENTS: [&str; 8] = [
    "simple-signal",
    "driving-force",
    "spatial-coding",
    "adaptation",
    "outlier",
    "episodic",
    "linear-video",
    "hierarchy",
];

/// The trained model an experiment leaves behind.
#[derive(Debug, Clone)]
pub enum ModelArtifact {
    Unit(Box<IncSfaUnit>),
    Network(Box<Network>),
}

/// Everything a finished experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentArtifacts {
    pub name: &'static str,
    pub seed: u64,
    /// Full parameter record (generator, unit/network, schedule, epochs).
    pub config: serde_json::Value,
    /// Stable fingerprint of `config`.
    pub config_hash: String,
    /// Scalar results, keyed by metric name.
    pub metrics: BTreeMap<String, f64>,
    /// Column names of `trace`.
    pub trace_columns: Vec<&'static str>,
    /// Plot-ready rows (one per epoch, presentation, grid point, or frame).
    pub trace: Vec<Frame>,
    pub model: ModelArtifact,
}

impl ExperimentArtifacts {
    fn assemble(
        name: &'static str,
        seed: u64,
        config: serde_json::Value,
        metrics: BTreeMap<String, f64>,
        trace_columns: Vec<&'static str>,
        trace: Vec<Frame>,
        model: ModelArtifact,
    ) -> Result<Self> {
        let config_hash = config_hash(&config)?;
        Ok(ExperimentArtifacts {
            name,
            seed,
            config,
            config_hash,
            metrics,
            trace_columns,
            trace,
            model,
        })
    }

    /// Writes `metrics.json`, `outputs.csv`, and the model file into `dir`
    /// (created if missing). All writes are atomic; reruns with the same
    /// seed reproduce the files byte for byte.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;

        #[derive(Serialize)]
        struct MetricsDoc<'a> {
            experiment: &'a str,
            seed: u64,
            config_hash: &'a str,
            config: &'a serde_json::Value,
            metrics: &'a BTreeMap<String, f64>,
        }
        write_json(
            &dir.join("metrics.json"),
            &MetricsDoc {
                experiment: self.name,
                seed: self.seed,
                config_hash: &self.config_hash,
                config: &self.config,
                metrics: &self.metrics,
            },
        )?;
        write_table_csv(&dir.join("outputs.csv"), &self.trace_columns, &self.trace)?;
        match &self.model {
            ModelArtifact::Unit(unit) => save_unit(unit, &dir.join("model.bin"))?,
            ModelArtifact::Network(network) => network.save(&dir.join("network.bin"))?,
        }
        Ok(())
    }
}

/// Runs one named experiment with its canonical parameters.
pub fn run_named(name: &str, seed: u64) -> Result<ExperimentArtifacts> {
    match name {
        "simple-signal" => simple_signal(seed),
        "driving-force" => driving_force(seed),
        "spatial-coding" => spatial_coding(seed),
        "adaptation" => adaptation(seed),
        "outlier" => outlier(seed),
        "episodic" => episodic(seed),
        "linear-video" => linear_video(seed),
        "hierarchy" => hierarchy(seed),
        _ => Err(IncSfaError::Config(format!(
            "unknown experiment '{name}' (available: {})",
            EXPERIMENTS.join(", ")
        ))),
    }
}

fn column(outputs: &[Frame], j: usize) -> Vec<f64> {
    outputs.iter().map(|y| y[j]).collect()
}

fn abs_corr(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(correlation(a, b)?.abs())
}

/// Like [`abs_corr`] but maps degenerate (constant) signals to 0; used only
/// for trace points early in training, never for final metrics.
fn abs_corr_or_zero(a: &[f64], b: &[f64]) -> f64 {
    correlation(a, b).map(f64::abs).unwrap_or(0.0)
}

const PAPER_AMNESIC: (u64, u64, f64, f64) = (20, 200, 4.0, 5000.0);

fn amnesic(p: (u64, u64, f64, f64)) -> Result<AmnesicSchedule> {
    AmnesicSchedule::new(p.0, p.1, p.2, p.3)
}

/// Ten epochs over the two-channel toy signal, compared per epoch against
/// the batch oracle on the same data.
fn simple_signal(seed: u64) -> Result<ExperimentArtifacts> {
    const SAMPLES: usize = 2000;
    const EPOCHS: usize = 10;
    const RATE: f64 = 0.08;

    let frames = gen_simple(SAMPLES)?;
    let oracle = batch_sfa(&frames, 3, true)?;
    let y_oracle = oracle.outputs(&frames)?;

    // The whitening schedule averages long (large r keeps the late rate on
    // its 1/t branch) because the stream repeats identically every epoch;
    // one epoch of staggered hold lets the whitened basis settle before
    // features claim directions in it.
    let config = IncSfaConfig {
        input_dim: 2,
        expansion: Expansion::Quadratic,
        variance_normalization: false,
        clip: None,
        num_components: 5,
        num_features: 3,
        amnesic: amnesic((20, 200, 4.0, 50_000.0))?,
        mean_amnesic: Some(AmnesicSchedule::inverse_t()),
        mca_rate: McaRateSchedule::constant(RATE)?,
        mca_normalize: McaNormalization::Always,
        mca_stagger: SAMPLES as u64,
        adapt_rate: false,
        dim_reduction: None,
        slowness_window: SAMPLES as u64,
        seed,
    };
    let mut unit = IncSfaUnit::new(config.clone())?;

    // The signal is periodic and sampled endpoint-inclusive, so epochs join
    // smoothly: one continuous stream, no episode breaks.
    let mut trace = Vec::with_capacity(EPOCHS);
    for epoch in 1..=EPOCHS {
        unit.update_stream(&frames)?;
        let rmse = rmse_sign_aligned(&unit.infer_stream(&frames)?, &y_oracle)?;
        trace.push(DVector::from_vec(vec![
            epoch as f64,
            rmse[0],
            rmse[1],
            rmse[2],
        ]));
    }

    let outputs = unit.infer_stream(&frames)?;
    let rmse = rmse_sign_aligned(&outputs, &y_oracle)?;
    let mut metrics = BTreeMap::new();
    for (i, &value) in rmse.iter().enumerate() {
        metrics.insert(format!("rmse_feature_{}", i + 1), value);
        metrics.insert(
            format!("delta_feature_{}", i + 1),
            delta_value(&column(&outputs, i))?,
        );
        metrics.insert(format!("oracle_delta_{}", i + 1), oracle.delta_values()[i]);
    }

    let config_record = json!({
        "signal": {"kind": "simple", "samples": SAMPLES},
        "epochs": EPOCHS,
        "unit": config,
    });
    ExperimentArtifacts::assemble(
        "simple-signal",
        seed,
        config_record,
        metrics,
        vec!["epoch", "rmse1", "rmse2", "rmse3"],
        trace,
        ModelArtifact::Unit(Box::new(unit)),
    )
}

/// The chaotic-series experiment: time embedding, quadratic expansion to 65
/// dimensions, and 60 epochs to recover the slow driving force.
fn driving_force(seed: u64) -> Result<ExperimentArtifacts> {
    const POINTS: usize = 1000;
    const WINDOW: usize = 10;
    const EPOCHS: usize = 60;
    const RATE: f64 = 0.004;

    let (series, force) = gen_logistic(POINTS)?;
    let frames = time_embed(&series, WINDOW)?;
    let oracle = batch_sfa(&frames, 3, true)?;
    let y_oracle = oracle.outputs(&frames)?;
    // Each frame spans WINDOW consecutive samples; label it with the drive
    // at its center.
    let force_labels: Vec<f64> = (0..frames.len()).map(|k| force[k + WINDOW / 2]).collect();

    let config = IncSfaConfig {
        input_dim: WINDOW,
        expansion: Expansion::Quadratic,
        variance_normalization: false,
        clip: None,
        num_components: 65,
        num_features: 3,
        amnesic: amnesic(PAPER_AMNESIC)?,
        mean_amnesic: None,
        mca_rate: McaRateSchedule::constant(RATE)?,
        mca_normalize: McaNormalization::Always,
        mca_stagger: 0,
        adapt_rate: false,
        dim_reduction: None,
        slowness_window: frames.len() as u64,
        seed,
    };
    let mut unit = IncSfaUnit::new(config.clone())?;

    let mut trace = Vec::with_capacity(EPOCHS);
    for epoch in 1..=EPOCHS {
        // The series is not periodic: wrapping from its last sample back to
        // its first is a discontinuity, so every epoch is its own episode.
        unit.begin_episode();
        unit.update_stream(&frames)?;
        let outputs = unit.infer_stream(&frames)?;
        let rmse = rmse_sign_aligned(&outputs, &y_oracle)?[0];
        let corr = abs_corr_or_zero(&column(&outputs, 0), &force_labels);
        trace.push(DVector::from_vec(vec![epoch as f64, rmse, corr]));
    }

    let outputs = unit.infer_stream(&frames)?;
    let mut metrics = BTreeMap::new();
    metrics.insert(
        "rmse_first_feature".into(),
        rmse_sign_aligned(&outputs, &y_oracle)?[0],
    );
    metrics.insert(
        "corr_force".into(),
        abs_corr(&column(&outputs, 0), &force_labels)?,
    );
    metrics.insert(
        "oracle_corr_force".into(),
        abs_corr(&column(&y_oracle, 0), &force_labels)?,
    );
    metrics.insert("delta_feature_1".into(), delta_value(&column(&outputs, 0))?);

    let config_record = json!({
        "signal": {"kind": "logistic", "samples": POINTS, "embedding": WINDOW},
        "epochs": EPOCHS,
        "unit": config,
    });
    ExperimentArtifacts::assemble(
        "driving-force",
        seed,
        config_record,
        metrics,
        vec!["epoch", "rmse1", "corr_force"],
        trace,
        ModelArtifact::Unit(Box::new(unit)),
    )
}

/// A 50k-step random walk in a rectangular arena; the learned features are
/// half-cosines along each axis, each invariant to the other axis. Both
/// learners are evaluated on a regular grid of positions.
fn spatial_coding(seed: u64) -> Result<ExperimentArtifacts> {
    const RATE: f64 = 0.003;
    const GRID: (usize, usize) = (40, 20);

    let walk_spec = RandomWalkSpec {
        seed,
        ..Default::default()
    };
    let frames = gen_random_walk(&walk_spec)?;
    let oracle = batch_sfa(&frames, 2, true)?;

    let config = IncSfaConfig {
        input_dim: 2,
        expansion: Expansion::Quadratic,
        variance_normalization: false,
        clip: None,
        num_components: 5,
        num_features: 2,
        amnesic: amnesic(PAPER_AMNESIC)?,
        mean_amnesic: None,
        mca_rate: McaRateSchedule::constant(RATE)?,
        mca_normalize: McaNormalization::Always,
        mca_stagger: 0,
        adapt_rate: false,
        dim_reduction: None,
        slowness_window: 2000,
        seed,
    };
    let mut unit = IncSfaUnit::new(config.clone())?;
    unit.update_stream(&frames)?;

    // Cell-centered evaluation grid over the arena.
    let (w, h) = walk_spec.arena;
    let mut grid = Vec::with_capacity(GRID.0 * GRID.1);
    for iy in 0..GRID.1 {
        for ix in 0..GRID.0 {
            let x = (ix as f64 + 0.5) * w / GRID.0 as f64;
            let y = (iy as f64 + 0.5) * h / GRID.1 as f64;
            grid.push(DVector::from_vec(vec![x, y]));
        }
    }
    let y_inc = unit.infer_stream(&grid)?;
    let y_bat = oracle.outputs(&grid)?;
    let rmse = rmse_sign_aligned(&y_inc, &y_bat)?;

    let gx = column(&grid, 0);
    let gy = column(&grid, 1);
    let mut metrics = BTreeMap::new();
    let mut trace = Vec::with_capacity(grid.len());
    for (i, point) in grid.iter().enumerate() {
        trace.push(DVector::from_vec(vec![
            point[0],
            point[1],
            y_inc[i][0],
            y_inc[i][1],
            y_bat[i][0],
            y_bat[i][1],
        ]));
    }
    for feature in 0..2 {
        let ys = column(&y_inc, feature);
        let cx = abs_corr(&ys, &gx)?;
        let cy = abs_corr(&ys, &gy)?;
        metrics.insert(format!("rmse_feature_{}", feature + 1), rmse[feature]);
        // Each feature should follow one axis and ignore the other.
        metrics.insert(format!("variant_corr_{}", feature + 1), cx.max(cy));
        metrics.insert(format!("invariant_corr_{}", feature + 1), cx.min(cy));
    }

    let config_record = json!({
        "signal": {"kind": "random-walk", "spec": walk_spec},
        "grid": {"x": GRID.0, "y": GRID.1},
        "unit": config,
    });
    ExperimentArtifacts::assemble(
        "spatial-coding",
        seed,
        config_record,
        metrics,
        vec!["x", "y", "y1", "y2", "oracle_y1", "oracle_y2"],
        trace,
        ModelArtifact::Unit(Box::new(unit)),
    )
}

/// 120 epochs of the toy signal whose channels swap at epoch 60: the unit
/// must track the true features of whichever process is current.
fn adaptation(seed: u64) -> Result<ExperimentArtifacts> {
    const PER_EPOCH: usize = 500;
    const TOTAL_EPOCHS: usize = 120;
    const SWITCH_EPOCH: usize = 60;
    const RATE: f64 = 0.01;
    const CONVERGED: f64 = 0.9;

    let normal = gen_simple(PER_EPOCH)?;
    let swapped = gen_simple_swapped(PER_EPOCH)?;
    let pre_oracle = batch_sfa(&normal, 2, true)?;
    let post_oracle = batch_sfa(&swapped, 2, true)?;
    let truth: [[DVector<f64>; 2]; 2] = [
        [
            pre_oracle.input_space_feature(0),
            pre_oracle.input_space_feature(1),
        ],
        [
            post_oracle.input_space_feature(0),
            post_oracle.input_space_feature(1),
        ],
    ];

    let config = IncSfaConfig {
        input_dim: 2,
        expansion: Expansion::Quadratic,
        variance_normalization: false,
        clip: None,
        num_components: 5,
        num_features: 2,
        amnesic: amnesic(PAPER_AMNESIC)?,
        mean_amnesic: None,
        mca_rate: McaRateSchedule::constant(RATE)?,
        mca_normalize: McaNormalization::Always,
        mca_stagger: 0,
        adapt_rate: false,
        dim_reduction: None,
        slowness_window: PER_EPOCH as u64,
        seed,
    };
    let mut unit = IncSfaUnit::new(config.clone())?;

    let mut trace = Vec::with_capacity(TOTAL_EPOCHS);
    let mut readapt_epochs = -1.0;
    for epoch in 0..TOTAL_EPOCHS {
        let source = if epoch < SWITCH_EPOCH { &normal } else { &swapped };
        unit.update_stream(source)?;
        let mut row = vec![(epoch + 1) as f64];
        for feature in 0..2 {
            let w = unit.input_space_feature(feature)?;
            row.push(direction_cosine(&w, &truth[0][feature])?);
            row.push(direction_cosine(&w, &truth[1][feature])?);
        }
        if epoch >= SWITCH_EPOCH && readapt_epochs < 0.0 && row[2] > CONVERGED {
            readapt_epochs = (epoch - SWITCH_EPOCH + 1) as f64;
        }
        trace.push(DVector::from_vec(row));
    }

    let before = &trace[SWITCH_EPOCH - 1];
    let last = trace.last().expect("at least one epoch");
    let mut metrics = BTreeMap::new();
    metrics.insert("dircos_pre_feature_1_before_switch".into(), before[1]);
    metrics.insert("dircos_pre_feature_2_before_switch".into(), before[3]);
    metrics.insert("dircos_post_feature_1_final".into(), last[2]);
    metrics.insert("dircos_post_feature_2_final".into(), last[4]);
    metrics.insert("epochs_to_readapt_feature_1".into(), readapt_epochs);

    let config_record = json!({
        "signal": {
            "kind": "switched",
            "samples_per_epoch": PER_EPOCH,
            "switch_epoch": SWITCH_EPOCH,
            "total_epochs": TOTAL_EPOCHS,
        },
        "unit": config,
    });
    ExperimentArtifacts::assemble(
        "adaptation",
        seed,
        config_record,
        metrics,
        vec![
            "epoch",
            "dircos_pre_1",
            "dircos_post_1",
            "dircos_pre_2",
            "dircos_post_2",
        ],
        trace,
        ModelArtifact::Unit(Box::new(unit)),
    )
}

/// One absurd sample (both channels at 2000) inside a 75k stream: enough to
/// wreck the batch solution for good, while the streaming learner forgets.
fn outlier(seed: u64) -> Result<ExperimentArtifacts> {
    const PER_EPOCH: usize = 500;
    const EPOCHS: usize = 150;
    const OUTLIER_INDEX: usize = 100;
    const OUTLIER_VALUE: f64 = 2000.0;
    const RATE: f64 = 0.01;

    let clean = gen_simple(PER_EPOCH)?;
    let clean_oracle = batch_sfa(&clean, 2, true)?;
    let y_clean = column(&clean_oracle.outputs(&clean)?, 0);

    let mut stream = Vec::with_capacity(PER_EPOCH * EPOCHS);
    for _ in 0..EPOCHS {
        stream.extend(clean.iter().cloned());
    }
    inject_outlier(&mut stream, OUTLIER_INDEX, OUTLIER_VALUE)?;

    // The batch oracle sees the whole corrupted stream at once.
    let corrupted_oracle = batch_sfa(&stream, 2, true)?;
    let corr_batch = abs_corr(&column(&corrupted_oracle.outputs(&clean)?, 0), &y_clean)?;

    let config = IncSfaConfig {
        input_dim: 2,
        expansion: Expansion::Quadratic,
        variance_normalization: false,
        clip: None,
        num_components: 5,
        num_features: 2,
        amnesic: amnesic(PAPER_AMNESIC)?,
        mean_amnesic: None,
        mca_rate: McaRateSchedule::constant(RATE)?,
        mca_normalize: McaNormalization::Always,
        mca_stagger: 0,
        adapt_rate: false,
        dim_reduction: None,
        slowness_window: PER_EPOCH as u64,
        seed,
    };
    let mut unit = IncSfaUnit::new(config.clone())?;

    let mut trace = Vec::with_capacity(EPOCHS);
    let mut corr_last = 0.0;
    for epoch in 0..EPOCHS {
        unit.update_stream(&stream[epoch * PER_EPOCH..(epoch + 1) * PER_EPOCH])?;
        corr_last = abs_corr_or_zero(&column(&unit.infer_stream(&clean)?, 0), &y_clean);
        trace.push(DVector::from_vec(vec![(epoch + 1) as f64, corr_last]));
    }

    let mut metrics = BTreeMap::new();
    metrics.insert("corr_final".into(), corr_last);
    metrics.insert("corr_batch_corrupted".into(), corr_batch);
    metrics.insert(
        "corr_min_after_outlier".into(),
        trace.iter().map(|r| r[1]).fold(f64::INFINITY, f64::min),
    );

    let config_record = json!({
        "signal": {
            "kind": "outlier",
            "samples_per_epoch": PER_EPOCH,
            "epochs": EPOCHS,
            "outlier_index": OUTLIER_INDEX,
            "outlier_value": OUTLIER_VALUE,
        },
        "unit": config,
    });
    ExperimentArtifacts::assemble(
        "outlier",
        seed,
        config_record,
        metrics,
        vec!["epoch", "corr_to_clean_oracle"],
        trace,
        ModelArtifact::Unit(Box::new(unit)),
    )
}

/// Episodic streams with two slow binary latents: training presents random
/// episodes (derivatives never cross episode cuts), and held-out episodes
/// track how slow and decorrelated the features become.
fn episodic(seed: u64) -> Result<ExperimentArtifacts> {
    const TRAIN_EPISODES: usize = 50;
    const HELD_OUT: usize = 3;
    const PRESENTATIONS: usize = 400;
    const RATE: f64 = 0.001;
    const NORMALIZED_PRESENTATIONS: u64 = 10;

    let spec = EpisodicSpec {
        episodes: TRAIN_EPISODES + HELD_OUT,
        seed,
        ..Default::default()
    };
    let data = gen_episodic(&spec)?;
    let (train, held_out) = data.episodes.split_at(TRAIN_EPISODES);

    let config = IncSfaConfig {
        input_dim: spec.dim,
        expansion: Expansion::None,
        variance_normalization: false,
        clip: None,
        num_components: 20,
        num_features: 5,
        amnesic: AmnesicSchedule::new(20, 200, 2.0, 10000.0)?,
        mean_amnesic: None,
        mca_rate: McaRateSchedule::constant(RATE)?,
        mca_normalize: McaNormalization::FirstUpdates(
            NORMALIZED_PRESENTATIONS * (spec.episode_len as u64 - 1),
        ),
        mca_stagger: 0,
        adapt_rate: false,
        dim_reduction: None,
        slowness_window: 2000,
        seed,
    };
    let mut unit = IncSfaUnit::new(config.clone())?;

    let mut order = ChaCha8Rng::seed_from_u64(seed ^ 0xE19D_37F0_5C4B_A281);
    let mut trace = Vec::with_capacity(PRESENTATIONS);
    for presentation in 1..=PRESENTATIONS {
        let episode = &train[order.random_range(0..TRAIN_EPISODES)];
        unit.begin_episode();
        unit.update_stream(episode)?;

        let mut delta_sum = 0.0;
        for episode in held_out {
            let outputs = unit.infer_stream(episode)?;
            for feature in 0..config.num_features {
                delta_sum += delta_value(&column(&outputs, feature))?;
            }
        }
        let delta_mean = delta_sum / (held_out.len() * config.num_features) as f64;

        let vectors = unit.feature_vectors();
        let mut dircos_sum = 0.0;
        let mut pairs = 0;
        for i in 0..vectors.len() {
            for j in i + 1..vectors.len() {
                dircos_sum += direction_cosine(&vectors[i], &vectors[j])?;
                pairs += 1;
            }
        }
        trace.push(DVector::from_vec(vec![
            presentation as f64,
            delta_mean,
            dircos_sum / pairs as f64,
        ]));
    }

    // Nearest-centroid purity of the 2-D embedding over the four joint
    // latent states, across every training episode.
    let mut points: Vec<(usize, [f64; 2])> = Vec::new();
    for (episode, states) in train.iter().zip(&data.states) {
        let outputs = unit.infer_stream(episode)?;
        for (y, &state) in outputs.iter().zip(states) {
            points.push((state as usize, [y[0], y[1]]));
        }
    }
    let mut centroids = [[0.0f64; 2]; 4];
    let mut counts = [0usize; 4];
    for (state, p) in &points {
        centroids[*state][0] += p[0];
        centroids[*state][1] += p[1];
        counts[*state] += 1;
    }
    for (centroid, &count) in centroids.iter_mut().zip(&counts) {
        if count > 0 {
            centroid[0] /= count as f64;
            centroid[1] /= count as f64;
        }
    }
    let correct = points
        .iter()
        .filter(|(state, p)| {
            let nearest = (0..4)
                .filter(|&c| counts[c] > 0)
                .min_by(|&a, &b| {
                    let da = (p[0] - centroids[a][0]).powi(2) + (p[1] - centroids[a][1]).powi(2);
                    let db = (p[0] - centroids[b][0]).powi(2) + (p[1] - centroids[b][1]).powi(2);
                    da.total_cmp(&db)
                })
                .expect("four states");
            nearest == *state
        })
        .count();
    let purity = correct as f64 / points.len() as f64;

    let first = &trace[0];
    let last = trace.last().expect("at least one presentation");
    let mut metrics = BTreeMap::new();
    metrics.insert("delta_first".into(), first[1]);
    metrics.insert("delta_final".into(), last[1]);
    metrics.insert("dircos_final".into(), last[2]);
    metrics.insert("purity".into(), purity);

    let config_record = json!({
        "signal": {
            "kind": "episodic",
            "spec": spec,
            "train_episodes": TRAIN_EPISODES,
            "held_out": HELD_OUT,
        },
        "presentations": PRESENTATIONS,
        "unit": config,
    });
    ExperimentArtifacts::assemble(
        "episodic",
        seed,
        config_record,
        metrics,
        vec!["presentation", "delta_mean_heldout", "mean_pairwise_dircos"],
        trace,
        ModelArtifact::Unit(Box::new(unit)),
    )
}

fn board_video(seed: u64) -> Result<(MovingBoardSpec, Vec<Frame>, Vec<f64>)> {
    let spec = MovingBoardSpec {
        seed,
        ..Default::default()
    };
    let (frames, depth) = gen_moving_board(&spec)?;
    Ok((spec, frames, depth))
}

/// A single linear unit on raw synthetic video: many principal components,
/// few slow features, and the top feature tracks the latent depth.
fn linear_video(seed: u64) -> Result<ExperimentArtifacts> {
    const EPOCHS: usize = 30;
    const RATE: f64 = 0.005;

    let (spec, frames, depth) = board_video(seed)?;
    let input_dim = frames[0].len();

    let config = IncSfaConfig {
        input_dim,
        expansion: Expansion::None,
        variance_normalization: false,
        clip: None,
        num_components: 40,
        num_features: 5,
        amnesic: amnesic(PAPER_AMNESIC)?,
        mean_amnesic: None,
        mca_rate: McaRateSchedule::constant(RATE)?,
        mca_normalize: McaNormalization::Always,
        mca_stagger: 0,
        adapt_rate: false,
        dim_reduction: None,
        slowness_window: frames.len() as u64,
        seed,
    };
    let mut unit = IncSfaUnit::new(config.clone())?;

    let mut trace = Vec::with_capacity(EPOCHS);
    for epoch in 1..=EPOCHS {
        // Each epoch replays the same clip; the jump from its last frame
        // back to its first is not a real motion, so break the derivative.
        unit.begin_episode();
        unit.update_stream(&frames)?;
        let outputs = unit.infer_stream(&frames)?;
        trace.push(DVector::from_vec(vec![
            epoch as f64,
            abs_corr_or_zero(&column(&outputs, 0), &depth),
        ]));
    }

    let outputs = unit.infer_stream(&frames)?;
    let mut metrics = BTreeMap::new();
    metrics.insert(
        "corr_depth".into(),
        abs_corr(&column(&outputs, 0), &depth)?,
    );
    metrics.insert("delta_feature_1".into(), delta_value(&column(&outputs, 0))?);

    let config_record = json!({
        "signal": {"kind": "moving-board", "spec": spec},
        "epochs": EPOCHS,
        "unit": config,
    });
    ExperimentArtifacts::assemble(
        "linear-video",
        seed,
        config_record,
        metrics,
        vec!["epoch", "corr_depth"],
        trace,
        ModelArtifact::Unit(Box::new(unit)),
    )
}

/// Two stacked receptive-field layers on the same synthetic video, trained
/// bottom-up; the single top node's first feature tracks latent depth.
fn hierarchy(seed: u64) -> Result<ExperimentArtifacts> {
    const EPOCHS_PER_LAYER: usize = 5;
    const RATE: f64 = 0.005;

    let (board, frames, depth) = board_video(seed)?;
    let layer_amnesic = amnesic(PAPER_AMNESIC)?;
    let spec = NetworkSpec {
        input: (board.image_size, board.image_size),
        layers: vec![
            LayerSpec {
                field: (8, 8),
                overlap: (4, 4),
                num_components: 16,
                num_features: 4,
                amnesic: layer_amnesic,
                mca_rate: McaRateSchedule::constant(RATE)?,
                expansion: Expansion::None,
                clip: Some((-5.0, 5.0)),
            },
            LayerSpec {
                field: (3, 3),
                overlap: (0, 0),
                num_components: 12,
                num_features: 3,
                amnesic: layer_amnesic,
                mca_rate: McaRateSchedule::constant(RATE)?,
                expansion: Expansion::None,
                clip: Some((-5.0, 5.0)),
            },
        ],
        seed,
    };
    let mut network = Network::new(spec.clone())?;
    for layer in 0..network.num_layers() {
        network.train_layer(layer, &frames, EPOCHS_PER_LAYER)?;
    }

    let mut top = Vec::with_capacity(frames.len());
    let mut trace = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let y = network.forward(frame)?;
        let mut row = vec![t as f64];
        row.extend(y.iter().copied());
        row.push(depth[t]);
        trace.push(DVector::from_vec(row));
        top.push(y);
    }

    let mut metrics = BTreeMap::new();
    metrics.insert("corr_depth".into(), abs_corr(&column(&top, 0), &depth)?);
    metrics.insert("delta_feature_1".into(), delta_value(&column(&top, 0))?);

    let config_record = json!({
        "signal": {"kind": "moving-board", "spec": board},
        "epochs_per_layer": EPOCHS_PER_LAYER,
        "network": spec,
    });
    ExperimentArtifacts::assemble(
        "hierarchy",
        seed,
        config_record,
        metrics,
        vec!["t", "y1", "y2", "y3", "depth"],
        trace,
        ModelArtifact::Network(Box::new(network)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_experiment_is_a_config_error() {
        let err = run_named("does-not-exist", 0).unwrap_err();
        assert!(matches!(err, IncSfaError::Config(_)));
        assert!(err.to_string().contains("simple-signal"), "{err}");
    }

    #[test]
    fn artifacts_land_on_disk_with_stable_fingerprints() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("simple-signal");
        let a = run_named("simple-signal", 0).unwrap();
        a.write(&out).unwrap();
        assert!(out.join("metrics.json").exists());
        assert!(out.join("outputs.csv").exists());
        assert!(out.join("model.bin").exists());

        let metrics_a = std::fs::read(out.join("metrics.json")).unwrap();
        let b = run_named("simple-signal", 0).unwrap();
        b.write(&out).unwrap();
        let metrics_b = std::fs::read(out.join("metrics.json")).unwrap();
        assert_eq!(metrics_a, metrics_b, "rerun changed the metrics file");
        assert_eq!(a.config_hash, b.config_hash);

        // Seed changes flow into the config record, hence into the hash.
        let c = run_named("simple-signal", 1).unwrap();
        assert_ne!(a.config_hash, c.config_hash);
    }

    #[test]
    fn trace_rows_match_their_columns() {
        let a = run_named("simple-signal", 0).unwrap();
        assert!(!a.trace.is_empty());
        for row in &a.trace {
            assert_eq!(row.len(), a.trace_columns.len());
        }
    }
}
