//! Synthetic streams for the named experiments and the test suite.
//!
//! Everything here is seeded and deterministic: the same spec produces the
//! same stream, byte for byte, on every run.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{IncSfaError, Result};
use crate::signal::Frame;

/// Two-channel toy signal over one period: a slow sine hidden under a fast
/// squared cosine, plus the fast cosine on its own channel.
///
/// `x1(t) = sin(t) + cos(11 t)^2`, `x2(t) = cos(11 t)`, with `t` running
/// from 0 to 2 pi inclusive over `n` samples.
pub fn gen_simple(n: usize) -> Result<Vec<Frame>> {
    if n < 2 {
        return Err(IncSfaError::InvalidInput(format!(
            "signal needs at least 2 samples, got {n}"
        )));
    }
    Ok((0..n)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / (n - 1) as f64;
            DVector::from_row_slice(&[t.sin() + (11.0 * t).cos().powi(2), (11.0 * t).cos()])
        })
        .collect())
}

/// The toy signal with its channels swapped — same sources, different
/// read-out directions. Used to probe re-adaptation after a non-stationary
/// switch.
pub fn gen_simple_swapped(n: usize) -> Result<Vec<Frame>> {
    Ok(gen_simple(n)?
        .into_iter()
        .map(|x| DVector::from_row_slice(&[x[1], x[0]]))
        .collect())
}

/// Epoch-looped toy signal whose channels swap from `switch_epoch` onward
/// (0-based): the non-stationary stream of the adaptation study. A switch
/// epoch of 0 yields the fully swapped stream; a switch epoch at or past
/// `total_epochs` never switches.
pub fn gen_switched(
    n_per_epoch: usize,
    switch_epoch: usize,
    total_epochs: usize,
) -> Result<Vec<Frame>> {
    if total_epochs == 0 {
        return Err(IncSfaError::InvalidInput("need at least one epoch".into()));
    }
    let normal = gen_simple(n_per_epoch)?;
    let swapped = gen_simple_swapped(n_per_epoch)?;
    let mut stream = Vec::with_capacity(n_per_epoch * total_epochs);
    for epoch in 0..total_epochs {
        let source = if epoch < switch_epoch { &normal } else { &swapped };
        stream.extend(source.iter().cloned());
    }
    Ok(stream)
}

/// Iterates the logistic map `x <- (3.6 + 0.13 gamma) x (1 - x)` under an
/// externally supplied drive, one `gamma` value per produced sample.
///
/// Fails if the drive pushes the effective growth rate far enough that the
/// series escapes the unit interval.
pub fn logistic_map_series(n: usize, x0: f64, gamma: &[f64]) -> Result<Vec<f64>> {
    if !(0.0 < x0 && x0 < 1.0) {
        return Err(IncSfaError::InvalidInput(format!(
            "logistic map seed must lie in (0, 1), got {x0}"
        )));
    }
    if gamma.len() < n {
        return Err(IncSfaError::InvalidInput(format!(
            "need {n} drive values, got {}",
            gamma.len()
        )));
    }
    let mut series = Vec::with_capacity(n);
    let mut x = x0;
    for (k, &g) in gamma.iter().take(n).enumerate() {
        series.push(x);
        x = (3.6 + 0.13 * g) * x * (1.0 - x);
        if !(0.0..=1.0).contains(&x) {
            return Err(IncSfaError::Data(format!(
                "logistic map escaped the unit interval at step {}",
                k + 1
            )));
        }
    }
    Ok(series)
}

/// Chaotic scalar series driven by a slow two-tone force.
///
/// Returns `(series, force)` where `force[k] = sin(10 pi k/n) +
/// sin(22 pi k/n)` and the series follows [`logistic_map_series`] from
/// `x0 = 0.6`. The force is invisible in any single sample; it only shows
/// up in the dynamics.
pub fn gen_logistic(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let force: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 / n as f64;
            (10.0 * std::f64::consts::PI * t).sin() + (22.0 * std::f64::consts::PI * t).sin()
        })
        .collect();
    let series = logistic_map_series(n, 0.6, &force)?;
    Ok((series, force))
}

/// A momentum random walk inside a rectangular arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkSpec {
    pub steps: usize,
    /// Arena extents; positions stay in `[0, w] x [0, h]`.
    pub arena: (f64, f64),
    /// Velocity memory in [0, 1).
    pub momentum: f64,
    /// Per-axis standard deviation of the velocity innovation.
    pub noise: (f64, f64),
    pub seed: u64,
}

impl Default for RandomWalkSpec {
    fn default() -> Self {
        RandomWalkSpec {
            steps: 50_000,
            arena: (20.0, 10.0),
            momentum: 0.75,
            noise: (3.0, 2.5),
            seed: 0,
        }
    }
}

/// Simulates the walk: each step proposes `v <- m v + noise`, and a
/// proposal that would leave the arena halves the carried velocity and
/// redraws. Starts at the arena center.
pub fn gen_random_walk(spec: &RandomWalkSpec) -> Result<Vec<Frame>> {
    let (w, h) = spec.arena;
    if !(w > 0.0 && h > 0.0) {
        return Err(IncSfaError::InvalidInput(format!(
            "arena extents must be positive, got ({w}, {h})"
        )));
    }
    if !(0.0..1.0).contains(&spec.momentum) {
        return Err(IncSfaError::InvalidInput(format!(
            "momentum must lie in [0, 1), got {}",
            spec.momentum
        )));
    }
    if !(spec.noise.0 > 0.0 && spec.noise.1 > 0.0) {
        return Err(IncSfaError::InvalidInput(
            "velocity noise must be positive on both axes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = StandardNormal;
    let mut pos = (w / 2.0, h / 2.0);
    let mut vel = (0.0f64, 0.0f64);
    let mut frames = Vec::with_capacity(spec.steps);
    for _ in 0..spec.steps {
        let mut attempts = 0u32;
        loop {
            let ex: f64 = normal.sample(&mut rng);
            let ey: f64 = normal.sample(&mut rng);
            let cx = spec.momentum * vel.0 + spec.noise.0 * ex;
            let cy = spec.momentum * vel.1 + spec.noise.1 * ey;
            if (0.0..=w).contains(&(pos.0 + cx)) && (0.0..=h).contains(&(pos.1 + cy)) {
                vel = (cx, cy);
                break;
            }
            vel.0 *= 0.5;
            vel.1 *= 0.5;
            attempts += 1;
            if attempts > 10_000 {
                return Err(IncSfaError::Data(
                    "random walk could not find a step inside the arena".into(),
                ));
            }
        }
        pos = (pos.0 + vel.0, pos.1 + vel.1);
        frames.push(DVector::from_row_slice(&[pos.0, pos.1]));
    }
    Ok(frames)
}

/// Replaces every component of one frame with a constant spike.
pub fn inject_outlier(frames: &mut [Frame], index: usize, value: f64) -> Result<()> {
    let frame = frames.get_mut(index).ok_or_else(|| {
        IncSfaError::InvalidInput(format!("outlier index {index} out of range"))
    })?;
    frame.fill(value);
    Ok(())
}

/// Episodic streams with two hidden binary switches under heavy distractor
/// noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicSpec {
    pub episodes: usize,
    pub episode_len: usize,
    /// Observed dimension; the first two source coordinates are the
    /// switches, the rest are fresh unit Gaussians every sample.
    pub dim: usize,
    pub seed: u64,
}

impl Default for EpisodicSpec {
    fn default() -> Self {
        EpisodicSpec {
            episodes: 53,
            episode_len: 100,
            dim: 20,
            seed: 0,
        }
    }
}

/// One generated episodic data set.
#[derive(Debug, Clone)]
pub struct EpisodicData {
    pub episodes: Vec<Vec<Frame>>,
    /// Per episode, per sample: the joint switch state encoded as
    /// `(s1 > 0) << 1 | (s2 > 0)`, so 3 at the start and 0 at the end.
    pub states: Vec<Vec<u8>>,
    /// The orthogonal mixing applied to `[s1, s2, distractors...]`.
    pub mixing: DMatrix<f64>,
}

/// Generates episodes in which both switches start at +1 and each flips to
/// -1 exactly once, at independent random times away from the boundaries.
/// All coordinates are mixed by one random orthogonal matrix shared across
/// the whole set.
pub fn gen_episodic(spec: &EpisodicSpec) -> Result<EpisodicData> {
    if spec.dim < 3 {
        return Err(IncSfaError::InvalidInput(format!(
            "episodic streams need at least 3 dimensions, got {}",
            spec.dim
        )));
    }
    if spec.episode_len < 20 {
        return Err(IncSfaError::InvalidInput(format!(
            "episodes need at least 20 samples, got {}",
            spec.episode_len
        )));
    }
    if spec.episodes == 0 {
        return Err(IncSfaError::InvalidInput("need at least one episode".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = StandardNormal;

    let gauss = DMatrix::from_fn(spec.dim, spec.dim, |_, _| {
        let v: f64 = normal.sample(&mut rng);
        v
    });
    let mixing = gauss.qr().q();

    let flip_range = Uniform::new(5, spec.episode_len - 5).map_err(|e| {
        IncSfaError::InvalidInput(format!("episode too short for flip times: {e}"))
    })?;
    let mut episodes = Vec::with_capacity(spec.episodes);
    let mut states = Vec::with_capacity(spec.episodes);
    for _ in 0..spec.episodes {
        let flip1 = flip_range.sample(&mut rng);
        let flip2 = loop {
            let f = flip_range.sample(&mut rng);
            if f != flip1 {
                break f;
            }
        };
        let mut frames = Vec::with_capacity(spec.episode_len);
        let mut codes = Vec::with_capacity(spec.episode_len);
        for k in 0..spec.episode_len {
            let s1 = if k < flip1 { 1.0 } else { -1.0 };
            let s2 = if k < flip2 { 1.0 } else { -1.0 };
            let mut raw = DVector::from_fn(spec.dim, |_, _| {
                let v: f64 = normal.sample(&mut rng);
                v
            });
            raw[0] = s1;
            raw[1] = s2;
            frames.push(&mixing * raw);
            codes.push(((s1 > 0.0) as u8) << 1 | (s2 > 0.0) as u8);
        }
        episodes.push(frames);
        states.push(codes);
    }
    Ok(EpisodicData {
        episodes,
        states,
        mixing,
    })
}

/// A square board at a smoothly varying simulated distance, rendered to a
/// small grayscale image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingBoardSpec {
    pub frames: usize,
    /// Image is `image_size x image_size` pixels, flattened row-major.
    pub image_size: usize,
    /// Rendered side length is `base_side / depth`.
    pub base_side: f64,
    /// Depth follows a reflected momentum walk inside this range; equal
    /// bounds freeze the board.
    pub depth_range: (f64, f64),
    pub momentum: f64,
    /// Standard deviation of the depth velocity innovation.
    pub depth_noise: f64,
    pub seed: u64,
}

impl Default for MovingBoardSpec {
    fn default() -> Self {
        MovingBoardSpec {
            frames: 2000,
            image_size: 16,
            base_side: 12.0,
            depth_range: (1.0, 3.0),
            momentum: 0.9,
            depth_noise: 0.02,
            seed: 0,
        }
    }
}

/// Renders the depth walk. Pixel values are exact coverage fractions in
/// [0, 1] (anti-aliased edges), so total intensity equals the board area.
/// Returns the frames and the depth trajectory.
pub fn gen_moving_board(spec: &MovingBoardSpec) -> Result<(Vec<Frame>, Vec<f64>)> {
    let (lo, hi) = spec.depth_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(IncSfaError::InvalidInput(format!(
            "depth range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
        )));
    }
    if spec.image_size < 2 {
        return Err(IncSfaError::InvalidInput(
            "image must be at least 2x2 pixels".into(),
        ));
    }
    if !(spec.base_side > 0.0) {
        return Err(IncSfaError::InvalidInput("board side must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.momentum) {
        return Err(IncSfaError::InvalidInput(format!(
            "momentum must lie in [0, 1), got {}",
            spec.momentum
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = StandardNormal;
    let mut depth = (lo + hi) / 2.0;
    let mut vel = 0.0f64;
    let img = spec.image_size;
    let center = img as f64 / 2.0;
    let mut frames = Vec::with_capacity(spec.frames);
    let mut depths = Vec::with_capacity(spec.frames);
    for _ in 0..spec.frames {
        if hi > lo {
            let e: f64 = normal.sample(&mut rng);
            vel = spec.momentum * vel + spec.depth_noise * e;
            depth += vel;
            while depth < lo || depth > hi {
                if depth < lo {
                    depth = 2.0 * lo - depth;
                } else {
                    depth = 2.0 * hi - depth;
                }
                vel = -vel;
            }
        }
        let half = spec.base_side / depth / 2.0;
        let (b_lo, b_hi) = (center - half, center + half);
        let mut frame = DVector::zeros(img * img);
        for row in 0..img {
            let oy = overlap(row as f64, row as f64 + 1.0, b_lo, b_hi);
            if oy == 0.0 {
                continue;
            }
            for col in 0..img {
                let ox = overlap(col as f64, col as f64 + 1.0, b_lo, b_hi);
                if ox > 0.0 {
                    frame[row * img + col] = ox * oy;
                }
            }
        }
        frames.push(frame);
        depths.push(depth);
    }
    Ok((frames, depths))
}

fn overlap(a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64) -> f64 {
    (a_hi.min(b_hi) - a_lo.max(b_lo)).max(0.0)
}
