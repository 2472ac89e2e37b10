//! Streaming slow feature analysis without covariance matrices.
//!
//! The pipeline learns, one sample at a time: a running mean/variance, an
//! incremental PCA whitening of the input, and the minor components of the
//! whitened derivative — which are exactly the slowest-varying directions.
//! Batch references, signal generators, evaluation metrics, and a
//! receptive-field hierarchy for image streams round out the toolkit.
//!
//! Start with [`IncSfaUnit`] for a single learner, or browse `examples/`:
//!
//! ```text
//! cargo run --example streaming_basics     # unit API tour: update/infer/save
//! cargo run --example simple_signal        # recover a slow sine from a fast mixture
//! cargo run --example driving_force        # driving force of a chaotic series
//! cargo run --example spatial_coding       # place-like features from a random walk
//! cargo run --example adaptation           # re-learning after an input switch
//! cargo run --example outlier_recovery     # forgetting a corrupted sample
//! cargo run --example episodic_learning    # slow latents across episode resets
//! cargo run --example hierarchy_video      # two-layer network on a synthetic video
//! ```
//!
//! The `incsfa` binary wraps the same entry points as `run`, `train`,
//! `infer`, and `inspect` subcommands.

pub mod batch;
pub mod ccipca;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod hierarchy;
pub mod io;
pub mod mca;
pub mod metrics;
pub mod model_io;
pub mod pipeline;
pub mod signal;

pub use error::{IncSfaError, Result};
pub use pipeline::{IncSfaConfig, IncSfaUnit};
pub use signal::Frame;
