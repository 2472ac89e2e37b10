//! Receptive-field hierarchies of streaming slow-feature units.
//!
//! A network stacks layers over a single-channel image. Each layer tiles
//! its input volume with (possibly overlapping) rectangular fields, one
//! independent unit per field; the layer's output volume is the node grid
//! with one channel per extracted feature. Layers train strictly bottom-up:
//! while layer `l` learns, layers below it are frozen and only execute
//! their read-out, so higher layers see a stationary code.
//!
//! Volumes are flattened node-major, channel-minor:
//! `index = (row * cols + col) * channels + channel`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::ccipca::AmnesicSchedule;
use crate::error::{IncSfaError, Result};
use crate::io::{atomic_write, fnv1a64};
use crate::mca::McaRateSchedule;
use crate::model_io::{decode_unit, encode_unit};
use crate::pipeline::{Expansion, IncSfaConfig, IncSfaUnit, McaNormalization};
use crate::signal::Frame;

pub const NETWORK_MAGIC: [u8; 8] = *b"INCSFAN\0";
pub const NETWORK_VERSION: u32 = 1;

/// One layer of the hierarchy: field geometry plus the unit settings
/// every node of the layer shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// Receptive field extent (rows, cols) in input-grid cells.
    pub field: (usize, usize),
    /// Overlap between horizontally/vertically adjacent fields, per axis;
    /// the stride is `field - overlap`.
    pub overlap: (usize, usize),
    pub num_components: usize,
    pub num_features: usize,
    pub amnesic: AmnesicSchedule,
    pub mca_rate: McaRateSchedule,
    #[serde(default)]
    pub expansion: Expansion,
    #[serde(default)]
    pub clip: Option<(f64, f64)>,
}

/// Geometry and seeding of a whole network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Input image extent (rows, cols), one channel.
    pub input: (usize, usize),
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
}

/// Field anchor positions along one axis: a regular stride grid whose last
/// anchor is pulled to the far edge so the full extent is covered (when
/// more than one field fits).
fn anchors(extent: usize, field: usize, stride: usize) -> Vec<usize> {
    debug_assert!(field <= extent && stride >= 1);
    let n = (extent - field) / stride + 1;
    let mut positions: Vec<usize> = (0..n).map(|i| i * stride).collect();
    if n > 1 {
        positions[n - 1] = extent - field;
    }
    positions
}

fn node_seed(seed: u64, layer: usize, node: usize) -> u64 {
    seed ^ (layer as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (node as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

#[derive(Debug, Clone)]
struct Layer {
    grid: (usize, usize),
    /// Per node: flat indices into this layer's input volume.
    slices: Vec<Vec<usize>>,
    units: Vec<IncSfaUnit>,
}

impl Layer {
    fn features_per_node(&self) -> usize {
        self.units[0].num_features()
    }

    fn output_len(&self) -> usize {
        self.grid.0 * self.grid.1 * self.features_per_node()
    }

    /// Read-out of the whole layer (no state change).
    fn forward_volume(&self, vol: &DVector<f64>) -> Result<DVector<f64>> {
        let j = self.features_per_node();
        let mut out = DVector::zeros(self.output_len());
        for (node, (slice, unit)) in self.slices.iter().zip(&self.units).enumerate() {
            let y = unit.infer(&gather(vol, slice))?;
            out.rows_mut(node * j, j).copy_from(&y);
        }
        Ok(out)
    }
}

fn gather(vol: &DVector<f64>, indices: &[usize]) -> DVector<f64> {
    DVector::from_iterator(indices.len(), indices.iter().map(|&i| vol[i]))
}

/// A layered receptive-field network over a single-channel image stream.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    trained_layers: usize,
}

impl Network {
    /// Builds the full geometry and fresh units for every node. Every unit
    /// gets its own seed derived from the network seed and its position.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        if spec.layers.is_empty() {
            return Err(IncSfaError::Config("network needs at least one layer".into()));
        }
        if spec.input.0 == 0 || spec.input.1 == 0 {
            return Err(IncSfaError::Config("network input extent must be positive".into()));
        }
        let mut shape = (spec.input.0, spec.input.1, 1usize);
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (li, ls) in spec.layers.iter().enumerate() {
            let (fy, fx) = ls.field;
            if fy == 0 || fx == 0 || fy > shape.0 || fx > shape.1 {
                return Err(IncSfaError::Config(format!(
                    "layer {li}: field {fy}x{fx} does not fit its {}x{} input grid",
                    shape.0, shape.1
                )));
            }
            if ls.overlap.0 >= fy || ls.overlap.1 >= fx {
                return Err(IncSfaError::Config(format!(
                    "layer {li}: overlap must be smaller than the field on both axes"
                )));
            }
            let stride = (fy - ls.overlap.0, fx - ls.overlap.1);
            let ay = anchors(shape.0, fy, stride.0);
            let ax = anchors(shape.1, fx, stride.1);
            let grid = (ay.len(), ax.len());
            let channels = shape.2;
            let mut slices = Vec::with_capacity(grid.0 * grid.1);
            let mut units = Vec::with_capacity(grid.0 * grid.1);
            for &y0 in &ay {
                for &x0 in &ax {
                    let mut indices = Vec::with_capacity(fy * fx * channels);
                    for dy in 0..fy {
                        for dx in 0..fx {
                            let cell = (y0 + dy) * shape.1 + (x0 + dx);
                            for ch in 0..channels {
                                indices.push(cell * channels + ch);
                            }
                        }
                    }
                    let node = slices.len();
                    let config = IncSfaConfig {
                        input_dim: indices.len(),
                        expansion: ls.expansion,
                        variance_normalization: false,
                        clip: ls.clip,
                        num_components: ls.num_components,
                        num_features: ls.num_features,
                        amnesic: ls.amnesic,
                        mean_amnesic: None,
                        mca_rate: ls.mca_rate,
                        mca_normalize: McaNormalization::Always,
                        mca_stagger: 0,
                        adapt_rate: false,
                        dim_reduction: None,
                        slowness_window: 2000,
                        seed: node_seed(spec.seed, li, node),
                    };
                    units.push(IncSfaUnit::new(config).map_err(|e| {
                        IncSfaError::Config(format!("layer {li}, node {node}: {e}"))
                    })?);
                    slices.push(indices);
                }
            }
            layers.push(Layer { grid, slices, units });
            shape = (grid.0, grid.1, ls.num_features);
        }
        Ok(Network {
            spec,
            layers,
            trained_layers: 0,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn trained_layers(&self) -> usize {
        self.trained_layers
    }

    pub fn grid(&self, layer: usize) -> (usize, usize) {
        self.layers[layer].grid
    }

    pub fn layer_units(&self, layer: usize) -> &[IncSfaUnit] {
        &self.layers[layer].units
    }

    /// Dimension of [`Network::forward`] outputs.
    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.output_len()).unwrap_or(0)
    }

    /// Input volume to `layer` (the raw frame propagated through all
    /// layers below it, read-only).
    fn volume_at(&self, frame: &Frame, layer: usize) -> Result<DVector<f64>> {
        let expect = self.spec.input.0 * self.spec.input.1;
        if frame.len() != expect {
            return Err(IncSfaError::InvalidInput(format!(
                "frame has {} pixels, network expects {expect}",
                frame.len()
            )));
        }
        let mut vol = frame.clone();
        for l in &self.layers[..layer] {
            vol = l.forward_volume(&vol)?;
        }
        Ok(vol)
    }

    /// Trains one layer for `epochs` passes over the frame stream. Layers
    /// must be trained strictly bottom-up; everything below runs frozen.
    /// Every epoch starts a new episode for the layer being trained.
    pub fn train_layer(&mut self, layer: usize, frames: &[Frame], epochs: usize) -> Result<()> {
        if layer >= self.layers.len() {
            return Err(IncSfaError::InvalidInput(format!(
                "layer {layer} out of range for {} layers",
                self.layers.len()
            )));
        }
        if layer != self.trained_layers {
            return Err(IncSfaError::Config(format!(
                "layers train strictly bottom-up: expected layer {}, got {layer}",
                self.trained_layers
            )));
        }
        if epochs == 0 || frames.is_empty() {
            return Err(IncSfaError::InvalidInput(
                "training needs at least one epoch over at least one frame".into(),
            ));
        }
        for _ in 0..epochs {
            for unit in &mut self.layers[layer].units {
                unit.begin_episode();
            }
            for frame in frames {
                let vol = self.volume_at(frame, layer)?;
                let l = &mut self.layers[layer];
                for (slice, unit) in l.slices.iter().zip(&mut l.units) {
                    unit.update(&gather(&vol, slice))?;
                }
            }
        }
        self.trained_layers = layer + 1;
        Ok(())
    }

    /// Full read-out: the top layer's output volume for one frame.
    /// Requires every layer to be trained.
    pub fn forward(&self, frame: &Frame) -> Result<Frame> {
        if self.trained_layers < self.layers.len() {
            return Err(IncSfaError::Untrained(format!(
                "only {} of {} layers are trained",
                self.trained_layers,
                self.layers.len()
            )));
        }
        self.volume_at(frame, self.layers.len())
    }

    /// Serializes the network: spec, training progress and every unit.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let spec_json = serde_json::to_vec(&self.spec)
            .map_err(|e| IncSfaError::Format(format!("could not encode network spec: {e}")))?;
        let mut buf = Vec::new();
        buf.extend_from_slice(&NETWORK_MAGIC);
        buf.extend_from_slice(&NETWORK_VERSION.to_le_bytes());
        buf.extend_from_slice(&(spec_json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&spec_json);
        buf.extend_from_slice(&(self.trained_layers as u32).to_le_bytes());
        for layer in &self.layers {
            for unit in &layer.units {
                let blob = encode_unit(unit)?;
                buf.extend_from_slice(&(blob.len() as u32).to_le_bytes());
                buf.extend_from_slice(&blob);
            }
        }
        let checksum = fnv1a64(&buf);
        buf.extend_from_slice(&checksum.to_le_bytes());
        Ok(buf)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        atomic_write(path, &self.encode()?)
    }

    /// Rebuilds a network from [`Network::encode`] bytes: the geometry is
    /// reconstructed from the embedded spec, then every unit state is
    /// restored and cross-checked against the geometry.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < NETWORK_MAGIC.len() || bytes[..NETWORK_MAGIC.len()] != NETWORK_MAGIC {
            return Err(IncSfaError::Format(
                "not a network file (magic bytes do not match)".into(),
            ));
        }
        let mut pos = NETWORK_MAGIC.len();
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if bytes.len() - *pos < n {
                return Err(IncSfaError::Format("network file truncated".into()));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if version != NETWORK_VERSION {
            return Err(IncSfaError::Format(format!(
                "unsupported network format version {version} (this build reads version {NETWORK_VERSION})"
            )));
        }
        if bytes.len() < 8 {
            return Err(IncSfaError::Format("network file truncated".into()));
        }
        let body_len = bytes.len() - 8;
        let stored = u64::from_le_bytes(bytes[body_len..].try_into().unwrap());
        if fnv1a64(&bytes[..body_len]) != stored {
            return Err(IncSfaError::Format(
                "network file corrupted (checksum mismatch)".into(),
            ));
        }
        let bytes = &bytes[..body_len];
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if bytes.len() - *pos < n {
                return Err(IncSfaError::Format("network file truncated".into()));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let spec_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let spec: NetworkSpec = serde_json::from_slice(take(&mut pos, spec_len)?)
            .map_err(|e| IncSfaError::Format(format!("network spec does not parse: {e}")))?;
        let trained = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;

        let mut network = Network::new(spec)?;
        if trained > network.layers.len() {
            return Err(IncSfaError::Format(
                "network file internally inconsistent: trained layer count".into(),
            ));
        }
        for layer in &mut network.layers {
            for unit in &mut layer.units {
                let blob_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
                let decoded = decode_unit(take(&mut pos, blob_len)?)?;
                if decoded.config() != unit.config() {
                    return Err(IncSfaError::Format(
                        "network file internally inconsistent: unit config does not match the spec geometry"
                            .into(),
                    ));
                }
                *unit = decoded;
            }
        }
        if pos != bytes.len() {
            return Err(IncSfaError::Format(
                "network file has trailing bytes".into(),
            ));
        }
        network.trained_layers = trained;
        Ok(network)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_moving_board, MovingBoardSpec};

    fn layer(field: usize, overlap: usize, k: usize, j: usize, eta: f64) -> LayerSpec {
        LayerSpec {
            field: (field, field),
            overlap: (overlap, overlap),
            num_components: k,
            num_features: j,
            amnesic: AmnesicSchedule::new(20, 200, 2.0, 2000.0).unwrap(),
            mean_amnesic: None,
            mca_stagger: 0,
            mca_rate: McaRateSchedule::constant(eta).unwrap(),
            expansion: Expansion::None,
            clip: Some((-5.0, 5.0)),
        }
    }

    fn small_spec() -> NetworkSpec {
        NetworkSpec {
            input: (6, 6),
            layers: vec![layer(4, 2, 4, 2, 0.05), layer(2, 0, 4, 2, 0.05)],
            seed: 11,
        }
    }

    fn board_frames(n: usize) -> Vec<Frame> {
        gen_moving_board(&MovingBoardSpec {
            frames: n,
            image_size: 6,
            base_side: 4.0,
            depth_range: (1.0, 2.0),
            momentum: 0.8,
            depth_noise: 0.05,
            seed: 3,
        })
        .unwrap()
        .0
    }

    #[test]
    fn overlapping_tiling_covers_the_whole_image() {
        let spec = NetworkSpec {
            input: (83, 100),
            layers: vec![layer(10, 5, 8, 4, 0.05)],
            seed: 0,
        };
        let network = Network::new(spec).unwrap();
        assert_eq!(network.grid(0), (15, 19));
        let mut covered = vec![false; 83 * 100];
        for slice in &network.layers[0].slices {
            assert_eq!(slice.len(), 100);
            for &i in slice {
                covered[i] = true;
            }
        }
        assert!(covered.iter().all(|&c| c), "tiling left pixels uncovered");
        // The last anchors sit flush with the far edges.
        let last = network.layers[0].slices.last().unwrap();
        assert_eq!(*last.last().unwrap(), 83 * 100 - 1);
    }

    #[test]
    fn single_field_layers_anchor_at_the_origin() {
        let spec = NetworkSpec {
            input: (10, 8),
            layers: vec![layer(8, 4, 4, 2, 0.05)],
            seed: 0,
        };
        let network = Network::new(spec).unwrap();
        assert_eq!(network.grid(0), (1, 1));
        assert_eq!(network.layers[0].slices[0][0], 0);
    }

    #[test]
    fn geometry_validation_rejects_misfits() {
        let mut spec = small_spec();
        spec.layers[0].field = (7, 7);
        assert!(Network::new(spec).is_err());
        let mut spec = small_spec();
        spec.layers[0].overlap = (4, 4);
        assert!(Network::new(spec).is_err());
        let mut spec = small_spec();
        spec.layers[0].num_components = 100; // exceeds 4x4 field
        assert!(Network::new(spec).is_err());
    }

    #[test]
    fn every_node_gets_its_own_seed() {
        let network = Network::new(small_spec()).unwrap();
        let mut seeds: Vec<u64> = network
            .layer_units(0)
            .iter()
            .map(|u| u.config().seed)
            .collect();
        seeds.push(network.layer_units(1)[0].config().seed);
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 5, "node seeds collide");
    }

    #[test]
    fn layers_train_bottom_up_and_lower_layers_freeze() {
        let frames = board_frames(120);
        let mut network = Network::new(small_spec()).unwrap();
        assert!(matches!(
            network.train_layer(1, &frames, 1),
            Err(IncSfaError::Config(_))
        ));
        assert!(matches!(
            network.forward(&frames[0]),
            Err(IncSfaError::Untrained(_))
        ));

        network.train_layer(0, &frames, 2).unwrap();
        let frozen: Vec<Vec<u8>> = network
            .layer_units(0)
            .iter()
            .map(|u| encode_unit(u).unwrap())
            .collect();
        network.train_layer(1, &frames, 2).unwrap();
        let after: Vec<Vec<u8>> = network
            .layer_units(0)
            .iter()
            .map(|u| encode_unit(u).unwrap())
            .collect();
        assert_eq!(frozen, after, "training layer 1 modified layer 0");

        // Re-training a finished layer is rejected.
        assert!(network.train_layer(0, &frames, 1).is_err());

        let out = network.forward(&frames[0]).unwrap();
        assert_eq!(out.len(), network.output_dim());
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn training_is_deterministic() {
        let frames = board_frames(100);
        let build = || {
            let mut n = Network::new(small_spec()).unwrap();
            n.train_layer(0, &frames, 1).unwrap();
            n.train_layer(1, &frames, 1).unwrap();
            n
        };
        assert_eq!(build().encode().unwrap(), build().encode().unwrap());
    }

    #[test]
    fn network_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("network.bin");
        let frames = board_frames(100);
        let mut network = Network::new(small_spec()).unwrap();
        network.train_layer(0, &frames, 1).unwrap();
        network.save(&path).unwrap();

        let mut loaded = Network::load(&path).unwrap();
        assert_eq!(loaded.trained_layers(), 1);
        assert_eq!(
            loaded.encode().unwrap(),
            network.encode().unwrap(),
            "round trip is not bit-exact"
        );

        // Training continues from where the original stopped.
        loaded.train_layer(1, &frames, 1).unwrap();
        network.train_layer(1, &frames, 1).unwrap();
        let a = network.forward(&frames[5]).unwrap();
        let b = loaded.forward(&frames[5]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupted_network_file_is_rejected() {
        let mut network = Network::new(small_spec()).unwrap();
        let frames = board_frames(60);
        network.train_layer(0, &frames, 1).unwrap();
        let mut bytes = network.encode().unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        let err = Network::decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
        assert!(Network::decode(&bytes[..40]).is_err());
    }
}
