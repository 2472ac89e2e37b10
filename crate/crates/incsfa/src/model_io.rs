//! Versioned binary persistence for trained units.
//!
//! The format is little-endian throughout: an 8-byte magic, a format
//! version, the configuration as embedded JSON, every piece of mutable
//! state as raw arrays, and a trailing 64-bit FNV-1a checksum over all
//! preceding bytes. Files are written atomically; loading verifies magic,
//! version and checksum before touching any field, then cross-checks the
//! internal shape invariants. A round trip is bit-exact.

use std::path::Path;

use nalgebra::DVector;

use crate::ccipca::PrincipalComponentSet;
use crate::error::{IncSfaError, Result};
use crate::io::{atomic_write, fnv1a64};
use crate::mca::{GammaEstimator, SlowFeatureSet};
use crate::pipeline::{IncSfaConfig, IncSfaUnit};
use crate::signal::RunningMoments;

pub const MODEL_MAGIC: [u8; 8] = *b"INCSFA\0\0";
pub const MODEL_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_values(buf: &mut Vec<u8>, values: &DVector<f64>) {
    for &v in values.iter() {
        put_f64(buf, v);
    }
}

/// Serializes a unit to the binary model format (without writing a file).
pub fn encode_unit(unit: &IncSfaUnit) -> Result<Vec<u8>> {
    let config_json = serde_json::to_vec(unit.config())
        .map_err(|e| IncSfaError::Format(format!("could not encode model config: {e}")))?;
    let k = unit.pcs.k();
    let j = unit.features.j();

    let mut buf = Vec::with_capacity(1024 + 8 * k * unit.pcs.dim());
    buf.extend_from_slice(&MODEL_MAGIC);
    put_u32(&mut buf, MODEL_VERSION);
    put_u32(&mut buf, config_json.len() as u32);
    buf.extend_from_slice(&config_json);

    put_u64(&mut buf, unit.t);
    put_u64(&mut buf, unit.derivative_updates);
    put_u64(&mut buf, unit.episodes);
    put_f64(&mut buf, unit.eta_high_current);
    buf.push(unit.s_anchor.is_some() as u8);
    put_f64(&mut buf, unit.s_anchor.unwrap_or(0.0));
    put_f64(&mut buf, unit.prev_total_variance);

    put_u32(&mut buf, unit.moments.dim() as u32);
    put_u64(&mut buf, unit.moments.count());
    put_values(&mut buf, unit.moments.mean());
    put_values(&mut buf, unit.moments.variance());

    put_u32(&mut buf, k as u32);
    put_u32(&mut buf, unit.pcs.initialized_count() as u32);
    put_u64(&mut buf, unit.pcs.step());
    for v in unit.pcs.vectors() {
        put_values(&mut buf, v);
    }

    buf.push(unit.gamma.is_initialized() as u8);
    put_u64(&mut buf, unit.gamma.step());
    let (relative_margin, margin_floor) = unit.gamma.margins();
    put_f64(&mut buf, relative_margin);
    put_f64(&mut buf, margin_floor);
    put_values(&mut buf, unit.gamma.v1());

    put_u32(&mut buf, j as u32);
    put_u32(&mut buf, unit.features.initialized_count() as u32);
    put_u64(&mut buf, unit.features.step());
    put_u64(&mut buf, unit.features.reinit_seed());
    for w in unit.features.features() {
        put_values(&mut buf, w);
    }

    buf.push(unit.prev_z.is_some() as u8);
    if let Some(z) = &unit.prev_z {
        put_values(&mut buf, z);
    }
    buf.push(unit.prev_y.is_some() as u8);
    if let Some(y) = &unit.prev_y {
        put_values(&mut buf, y);
    }
    put_values(&mut buf, &unit.zdot_delta);
    put_values(&mut buf, &unit.ydot_delta);

    let checksum = fnv1a64(&buf);
    put_u64(&mut buf, checksum);
    Ok(buf)
}

/// Writes a unit to disk atomically in the binary model format.
pub fn save_unit(unit: &IncSfaUnit, path: &Path) -> Result<()> {
    atomic_write(path, &encode_unit(unit)?)
}

/// Reads a unit back from the binary model format.
pub fn load_unit(path: &Path) -> Result<IncSfaUnit> {
    let bytes = std::fs::read(path)?;
    decode_unit(&bytes)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(IncSfaError::Format("model file truncated".into()));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(IncSfaError::Format(format!(
                "model file corrupted: flag byte {v}"
            ))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn values(&mut self, n: usize) -> Result<DVector<f64>> {
        let bytes = self.take(8 * n)?;
        Ok(DVector::from_iterator(
            n,
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap())),
        ))
    }

    fn finished(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn inconsistent(what: &str) -> IncSfaError {
    IncSfaError::Format(format!("model file internally inconsistent: {what}"))
}

/// Parses a unit from bytes in the binary model format.
pub fn decode_unit(bytes: &[u8]) -> Result<IncSfaUnit> {
    if bytes.len() < MODEL_MAGIC.len() || bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(IncSfaError::Format(
            "not a model file (magic bytes do not match)".into(),
        ));
    }
    let mut cursor = Cursor::new(bytes);
    cursor.take(MODEL_MAGIC.len())?;
    let version = cursor.u32()?;
    if version != MODEL_VERSION {
        return Err(IncSfaError::Format(format!(
            "unsupported model format version {version} (this build reads version {MODEL_VERSION})"
        )));
    }
    if bytes.len() < 8 {
        return Err(IncSfaError::Format("model file truncated".into()));
    }
    let body_len = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[body_len..].try_into().unwrap());
    if fnv1a64(&bytes[..body_len]) != stored {
        return Err(IncSfaError::Format(
            "model file corrupted (checksum mismatch)".into(),
        ));
    }
    let body = Cursor {
        buf: &bytes[..body_len],
        pos: cursor.pos,
    };
    let mut cursor = body;

    let config_len = cursor.u32()? as usize;
    let config: IncSfaConfig = serde_json::from_slice(cursor.take(config_len)?)
        .map_err(|e| IncSfaError::Format(format!("model config does not parse: {e}")))?;
    config
        .validate()
        .map_err(|e| IncSfaError::Format(format!("model carries an invalid config: {e}")))?;
    let expanded = config.expanded_dim();

    let t = cursor.u64()?;
    let derivative_updates = cursor.u64()?;
    let episodes = cursor.u64()?;
    if t != derivative_updates + episodes {
        return Err(inconsistent("sample counters do not add up"));
    }
    let eta_high_current = cursor.f64()?;
    let s_anchor = if cursor.flag()? {
        Some(cursor.f64()?)
    } else {
        cursor.f64()?;
        None
    };
    let prev_total_variance = cursor.f64()?;

    let moments_dim = cursor.u32()? as usize;
    if moments_dim != expanded {
        return Err(inconsistent("moment tracker dimension"));
    }
    let moments_count = cursor.u64()?;
    let mean = cursor.values(expanded)?;
    let variance = cursor.values(expanded)?;

    let k = cursor.u32()? as usize;
    if k == 0 || k > config.num_components {
        return Err(inconsistent("component count"));
    }
    let pcs_initialized = cursor.u32()? as usize;
    if pcs_initialized > k {
        return Err(inconsistent("initialized component count"));
    }
    let pcs_t = cursor.u64()?;
    let mut vectors = Vec::with_capacity(k);
    for _ in 0..k {
        vectors.push(cursor.values(expanded)?);
    }

    let gamma_initialized = cursor.flag()?;
    let gamma_t = cursor.u64()?;
    let relative_margin = cursor.f64()?;
    let margin_floor = cursor.f64()?;
    let v1 = cursor.values(k)?;

    let j = cursor.u32()? as usize;
    if j != config.num_features || j > k {
        return Err(inconsistent("feature count"));
    }
    let features_initialized = cursor.u32()? as usize;
    if features_initialized > j {
        return Err(inconsistent("initialized feature count"));
    }
    let features_t = cursor.u64()?;
    let reinit_seed = cursor.u64()?;
    let mut w = Vec::with_capacity(j);
    for _ in 0..j {
        w.push(cursor.values(k)?);
    }

    let prev_z = if cursor.flag()? {
        Some(cursor.values(k)?)
    } else {
        None
    };
    let prev_y = if cursor.flag()? {
        Some(cursor.values(j)?)
    } else {
        None
    };
    if prev_z.is_some() != prev_y.is_some() {
        return Err(inconsistent("derivative memory flags"));
    }
    let zdot_delta = cursor.values(k)?;
    let ydot_delta = cursor.values(j)?;

    if !cursor.finished() {
        return Err(IncSfaError::Format(
            "model file has trailing bytes".into(),
        ));
    }

    Ok(IncSfaUnit {
        moments: RunningMoments::from_parts(mean, variance, moments_count),
        pcs: PrincipalComponentSet::from_parts(vectors, pcs_initialized, pcs_t),
        gamma: GammaEstimator::from_parts(
            v1,
            gamma_initialized,
            gamma_t,
            relative_margin,
            margin_floor,
        ),
        features: SlowFeatureSet::from_parts(w, features_initialized, features_t, reinit_seed),
        t,
        derivative_updates,
        episodes,
        eta_high_current,
        s_anchor,
        prev_z,
        prev_y,
        zdot_delta,
        ydot_delta,
        prev_total_variance,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{Expansion, McaNormalization};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn trained_unit() -> IncSfaUnit {
        let mut config = IncSfaConfig::defaults(3, 5, 2, 99);
        config.expansion = Expansion::Quadratic;
        config.variance_normalization = true;
        config.clip = Some((-4.0, 4.0));
        config.adapt_rate = true;
        config.slowness_window = 50;
        config.mca_normalize = McaNormalization::FirstUpdates(100);
        let mut unit = IncSfaUnit::new(config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let normal = StandardNormal;
        for step in 0..400 {
            if step == 150 {
                unit.begin_episode();
            }
            let x = DVector::from_fn(3, |_, _| {
                let v: f64 = normal.sample(&mut rng);
                v
            });
            unit.update(&x).unwrap();
        }
        unit
    }

    #[test]
    fn round_trip_is_bit_exact_and_behavior_preserving() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let mut original = trained_unit();
        save_unit(&original, &path).unwrap();
        let mut loaded = load_unit(&path).unwrap();

        assert_eq!(
            encode_unit(&original).unwrap(),
            encode_unit(&loaded).unwrap()
        );

        // The loaded unit continues the stream exactly like the original.
        let mut rng = ChaCha8Rng::seed_from_u64(321);
        let normal = StandardNormal;
        for _ in 0..50 {
            let x = DVector::from_fn(3, |_, _| {
                let v: f64 = normal.sample(&mut rng);
                v
            });
            let a = original.update(&x).unwrap();
            let b = loaded.update(&x).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = encode_unit(&trained_unit()).unwrap();
        let cut = &bytes[..bytes.len() - 10];
        let err = decode_unit(cut).unwrap_err();
        assert!(matches!(err, IncSfaError::Format(_)), "{err}");
    }

    #[test]
    fn corrupted_byte_fails_the_checksum() {
        let mut bytes = encode_unit(&trained_unit()).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        let err = decode_unit(&bytes).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn foreign_magic_is_rejected_before_anything_else() {
        let err = decode_unit(b"PNGBLOB\0somepayload").unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn future_version_is_rejected() {
        let mut bytes = encode_unit(&trained_unit()).unwrap();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        let err = decode_unit(&bytes).unwrap_err();
        assert!(err.to_string().contains("version 7"), "{err}");
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let bytes = encode_unit(&trained_unit()).unwrap();
        let body = &bytes[..bytes.len() - 8];
        let mut padded = body.to_vec();
        padded.extend_from_slice(&[0u8; 8]);
        let checksum = crate::io::fnv1a64(&padded);
        padded.extend_from_slice(&checksum.to_le_bytes());
        let err = decode_unit(&padded).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_unit(Path::new("/nonexistent/model.bin")).unwrap_err();
        assert!(matches!(err, IncSfaError::Io(_)));
    }
}
