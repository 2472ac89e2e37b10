//! File-format helpers shared by the CLI and the experiment runners:
//! atomic writes, JSON artifacts, CSV sample streams and a stable config
//! fingerprint. All artifacts are deterministic — rerunning with the same
//! inputs produces byte-identical files.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{IncSfaError, Result};
use crate::signal::Frame;

/// 64-bit FNV-1a over a byte slice.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Stable 16-hex-digit fingerprint of any serializable configuration,
/// computed over its canonical JSON encoding.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)
        .map_err(|e| IncSfaError::Format(format!("could not encode config: {e}")))?;
    Ok(format!("{:016x}", fnv1a64(&json)))
}

/// Writes a file through a sibling temp file plus rename, so readers never
/// observe a half-written artifact and failures leave the old file intact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| IncSfaError::InvalidInput(format!("invalid path {}", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

/// Pretty-printed JSON artifact with a trailing newline, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| IncSfaError::Format(format!("could not encode JSON: {e}")))?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

/// Writes frames as CSV with a header `{prefix}1,{prefix}2,...`.
pub fn write_frames_csv(path: &Path, frames: &[Frame], prefix: &str) -> Result<()> {
    let dim = frames.first().map(|f| f.len()).unwrap_or(0);
    let mut writer = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (1..=dim).map(|i| format!("{prefix}{i}")).collect();
    writer
        .write_record(&header)
        .map_err(|e| IncSfaError::Format(format!("could not write CSV: {e}")))?;
    for frame in frames {
        let record: Vec<String> = frame.iter().map(|v| v.to_string()).collect();
        writer
            .write_record(&record)
            .map_err(|e| IncSfaError::Format(format!("could not write CSV: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| IncSfaError::Format(format!("could not write CSV: {e}")))?;
    atomic_write(path, &bytes)
}

/// Writes numeric rows as CSV under explicit column names.
pub fn write_table_csv(path: &Path, columns: &[&str], rows: &[Frame]) -> Result<()> {
    if let Some(bad) = rows.iter().find(|r| r.len() != columns.len()) {
        return Err(IncSfaError::InvalidInput(format!(
            "table row has {} values for {} columns",
            bad.len(),
            columns.len()
        )));
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(columns)
        .map_err(|e| IncSfaError::Format(format!("could not write CSV: {e}")))?;
    for row in rows {
        let record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writer
            .write_record(&record)
            .map_err(|e| IncSfaError::Format(format!("could not write CSV: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| IncSfaError::Format(format!("could not write CSV: {e}")))?;
    atomic_write(path, &bytes)
}

/// Reads a CSV of numeric rows into frames.
///
/// A first row that does not parse as numbers is treated as a header. Every
/// data row must have the same number of columns; parse and shape problems
/// are reported with their 1-based line number.
pub fn read_frames_csv(path: &Path) -> Result<Vec<Frame>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                IncSfaError::Io(std::io::Error::other(format!("{}: {e}", path.display())))
            }
            _ => IncSfaError::Data(format!("{}: {e}", path.display())),
        })?;

    let mut frames: Vec<Frame> = Vec::new();
    let mut width: Option<usize> = None;
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IncSfaError::Data(format!("could not read CSV: {e}")))?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(index as u64 + 1);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut values = Vec::with_capacity(record.len());
        let mut bad_field: Option<&str> = None;
        for field in record.iter() {
            match field.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) => {
                    bad_field = Some(field);
                    break;
                }
            }
        }
        if let Some(field) = bad_field {
            if index == 0 {
                continue; // header row
            }
            return Err(IncSfaError::Data(format!(
                "line {line}: could not parse '{field}' as a number"
            )));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(IncSfaError::Data(format!(
                    "line {line}: expected {w} columns, found {}",
                    values.len()
                )));
            }
            _ => {}
        }
        frames.push(DVector::from_vec(values));
    }
    if frames.is_empty() {
        return Err(IncSfaError::Data(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Serialize;

    #[test]
    fn fnv_matches_reference_vectors() {
        // Published FNV-1a test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[derive(Serialize)]
    struct Cfg {
        seed: u64,
        rate: f64,
    }

    #[test]
    fn config_hash_is_stable_and_discriminates() {
        let a = config_hash(&Cfg { seed: 1, rate: 0.5 }).unwrap();
        let b = config_hash(&Cfg { seed: 1, rate: 0.5 }).unwrap();
        let c = config_hash(&Cfg { seed: 2, rate: 0.5 }).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("artifact.bin");
        atomic_write(&path, b"hello").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"hello");
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn frames_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frames.csv");
        let frames = vec![
            DVector::from_row_slice(&[1.0, -2.5]),
            DVector::from_row_slice(&[0.125, 3.0e-7]),
        ];
        write_frames_csv(&path, &frames, "x").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x1,x2\n"));
        let back = read_frames_csv(&path).unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn headerless_csv_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.csv");
        std::fs::write(&path, "1.0,2.0\n3.0,4.0\n").unwrap();
        let frames = read_frames_csv(&path).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1][1], 4.0);
    }

    #[test]
    fn malformed_cell_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,x2\n1.0,2.0\n1.0,oops\n").unwrap();
        let err = read_frames_csv(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("oops"), "{msg}");
    }

    #[test]
    fn ragged_row_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ragged.csv");
        std::fs::write(&path, "1.0,2.0\n3.0\n").unwrap();
        let err = read_frames_csv(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("expected 2"), "{msg}");
    }

    #[test]
    fn empty_csv_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(
            read_frames_csv(&path),
            Err(IncSfaError::Data(_))
        ));
    }
}
