//! FVEC1 feature files.
//!
//! Layout: magic `FVEC1` (5 bytes), `u32` LE dimension, `u64` LE row count,
//! then row-major `f32` LE values. Row ids live in a sidecar JSON Lines
//! index next to the data file (`<file>.index.jsonl`), one
//! `{"row": n, "id": "..."}` object per row.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureChannel, FeatureVector};

pub const MAGIC: &[u8; 5] = b"FVEC1";
const HEADER_LEN: usize = 5 + 4 + 8;

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    row: u64,
    id: String,
}

/// Sidecar index path for a feature file.
pub fn index_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".index.jsonl");
    PathBuf::from(name)
}

/// Channel name implied by a feature file path (its file stem).
pub fn channel_name_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "channel".into())
}

/// Encode rows (in the given order) as an FVEC1 payload.
pub fn encode_rows<'a>(dim: usize, rows: impl ExactSizeIterator<Item = &'a [f64]>) -> Result<Vec<u8>> {
    let dim32 = u32::try_from(dim).map_err(|_| Error::Validation(format!("dimension {dim} exceeds u32")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + rows.len() * dim * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&dim32.to_le_bytes());
    out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    for row in rows {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: row.len(),
            });
        }
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Decode an FVEC1 payload into `(dim, rows)`.
pub fn decode_rows(bytes: &[u8], location: &str) -> Result<(usize, Vec<Vec<f64>>)> {
    if bytes.len() < HEADER_LEN || &bytes[..5] != MAGIC {
        return Err(Error::parse(location, "missing FVEC1 magic"));
    }
    let dim = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let rows = u64::from_le_bytes(bytes[9..17].try_into().expect("8 bytes")) as usize;
    if dim == 0 {
        return Err(Error::parse(location, "dimension must be positive"));
    }
    let expected = rows
        .checked_mul(dim)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::parse(location, "row count overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::parse(
            location,
            format!("expected {expected} payload bytes for {rows}x{dim}, found {}", payload.len()),
        ));
    }
    let mut out = Vec::with_capacity(rows);
    for (r, chunk) in payload.chunks_exact(dim * 4).enumerate() {
        let row: Vec<f64> = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        if let Some(col) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::parse(location, format!("non-finite value at row {r}, column {col}")));
        }
        out.push(row);
    }
    Ok((dim, out))
}

/// Write a channel as an FVEC1 file plus sidecar index, rows in id order.
pub fn write_channel(channel: &FeatureChannel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_rows(channel.dim(), channel.iter().map(|(_, v)| v.values()))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let idx = index_path(path);
    let file = std::fs::File::create(&idx).map_err(|e| Error::io(&idx, e))?;
    let mut w = BufWriter::new(file);
    for (row, (id, _)) in channel.iter().enumerate() {
        let line = serde_json::to_string(&IndexEntry {
            row: row as u64,
            id: id.to_string(),
        })
        .expect("index entry serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(&idx, e))?;
    }
    w.flush().map_err(|e| Error::io(&idx, e))
}

fn read_index(path: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut by_row = BTreeMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let loc = format!("{}:{}", path.display(), n + 1);
        let entry: IndexEntry = serde_json::from_str(&line).map_err(|e| Error::parse(&loc, e))?;
        if by_row.insert(entry.row, entry.id).is_some() {
            return Err(Error::parse(loc, format!("row {} listed twice", entry.row)));
        }
    }
    let ids: Vec<String> = by_row.values().cloned().collect();
    if by_row.keys().enumerate().any(|(i, &r)| r != i as u64) {
        return Err(Error::parse(path.display().to_string(), "index rows are not 0..n"));
    }
    Ok(ids)
}

/// Load an externally computed channel (or one written by
/// [`write_channel`]). The channel is named after the file stem.
pub fn load_external_channel(path: impl AsRef<Path>) -> Result<FeatureChannel> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let location = path.display().to_string();
    let (dim, rows) = decode_rows(&bytes, &location)?;
    let ids = read_index(&index_path(path))?;
    if ids.len() != rows.len() {
        return Err(Error::parse(
            location,
            format!("header lists {} rows but index lists {} ids", rows.len(), ids.len()),
        ));
    }
    let name = channel_name_for(path);
    let mut channel = FeatureChannel::new(name.clone(), dim)?;
    for (id, values) in ids.into_iter().zip(rows) {
        channel.insert(id, FeatureVector::new(name.clone(), values)?)?;
    }
    Ok(channel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel(name: &str, dim: usize, rows: usize) -> FeatureChannel {
        let mut c = FeatureChannel::new(name, dim).unwrap();
        for r in 0..rows {
            let v = (0..dim).map(|j| (r * dim + j) as f64 * 0.25).collect();
            c.insert(format!("id{r:03}"), FeatureVector::new(name, v).unwrap()).unwrap();
        }
        c
    }

    #[test]
    fn round_trips_decaf_shaped_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decaf6.fvec");
        let c = channel("decaf6", 4096, 10);
        write_channel(&c, &path).unwrap();
        let back = load_external_channel(&path).unwrap();
        assert_eq!(back.len(), 10);
        assert_eq!(back.dim(), 4096);
        assert_eq!(back, c);
    }

    #[test]
    fn accepts_mc_bit_dimension() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mcbit.fvec");
        write_channel(&channel("mcbit", 15_000, 2), &path).unwrap();
        assert_eq!(load_external_channel(&path).unwrap().dim(), 15_000);
    }

    #[test]
    fn rejects_row_count_disagreement() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.fvec");
        write_channel(&channel("x", 3, 5), &path).unwrap();
        let mut idx = std::fs::read_to_string(index_path(&path)).unwrap();
        idx.push_str("{\"row\": 5, \"id\": \"extra\"}\n");
        std::fs::write(index_path(&path), idx).unwrap();
        assert!(matches!(load_external_channel(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn rejects_bad_magic_and_non_finite() {
        assert!(decode_rows(b"FVEC2\x01\0\0\0\0\0\0\0\0\0\0\0", "m").is_err());
        let mut bytes = encode_rows(2, [&[1.0, 2.0][..]].into_iter()).unwrap();
        bytes[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_rows(&bytes, "m").is_err());
        let truncated = &encode_rows(2, [&[1.0, 2.0][..]].into_iter()).unwrap()[..HEADER_LEN + 3];
        assert!(decode_rows(truncated, "m").is_err());
    }

    #[test]
    fn header_layout_is_little_endian() {
        let bytes = encode_rows(3, [&[1.0, -2.0, 0.5][..]].into_iter()).unwrap();
        assert_eq!(&bytes[..5], b"FVEC1");
        assert_eq!(&bytes[5..9], &[3, 0, 0, 0]);
        assert_eq!(&bytes[9..17], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[17..21], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 17 + 12);
    }
}
