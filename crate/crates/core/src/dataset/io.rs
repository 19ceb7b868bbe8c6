//! On-disk dataset formats.
//!
//! Metadata travels as a JSONL manifest (one record per line, `frame_id`
//! equal to the record index). Descriptors travel in a little-endian binary
//! file: magic `GEMB`, u32 version, u64 row count, u32 dimension, a
//! normalized flag byte, three reserved bytes, then `n * dim` f32 values in
//! row-major order.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Dataset, ManifestRecord};

pub(crate) const EMBEDDING_MAGIC: &[u8; 4] = b"GEMB";
pub(crate) const EMBEDDING_VERSION: u32 = 1;

/// Reads a manifest and an embedding file into a validated dataset.
pub fn load_dataset<S: Scalar>(
    manifest_path: impl AsRef<Path>,
    embeddings_path: impl AsRef<Path>,
) -> Result<Dataset<S>> {
    let records = read_manifest(manifest_path.as_ref())?;
    let embeddings = read_embeddings(embeddings_path.as_ref())?;
    if embeddings.n() != records.len() {
        return Err(Error::RowCountMismatch {
            frames: records.len(),
            rows: embeddings.n(),
        });
    }
    Dataset::from_records(records, embeddings)
}

/// Writes the two dataset files. Descriptors are stored as f32.
pub fn save_dataset<S: Scalar>(
    ds: &Dataset<S>,
    manifest_path: impl AsRef<Path>,
    embeddings_path: impl AsRef<Path>,
) -> Result<()> {
    write_manifest(ds, manifest_path.as_ref())?;
    write_embeddings(ds.embeddings(), embeddings_path.as_ref())
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = File::open(path).map_err(Error::io(path))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(Error::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if !rec.utm_east.is_finite() || !rec.utm_north.is_finite() {
            return Err(Error::Manifest {
                line: i + 1,
                msg: "non-finite position".into(),
            });
        }
        if !seen.insert(rec.frame_id) {
            return Err(Error::DuplicateFrameId {
                id: rec.frame_id,
                line: i + 1,
            });
        }
        if rec.frame_id != records.len() as u64 {
            return Err(Error::FrameIdOutOfOrder {
                id: rec.frame_id,
                line: i + 1,
                expected: records.len() as u64,
            });
        }
        records.push(rec);
    }
    Ok(records)
}

fn write_manifest<S: Scalar>(ds: &Dataset<S>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    for id in 0..ds.n_frames() as u64 {
        let rec = ds.record(id);
        let line = serde_json::to_string(&rec).expect("manifest record serializes");
        writeln!(w, "{line}").map_err(Error::io(path))?;
    }
    w.flush().map_err(Error::io(path))
}

pub(crate) fn read_embeddings<S: Scalar>(path: &Path) -> Result<EmbeddingMatrix<S>> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut r = BufReader::new(file);
    let bad = |msg: &str| Error::EmbeddingFormat {
        path: path.to_owned(),
        msg: msg.to_owned(),
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(Error::io(path))?;
    if &magic != EMBEDDING_MAGIC {
        return Err(bad("bad magic, not an embedding file"));
    }
    let mut u32buf = [0u8; 4];
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u32buf).map_err(Error::io(path))?;
    let version = u32::from_le_bytes(u32buf);
    if version != EMBEDDING_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    r.read_exact(&mut u64buf).map_err(Error::io(path))?;
    let n = u64::from_le_bytes(u64buf) as usize;
    r.read_exact(&mut u32buf).map_err(Error::io(path))?;
    let dim = u32::from_le_bytes(u32buf) as usize;
    let mut flags = [0u8; 4];
    r.read_exact(&mut flags).map_err(Error::io(path))?;
    let normalized = match flags[0] {
        0 => false,
        1 => true,
        other => return Err(bad(&format!("unknown normalized flag {other}"))),
    };

    let count = n
        .checked_mul(dim)
        .ok_or_else(|| bad("row count times dimension overflows"))?;
    let mut payload = vec![0u8; count * 4];
    r.read_exact(&mut payload)
        .map_err(|_| bad(&format!("truncated payload, expected {count} f32 values")))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(Error::io(path))? != 0 {
        return Err(bad("trailing bytes after payload"));
    }

    let mut values = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        if !v.is_finite() {
            return Err(Error::NonFinite {
                row: i.checked_div(dim).unwrap_or(0),
                col: if dim == 0 { 0 } else { i % dim },
            });
        }
        values.push(S::of_f32(v));
    }
    let m = EmbeddingMatrix::from_values(n, dim, values)?;
    if normalized {
        m.assert_normalized()
    } else {
        Ok(m)
    }
}

pub(crate) fn write_embeddings<S: Scalar>(m: &EmbeddingMatrix<S>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(Error::io(path));
    write(EMBEDDING_MAGIC)?;
    write(&EMBEDDING_VERSION.to_le_bytes())?;
    write(&(m.n() as u64).to_le_bytes())?;
    write(&(m.dim() as u32).to_le_bytes())?;
    write(&[u8::from(m.is_normalized()), 0, 0, 0])?;
    for v in m.values() {
        write(&v.as_f32().to_le_bytes())?;
    }
    w.flush().map_err(Error::io(path))
}
