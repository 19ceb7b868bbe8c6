//! Frames, sequences, and the dataset container.
//!
//! A dataset couples per-frame metadata (sequence membership, planar
//! position) with one descriptor row per frame. `frame_id` is the row index
//! into the descriptor matrix; loaders enforce that and `validate` audits it
//! for datasets assembled in memory.

mod io;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{norm, EmbeddingMatrix, NORM_TOL};
use crate::error::{Error, Result};
use crate::geo::Position;
use crate::scalar::Scalar;

pub use io::{load_dataset, save_dataset};

/// One captured frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub frame_id: u64,
    /// Index into [`Dataset::sequences`].
    pub seq: u32,
    /// Position of this frame within its sequence, starting at 0.
    pub seq_index: u32,
    pub position: Position,
}

/// A contiguous traversal; frames are ordered by `seq_index`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub seq_id: String,
    /// Index into [`Dataset::cities`].
    pub city: u32,
    pub frame_ids: Vec<u64>,
}

/// One line of the JSONL manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub frame_id: u64,
    pub seq_id: String,
    pub city: String,
    pub utm_east: f64,
    pub utm_north: f64,
    pub seq_index: u32,
}

/// Frames, their grouping into sequences and cities, and one descriptor per
/// frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<S: Scalar> {
    frames: Vec<Frame>,
    sequences: Vec<Sequence>,
    cities: Vec<String>,
    city_sequences: Vec<Vec<u32>>,
    seq_lookup: BTreeMap<String, u32>,
    embeddings: EmbeddingMatrix<S>,
}

impl<S: Scalar> Dataset<S> {
    /// Assembles a dataset from manifest records and a descriptor matrix,
    /// then validates it. Records must arrive in `frame_id` order; frames of
    /// a sequence may arrive interleaved with other sequences.
    pub fn from_records(
        records: Vec<ManifestRecord>,
        embeddings: EmbeddingMatrix<S>,
    ) -> Result<Self> {
        let mut cities: Vec<String> = Vec::new();
        let mut city_lookup: BTreeMap<String, u32> = BTreeMap::new();
        let mut sequences: Vec<Sequence> = Vec::new();
        let mut seq_lookup: BTreeMap<String, u32> = BTreeMap::new();
        let mut members: Vec<Vec<(u32, u64)>> = Vec::new();
        let mut frames = Vec::with_capacity(records.len());

        for rec in &records {
            let city = *city_lookup.entry(rec.city.clone()).or_insert_with(|| {
                cities.push(rec.city.clone());
                (cities.len() - 1) as u32
            });
            let seq = match seq_lookup.get(&rec.seq_id) {
                Some(&s) => {
                    if sequences[s as usize].city != city {
                        return Err(Error::Manifest {
                            line: rec.frame_id as usize + 1,
                            msg: format!("sequence {:?} spans multiple cities", rec.seq_id),
                        });
                    }
                    s
                }
                None => {
                    let s = sequences.len() as u32;
                    sequences.push(Sequence {
                        seq_id: rec.seq_id.clone(),
                        city,
                        frame_ids: Vec::new(),
                    });
                    members.push(Vec::new());
                    seq_lookup.insert(rec.seq_id.clone(), s);
                    s
                }
            };
            members[seq as usize].push((rec.seq_index, rec.frame_id));
            frames.push(Frame {
                frame_id: rec.frame_id,
                seq,
                seq_index: rec.seq_index,
                position: Position::new(rec.utm_east, rec.utm_north),
            });
        }

        for (s, mut m) in members.into_iter().enumerate() {
            m.sort_by_key(|&(idx, _)| idx);
            sequences[s].frame_ids = m.into_iter().map(|(_, id)| id).collect();
        }

        let mut city_sequences = vec![Vec::new(); cities.len()];
        for (s, seq) in sequences.iter().enumerate() {
            city_sequences[seq.city as usize].push(s as u32);
        }

        let ds = Self {
            frames,
            sequences,
            cities,
            city_sequences,
            seq_lookup,
            embeddings,
        };
        let report = ds.validate();
        if !report.is_empty() {
            return Err(Error::InvalidDataset(report));
        }
        Ok(ds)
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, id: u64) -> &Frame {
        &self.frames[id as usize]
    }

    pub fn position(&self, id: u64) -> Position {
        self.frames[id as usize].position
    }

    pub fn sequences(&self) -> &[Sequence] {
        &self.sequences
    }

    pub fn sequence(&self, s: u32) -> &Sequence {
        &self.sequences[s as usize]
    }

    pub fn sequence_by_id(&self, seq_id: &str) -> Result<u32> {
        self.seq_lookup
            .get(seq_id)
            .copied()
            .ok_or_else(|| Error::UnknownSequence(seq_id.to_owned()))
    }

    pub fn cities(&self) -> &[String] {
        &self.cities
    }

    pub fn city_name(&self, c: u32) -> &str {
        &self.cities[c as usize]
    }

    /// Sequence indices belonging to city `c`.
    pub fn city_sequences(&self, c: u32) -> &[u32] {
        &self.city_sequences[c as usize]
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix<S> {
        &self.embeddings
    }

    #[cfg(test)]
    pub(crate) fn embeddings_mut(&mut self) -> &mut EmbeddingMatrix<S> {
        &mut self.embeddings
    }

    #[cfg(test)]
    pub(crate) fn frames_mut(&mut self) -> &mut [Frame] {
        &mut self.frames
    }

    /// Rebuilds the manifest record for one frame.
    pub fn record(&self, id: u64) -> ManifestRecord {
        let f = &self.frames[id as usize];
        let seq = &self.sequences[f.seq as usize];
        ManifestRecord {
            frame_id: f.frame_id,
            seq_id: seq.seq_id.clone(),
            city: self.cities[seq.city as usize].clone(),
            utm_east: f.position.east,
            utm_north: f.position.north,
            seq_index: f.seq_index,
        }
    }

    /// Content hash of metadata and descriptors, stable across processes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.frames.len() as u64).to_le_bytes());
        for f in &self.frames {
            let seq = &self.sequences[f.seq as usize];
            h.update(f.frame_id.to_le_bytes());
            h.update(seq.seq_id.as_bytes());
            h.update([0u8]);
            h.update(self.cities[seq.city as usize].as_bytes());
            h.update([0u8]);
            h.update(f.position.east.to_le_bytes());
            h.update(f.position.north.to_le_bytes());
            h.update(f.seq_index.to_le_bytes());
        }
        h.update((self.embeddings.dim() as u32).to_le_bytes());
        h.update([u8::from(self.embeddings.is_normalized())]);
        for v in self.embeddings.values() {
            h.update(v.as_f32().to_le_bytes());
        }
        let digest = h.finalize();
        let mut out = String::with_capacity(7 + 64);
        out.push_str("sha256:");
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    /// Audits every structural invariant and reports all violations.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();

        if self.embeddings.n() != self.frames.len() {
            issues.push(ValidationIssue::RowCountMismatch {
                frames: self.frames.len(),
                rows: self.embeddings.n(),
            });
        }

        for (i, f) in self.frames.iter().enumerate() {
            if f.frame_id != i as u64 {
                issues.push(ValidationIssue::FrameIdMismatch {
                    index: i,
                    frame_id: f.frame_id,
                });
            }
            if f.seq as usize >= self.sequences.len() {
                issues.push(ValidationIssue::DanglingSequenceRef {
                    frame_id: f.frame_id,
                    seq: f.seq,
                });
            }
            if !f.position.east.is_finite() || !f.position.north.is_finite() {
                issues.push(ValidationIssue::NonFinitePosition { frame_id: f.frame_id });
            }
        }

        let mut referenced = vec![0u32; self.frames.len()];
        for (s, seq) in self.sequences.iter().enumerate() {
            if seq.frame_ids.is_empty() {
                issues.push(ValidationIssue::EmptySequence {
                    seq_id: seq.seq_id.clone(),
                });
            }
            if seq.city as usize >= self.cities.len() {
                issues.push(ValidationIssue::DanglingCityRef {
                    seq_id: seq.seq_id.clone(),
                    city: seq.city,
                });
            }
            for (k, &fid) in seq.frame_ids.iter().enumerate() {
                let Some(f) = self.frames.get(fid as usize) else {
                    issues.push(ValidationIssue::DanglingFrameRef {
                        seq_id: seq.seq_id.clone(),
                        frame_id: fid,
                    });
                    continue;
                };
                referenced[fid as usize] += 1;
                if f.seq != s as u32 {
                    issues.push(ValidationIssue::SequenceMembershipConflict {
                        frame_id: fid,
                        listed_in: seq.seq_id.clone(),
                    });
                }
                if f.seq_index != k as u32 {
                    issues.push(ValidationIssue::SeqIndexNotContiguous {
                        seq_id: seq.seq_id.clone(),
                        frame_id: fid,
                        expected: k as u32,
                        actual: f.seq_index,
                    });
                }
            }
        }
        for (i, &count) in referenced.iter().enumerate() {
            if count != 1 {
                issues.push(ValidationIssue::FrameReferenceCount {
                    frame_id: i as u64,
                    count,
                });
            }
        }

        let dim = self.embeddings.dim();
        if dim > 0 {
            for (r, row) in self.embeddings.rows().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    if !v.is_finite() {
                        issues.push(ValidationIssue::NonFiniteEmbedding { row: r, col: c });
                    }
                }
            }
            if self.embeddings.is_normalized() {
                for (r, row) in self.embeddings.rows().enumerate() {
                    let nrm = norm(row).as_f64();
                    if nrm.is_finite() && (nrm - 1.0).abs() > NORM_TOL {
                        issues.push(ValidationIssue::RowNotNormalized { row: r, norm: nrm });
                    }
                }
            }
        }

        ValidationReport { issues }
    }
}

/// Frame id of the central frame of a sequence (`frame_ids[len / 2]`).
///
/// Sequences are non-empty by dataset invariant.
pub fn central_frame(seq: &Sequence) -> u64 {
    seq.frame_ids[seq.frame_ids.len() / 2]
}

/// One violated dataset invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum ValidationIssue {
    RowCountMismatch { frames: usize, rows: usize },
    FrameIdMismatch { index: usize, frame_id: u64 },
    DanglingSequenceRef { frame_id: u64, seq: u32 },
    DanglingCityRef { seq_id: String, city: u32 },
    DanglingFrameRef { seq_id: String, frame_id: u64 },
    NonFinitePosition { frame_id: u64 },
    EmptySequence { seq_id: String },
    SequenceMembershipConflict { frame_id: u64, listed_in: String },
    SeqIndexNotContiguous { seq_id: String, frame_id: u64, expected: u32, actual: u32 },
    FrameReferenceCount { frame_id: u64, count: u32 },
    NonFiniteEmbedding { row: usize, col: usize },
    RowNotNormalized { row: usize, norm: f64 },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RowCountMismatch { frames, rows } => {
                write!(f, "{frames} frames but {rows} embedding rows")
            }
            Self::FrameIdMismatch { index, frame_id } => {
                write!(f, "frame at index {index} carries frame_id {frame_id}")
            }
            Self::DanglingSequenceRef { frame_id, seq } => {
                write!(f, "frame {frame_id} references missing sequence {seq}")
            }
            Self::DanglingCityRef { seq_id, city } => {
                write!(f, "sequence {seq_id:?} references missing city {city}")
            }
            Self::DanglingFrameRef { seq_id, frame_id } => {
                write!(f, "sequence {seq_id:?} lists missing frame {frame_id}")
            }
            Self::NonFinitePosition { frame_id } => {
                write!(f, "frame {frame_id} has a non-finite position")
            }
            Self::EmptySequence { seq_id } => write!(f, "sequence {seq_id:?} has no frames"),
            Self::SequenceMembershipConflict { frame_id, listed_in } => {
                write!(f, "frame {frame_id} listed in {listed_in:?} but claims another sequence")
            }
            Self::SeqIndexNotContiguous { seq_id, frame_id, expected, actual } => write!(
                f,
                "sequence {seq_id:?}: frame {frame_id} at slot {expected} has seq_index {actual}"
            ),
            Self::FrameReferenceCount { frame_id, count } => {
                write!(f, "frame {frame_id} referenced by {count} sequences")
            }
            Self::NonFiniteEmbedding { row, col } => {
                write!(f, "non-finite embedding value at row {row}, column {col}")
            }
            Self::RowNotNormalized { row, norm } => {
                write!(f, "embedding row {row} flagged normalized but has norm {norm}")
            }
        }
    }
}

/// Every invariant violation found by [`Dataset::validate`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn len(&self) -> usize {
        self.issues.len()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "- {issue}")?;
        }
        Ok(())
    }
}
