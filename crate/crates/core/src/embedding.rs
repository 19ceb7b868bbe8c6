//! Dense row-major descriptor storage and descriptor-space distances.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on `|norm - 1|` for rows claimed to be unit length.
pub const NORM_TOL: f64 = 1e-6;

/// Row-major matrix of descriptors, one row per frame.
///
/// The `normalized` flag records whether every row is unit length; the file
/// format persists it and operations that require unit rows check it instead
/// of re-deriving norms.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix<S: Scalar> {
    n: usize,
    dim: usize,
    values: Vec<S>,
    normalized: bool,
}

impl<S: Scalar> EmbeddingMatrix<S> {
    /// Builds a matrix from `n * dim` row-major values. Rejects length
    /// mismatches and non-finite entries; the normalized flag starts unset.
    pub fn from_values(n: usize, dim: usize, values: Vec<S>) -> Result<Self> {
        if values.len() != n * dim {
            return Err(Error::DimMismatch {
                expected: n * dim,
                actual: values.len(),
            });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: i.checked_div(dim).unwrap_or(0),
                    col: if dim == 0 { 0 } else { i % dim },
                });
            }
        }
        Ok(Self {
            n,
            dim,
            values,
            normalized: false,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[S]> {
        self.values.chunks_exact(self.dim.max(1))
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    #[cfg(test)]
    pub(crate) fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub(crate) fn set_normalized_flag(&mut self, flag: bool) {
        self.normalized = flag;
    }

    /// Rescales every row to unit length and sets the flag.
    pub fn normalize_rows(&mut self) -> Result<()> {
        for i in 0..self.n {
            let start = i * self.dim;
            let nrm = norm(&self.values[start..start + self.dim]);
            if nrm == S::zero() {
                return Err(Error::NotNormalized {
                    row: i,
                    norm: 0.0,
                });
            }
            for v in &mut self.values[start..start + self.dim] {
                *v /= nrm;
            }
        }
        self.normalized = true;
        Ok(())
    }

    /// Marks the matrix normalized after verifying every row is unit length
    /// within [`NORM_TOL`].
    pub fn assert_normalized(mut self) -> Result<Self> {
        for i in 0..self.n {
            let nrm = norm(self.row(i)).as_f64();
            if (nrm - 1.0).abs() > NORM_TOL {
                return Err(Error::NotNormalized { row: i, norm: nrm });
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Copies the rows named by `ids` (in order) into a new matrix.
    pub fn gather(&self, ids: &[u64]) -> Result<Self> {
        let mut values = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            let i = id as usize;
            if i >= self.n {
                return Err(Error::FrameIdOutOfRange { id, rows: self.n });
            }
            values.extend_from_slice(self.row(i));
        }
        Ok(Self {
            n: ids.len(),
            dim: self.dim,
            values,
            normalized: self.normalized,
        })
    }

    /// Stacks `self` on top of `other`. Dimensions must agree; the result is
    /// flagged normalized only if both inputs are.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        let mut values = Vec::with_capacity(self.values.len() + other.values.len());
        values.extend_from_slice(&self.values);
        values.extend_from_slice(&other.values);
        Ok(Self {
            n: self.n + other.n,
            dim: self.dim,
            values,
            normalized: self.normalized && other.normalized,
        })
    }

    /// Converts every entry to another scalar type (through `f64`).
    pub fn cast<T: Scalar>(&self) -> EmbeddingMatrix<T> {
        EmbeddingMatrix {
            n: self.n,
            dim: self.dim,
            values: self.values.iter().map(|v| T::of_f64(v.as_f64())).collect(),
            normalized: self.normalized,
        }
    }
}

/// Euclidean distance between two descriptors of the same dimension.
#[inline]
pub fn desc_distance<S: Scalar>(x: &[S], y: &[S]) -> S {
    desc_distance_sq(x, y).sqrt()
}

/// Squared Euclidean distance between two descriptors.
#[inline]
pub fn desc_distance_sq<S: Scalar>(x: &[S], y: &[S]) -> S {
    assert_eq!(x.len(), y.len(), "descriptor dimensions differ");
    let mut acc = S::zero();
    for (a, b) in x.iter().zip(y) {
        let d = *a - *b;
        acc += d * d;
    }
    acc
}

/// Inner product of two descriptors of the same dimension.
#[inline]
pub fn dot<S: Scalar>(x: &[S], y: &[S]) -> S {
    assert_eq!(x.len(), y.len(), "descriptor dimensions differ");
    let mut acc = S::zero();
    for (a, b) in x.iter().zip(y) {
        acc += *a * *b;
    }
    acc
}

/// L2 norm of a descriptor.
#[inline]
pub fn norm<S: Scalar>(x: &[S]) -> S {
    dot(x, x).sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine<S: Scalar>(x: &[S], y: &[S]) -> S {
    let nx = norm(x);
    let ny = norm(y);
    if nx == S::zero() || ny == S::zero() {
        return S::zero();
    }
    let c = dot(x, y) / (nx * ny);
    c.min(S::one()).max(-S::one())
}
