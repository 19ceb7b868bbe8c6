//! Compiling and persisting whole collections of training batches.
//!
//! Every batch draws its generator from the collection seed and its own
//! index, so compilation parallelizes freely without changing a single
//! byte of output.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_rng, Stream};
use crate::scalar::Scalar;

use super::{
    check_batch, sample_batch, sample_window_batch, BatchManifest, MiningConfig, Provenance,
};

/// Which batch sampler produced a collection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiningStrategy {
    /// Clique places with geographic separation guarantees.
    Clique,
    /// Runs of consecutive frames with no separation guarantee.
    RandomWindow,
}

impl std::fmt::Display for MiningStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MiningStrategy::Clique => "clique",
            MiningStrategy::RandomWindow => "random-window",
        })
    }
}

impl std::str::FromStr for MiningStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clique" => Ok(MiningStrategy::Clique),
            "random-window" => Ok(MiningStrategy::RandomWindow),
            other => Err(Error::InvalidConfig(format!(
                "unknown mining strategy {other:?}; expected clique or random-window"
            ))),
        }
    }
}

/// Everything needed to interpret and reproduce a collection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectionHeader {
    pub config: MiningConfig,
    pub strategy: MiningStrategy,
    pub seed: u64,
    pub dense_fingerprint: String,
    pub sparse_fingerprint: Option<String>,
    /// Shift added to sparse place frame ids so they index the rows of the
    /// dense matrix stacked on top of the sparse one.
    pub sparse_id_offset: Option<u64>,
    pub num_batches: u32,
}

/// A compiled sequence of training batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchCollection {
    pub header: CollectionHeader,
    pub batches: Vec<BatchManifest>,
}

impl BatchCollection {
    /// Checks the given datasets are the ones this collection was mined
    /// from.
    pub fn verify_sources<S: Scalar>(
        &self,
        dense: &Dataset<S>,
        sparse: Option<&Dataset<S>>,
    ) -> Result<()> {
        let actual = dense.fingerprint();
        if actual != self.header.dense_fingerprint {
            return Err(Error::FingerprintMismatch {
                role: "dense",
                expected: self.header.dense_fingerprint.clone(),
                actual,
            });
        }
        match (&self.header.sparse_fingerprint, sparse) {
            (Some(expected), Some(ds)) => {
                let actual = ds.fingerprint();
                if &actual != expected {
                    return Err(Error::FingerprintMismatch {
                        role: "sparse",
                        expected: expected.clone(),
                        actual,
                    });
                }
            }
            (Some(expected), None) => {
                return Err(Error::FingerprintMismatch {
                    role: "sparse",
                    expected: expected.clone(),
                    actual: "no sparse dataset".into(),
                });
            }
            (None, Some(_)) => {
                return Err(Error::FingerprintMismatch {
                    role: "sparse",
                    expected: "no sparse dataset".into(),
                    actual: "a sparse dataset".into(),
                });
            }
            (None, None) => {}
        }
        Ok(())
    }

    /// Runs the full batch invariant check over every batch.
    pub fn check_invariants<S: Scalar>(
        &self,
        dense: &Dataset<S>,
        sparse: Option<&Dataset<S>>,
    ) -> std::result::Result<(), String> {
        for (i, batch) in self.batches.iter().enumerate() {
            check_batch(
                dense,
                sparse,
                &self.header.config,
                batch,
                self.header.sparse_id_offset,
            )
            .map_err(|e| format!("batch {i}: {e}"))?;
        }
        Ok(())
    }

    /// The number of feature rows the collection's frame ids index:
    /// the dense rows plus, when sparse places exist, the sparse rows.
    pub fn expected_rows<S: Scalar>(
        &self,
        dense: &Dataset<S>,
        sparse: Option<&Dataset<S>>,
    ) -> usize {
        dense.n_frames() + sparse.map_or(0, |s| s.n_frames())
    }
}

/// Mines `cfg.num_batches` clique batches, each from its own generator
/// derived from `cfg.seed` and the batch index.
pub fn compile_batch_collection<S: Scalar>(
    dense: &Dataset<S>,
    sparse: Option<&Dataset<S>>,
    cfg: &MiningConfig,
) -> Result<BatchCollection> {
    compile(dense, sparse, cfg, MiningStrategy::Clique)
}

/// Mines `cfg.num_batches` baseline batches of random frame windows.
pub fn compile_window_collection<S: Scalar>(
    dense: &Dataset<S>,
    sparse: Option<&Dataset<S>>,
    cfg: &MiningConfig,
) -> Result<BatchCollection> {
    compile(dense, sparse, cfg, MiningStrategy::RandomWindow)
}

fn compile<S: Scalar>(
    dense: &Dataset<S>,
    sparse: Option<&Dataset<S>>,
    cfg: &MiningConfig,
    strategy: MiningStrategy,
) -> Result<BatchCollection> {
    cfg.validate()?;
    if cfg.clique_quota() < cfg.places_per_batch as usize && sparse.is_none() {
        return Err(Error::InvalidConfig(format!(
            "clique_fraction {} needs a sparse dataset to fill batches",
            cfg.clique_fraction
        )));
    }

    let stream = match strategy {
        MiningStrategy::Clique => Stream::MiningBatch,
        MiningStrategy::RandomWindow => Stream::WindowBatch,
    };
    let mut batches: Vec<BatchManifest> = (0..cfg.num_batches)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_rng(cfg.seed, stream, u64::from(i));
            match strategy {
                MiningStrategy::Clique => sample_batch(dense, sparse, cfg, &mut rng),
                MiningStrategy::RandomWindow => sample_window_batch(dense, sparse, cfg, &mut rng),
            }
        })
        .collect::<Result<_>>()?;

    // Shift sparse ids past the dense rows so one stacked feature matrix
    // serves the whole collection.
    let sparse_id_offset = sparse.map(|_| dense.n_frames() as u64);
    if let Some(offset) = sparse_id_offset {
        for batch in &mut batches {
            for place in &mut batch.places {
                if place.provenance == Provenance::Sparse {
                    for id in &mut place.frame_ids {
                        *id += offset;
                    }
                }
            }
        }
    }

    Ok(BatchCollection {
        header: CollectionHeader {
            config: cfg.clone(),
            strategy,
            seed: cfg.seed,
            dense_fingerprint: dense.fingerprint(),
            sparse_fingerprint: sparse.map(|s| s.fingerprint()),
            sparse_id_offset,
            num_batches: cfg.num_batches,
        },
        batches,
    })
}

pub fn save_collection(path: impl AsRef<Path>, collection: &BatchCollection) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, collection).map_err(|e| Error::Json {
        path: path.into(),
        msg: e.to_string(),
    })?;
    w.write_all(b"\n").map_err(Error::io(path))?;
    w.flush().map_err(Error::io(path))
}

pub fn load_collection(path: impl AsRef<Path>) -> Result<BatchCollection> {
    let path = path.as_ref();
    let file = File::open(path).map_err(Error::io(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Json {
        path: path.into(),
        msg: e.to_string(),
    })
}
