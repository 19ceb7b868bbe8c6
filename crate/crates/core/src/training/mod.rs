//! Metric learning on mined batch collections.
//!
//! The model is deliberately small: a single linear map followed by row
//! normalization, trained with momentum SGD. It exists to measure what the
//! batch construction contributes, so everything else stays fixed and
//! reproducible: batches are consumed in collection order and every source
//! of randomness derives from explicit seeds.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedding::{dot, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::mining::BatchCollection;
use crate::rng::{derive_rng, Stream};
use crate::scalar::Scalar;

mod loss;

pub use loss::{
    ms_grad_on, ms_loss, ms_loss_grad, ms_loss_on, select_all_pairs, select_pairs,
    selection_slack, MsEvaluation, MsParams, PairSelection,
};

/// How the linear map starts out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// The identity map; output dimension must equal the input dimension.
    /// Training then starts exactly at the raw descriptors.
    Identity,
    /// Gaussian entries with variance 1/d_raw.
    Random,
}

impl std::fmt::Display for InitScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitScheme::Identity => "identity",
            InitScheme::Random => "random",
        })
    }
}

impl std::str::FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(InitScheme::Identity),
            "random" => Ok(InitScheme::Random),
            other => Err(Error::InvalidConfig(format!(
                "unknown init scheme {other:?}; expected identity or random"
            ))),
        }
    }
}

/// Optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    /// Passes over the batch collection.
    pub epochs: u32,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Output dimension of the embedder; 0 keeps the input dimension.
    pub d_out: usize,
    pub init: InitScheme,
    /// When false, every pair enters the loss instead of the selected ones.
    pub ms_mining: bool,
    /// Seed for random weight initialization.
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            learning_rate: 0.05,
            momentum: 0.9,
            d_out: 0,
            init: InitScheme::Identity,
            ms_mining: true,
            seed: 0,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return fail(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            ));
        }
        if !self.momentum.is_finite() || !(0.0..1.0).contains(&self.momentum) {
            return fail(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        Ok(())
    }
}

/// A linear map into a normalized embedding space.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyEmbedder<S: Scalar> {
    d_raw: usize,
    d_out: usize,
    /// Row-major, `d_out` rows of `d_raw` weights.
    w: Vec<S>,
}

#[derive(Serialize, Deserialize)]
struct EmbedderFile {
    d_raw: usize,
    d_out: usize,
    weights: Vec<f64>,
}

impl<S: Scalar> ToyEmbedder<S> {
    pub fn identity(d: usize) -> Self {
        let mut w = vec![S::zero(); d * d];
        for i in 0..d {
            w[i * d + i] = S::one();
        }
        Self {
            d_raw: d,
            d_out: d,
            w,
        }
    }

    pub fn random<R: Rng + ?Sized>(d_raw: usize, d_out: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (1.0 / d_raw as f64).sqrt()).expect("valid sigma");
        let w = (0..d_raw * d_out)
            .map(|_| S::of_f64(normal.sample(rng)))
            .collect();
        Self { d_raw, d_out, w }
    }

    pub fn from_weights(d_raw: usize, d_out: usize, w: Vec<S>) -> Result<Self> {
        if w.len() != d_raw * d_out {
            return Err(Error::InvalidConfig(format!(
                "embedder weights hold {} values, expected {} x {}",
                w.len(),
                d_out,
                d_raw
            )));
        }
        if let Some(bad) = w.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: bad / d_raw,
                col: bad % d_raw,
            });
        }
        Ok(Self { d_raw, d_out, w })
    }

    pub fn d_raw(&self) -> usize {
        self.d_raw
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn weights(&self) -> &[S] {
        &self.w
    }

    /// Maps raw descriptors through the linear layer and normalizes rows.
    pub fn embed(&self, raw: &EmbeddingMatrix<S>) -> Result<EmbeddingMatrix<S>> {
        if raw.dim() != self.d_raw {
            return Err(Error::DimMismatch {
                expected: self.d_raw,
                actual: raw.dim(),
            });
        }
        let mut values = vec![S::zero(); raw.n() * self.d_out];
        for (r, row) in raw.rows().enumerate() {
            for o in 0..self.d_out {
                values[r * self.d_out + o] = dot(&self.w[o * self.d_raw..][..self.d_raw], row);
            }
        }
        let mut out = EmbeddingMatrix::from_values(raw.n(), self.d_out, values)?;
        out.normalize_rows()?;
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = EmbedderFile {
            d_raw: self.d_raw,
            d_out: self.d_out,
            weights: self.w.iter().map(|v| v.as_f64()).collect(),
        };
        let out = File::create(path).map_err(Error::io(path))?;
        let mut w = BufWriter::new(out);
        serde_json::to_writer(&mut w, &file).map_err(|e| Error::Json {
            path: path.into(),
            msg: e.to_string(),
        })?;
        w.write_all(b"\n").map_err(Error::io(path))?;
        w.flush().map_err(Error::io(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(Error::io(path))?;
        let parsed: EmbedderFile =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Json {
                path: path.into(),
                msg: e.to_string(),
            })?;
        Self::from_weights(
            parsed.d_raw,
            parsed.d_out,
            parsed.weights.into_iter().map(S::of_f64).collect(),
        )
    }
}

/// One optimizer step as seen from outside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u32,
    pub loss: f64,
    pub selected_positives: usize,
    pub selected_negatives: usize,
}

/// Per-step training log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub rows: Vec<TraceRow>,
}

impl LossTrace {
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "step,loss,selected_positives,selected_negatives")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{},{}",
                row.step, row.loss, row.selected_positives, row.selected_negatives
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(Error::io(path))?;
        let mut w = BufWriter::new(file);
        self.write_csv(&mut w).map_err(Error::io(path))?;
        w.flush().map_err(Error::io(path))
    }

    /// Mean loss over the first `k` and last `k` steps.
    pub fn endpoint_means(&self, k: usize) -> Option<(f64, f64)> {
        if self.rows.len() < k.max(1) {
            return None;
        }
        let head: f64 = self.rows[..k].iter().map(|r| r.loss).sum::<f64>() / k as f64;
        let tail: f64 =
            self.rows[self.rows.len() - k..].iter().map(|r| r.loss).sum::<f64>() / k as f64;
        Some((head, tail))
    }
}

/// Trains a [`ToyEmbedder`] on a batch collection.
///
/// `features` is the raw descriptor matrix the collection's frame ids index:
/// the dense matrix, with the sparse matrix stacked below it when the
/// collection mixes in sparse places. Batches are visited in collection
/// order, `epochs` times. Gradients flow through the row normalization; the
/// pair selection of each step is treated as constant.
pub fn train_toy_embedder<S: Scalar>(
    features: &EmbeddingMatrix<S>,
    collection: &BatchCollection,
    ms: &MsParams,
    opt: &OptConfig,
) -> Result<(ToyEmbedder<S>, LossTrace)> {
    ms.validate()?;
    opt.validate()?;
    let d_raw = features.dim();
    let d_out = if opt.d_out == 0 { d_raw } else { opt.d_out };
    let mut embedder = match opt.init {
        InitScheme::Identity => {
            if d_out != d_raw {
                return Err(Error::InvalidConfig(format!(
                    "identity init needs d_out == d_raw, got {d_out} and {d_raw}"
                )));
            }
            ToyEmbedder::identity(d_raw)
        }
        InitScheme::Random => {
            let mut rng = derive_rng(opt.seed, Stream::TrainInit, 0);
            ToyEmbedder::random(d_raw, d_out, &mut rng)
        }
    };
    let lr = S::of_f64(opt.learning_rate);
    let mu = S::of_f64(opt.momentum);
    let mut velocity = vec![S::zero(); embedder.w.len()];
    let mut trace = LossTrace::default();
    let mut step: u32 = 0;

    for _ in 0..opt.epochs {
        for batch in &collection.batches {
            let ids: Vec<u64> = batch.frames().map(|(_, id)| id).collect();
            let labels: Vec<u32> = batch.frames().map(|(label, _)| label).collect();
            let raw = features.gather(&ids)?;
            let b = raw.n();

            // Forward: u = W r, x = u / |u|.
            let mut u = vec![S::zero(); b * d_out];
            for (r, row) in raw.rows().enumerate() {
                for o in 0..d_out {
                    u[r * d_out + o] = dot(&embedder.w[o * d_raw..][..d_raw], row);
                }
            }
            let mut u_norm = vec![S::zero(); b];
            let mut x = u.clone();
            for r in 0..b {
                let nrm = crate::embedding::norm(&u[r * d_out..][..d_out]);
                if !nrm.is_finite() || nrm == S::zero() {
                    return Err(Error::Diverged {
                        step: step as usize,
                    });
                }
                u_norm[r] = nrm;
                for v in &mut x[r * d_out..][..d_out] {
                    *v /= nrm;
                }
            }
            let mut emb = EmbeddingMatrix::from_values(b, d_out, x)?;
            emb.set_normalized_flag(true);

            let selection = if opt.ms_mining {
                select_pairs(&emb, &labels, ms)?
            } else {
                select_all_pairs(&labels)
            };
            let eval = ms_grad_on(&emb, &selection, ms)?;
            if !eval.loss.as_f64().is_finite() {
                return Err(Error::Diverged {
                    step: step as usize,
                });
            }

            // Backward through the normalization into the weights:
            // dL/du = (g - (g . x) x) / |u|, dL/dW = sum_r (dL/du_r) r^T.
            let mut grad_w = vec![S::zero(); embedder.w.len()];
            for (r, row) in raw.rows().enumerate() {
                let g_x = &eval.grad[r * d_out..][..d_out];
                let x_r = emb.row(r);
                let g_dot_x = dot(g_x, x_r);
                for o in 0..d_out {
                    let g_u = (g_x[o] - g_dot_x * x_r[o]) / u_norm[r];
                    for (t, &rt) in row.iter().enumerate() {
                        grad_w[o * d_raw + t] += g_u * rt;
                    }
                }
            }
            for i in 0..embedder.w.len() {
                velocity[i] = mu * velocity[i] - lr * grad_w[i];
                embedder.w[i] += velocity[i];
            }

            trace.rows.push(TraceRow {
                step,
                loss: eval.loss.as_f64(),
                selected_positives: eval.selected_positives,
                selected_negatives: eval.selected_negatives,
            });
            step += 1;
        }
    }

    Ok((embedder, trace))
}
