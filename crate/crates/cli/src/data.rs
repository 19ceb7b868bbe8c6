//! Filesystem plumbing shared by the subcommands.
//!
//! Datasets travel as a pair of files named by a stem: `<stem>.jsonl` holds
//! the manifest, `<stem>.gemb` the descriptors. Commands print every file
//! they write, one absolute-or-given path per line.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

use cliquemine::dataset::{load_dataset, save_dataset};
use cliquemine::training::ToyEmbedder;
use cliquemine::{Dataset64, EmbeddingMatrix64};

/// Expands a dataset stem into its manifest and descriptor paths.
pub fn stem_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("jsonl"), stem.with_extension("gemb"))
}

pub fn load_stem(stem: &Path) -> anyhow::Result<Dataset64> {
    let (manifest, descriptors) = stem_paths(stem);
    load_dataset(&manifest, &descriptors)
        .with_context(|| format!("loading dataset {}", stem.display()))
}

/// Writes a dataset under `dir/name` and returns the two paths written.
pub fn save_stem(ds: &Dataset64, dir: &Path, name: &str) -> anyhow::Result<(PathBuf, PathBuf)> {
    let (manifest, descriptors) = stem_paths(&dir.join(name));
    save_dataset(ds, &manifest, &descriptors)
        .with_context(|| format!("writing dataset {}", dir.join(name).display()))?;
    Ok((manifest, descriptors))
}

pub fn load_embedder(path: &Path) -> anyhow::Result<ToyEmbedder<f64>> {
    ToyEmbedder::load(path).with_context(|| format!("loading embedder {}", path.display()))
}

/// Descriptors a report runs on: the embedder's output when one is given,
/// the dataset's own rows otherwise.
pub fn descriptors_for(
    ds: &Dataset64,
    embedder: Option<&ToyEmbedder<f64>>,
) -> anyhow::Result<EmbeddingMatrix64> {
    match embedder {
        Some(e) => e.embed(ds.embeddings()).context("applying the embedder"),
        None => Ok(ds.embeddings().clone()),
    }
}

/// Creates the output directory and returns it.
pub fn ensure_out_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
}

/// Writes a text artifact and echoes its path on stdout.
pub fn emit(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}
