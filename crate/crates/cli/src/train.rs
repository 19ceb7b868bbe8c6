//! The `train` subcommand: fit the linear embedder on a mined collection.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use cliquemine::mining::load_collection;
use cliquemine::training::train_toy_embedder;

use crate::config::{load_config, resolve_seed, TrainFlags};
use crate::data::{ensure_out_dir, load_stem};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Experiment config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dense dataset stem the collection was mined from.
    #[arg(long)]
    dense: PathBuf,
    /// Sparse dataset stem, when the collection mixes sparse places.
    #[arg(long)]
    sparse: Option<PathBuf>,
    /// Batch collection file.
    #[arg(long)]
    collection: PathBuf,
    /// Directory for the output files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seed for every randomized stage of this command.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    fields: TrainFlags,
}

pub fn run(args: &TrainArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    args.fields.apply(&mut cfg.loss, &mut cfg.opt);
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.opt.seed = resolve_seed(args.seed, cfg.seed)?;

    let dense = load_stem(&args.dense)?;
    let sparse = args.sparse.as_deref().map(load_stem).transpose()?;
    let collection = load_collection(&args.collection)
        .with_context(|| format!("loading collection {}", args.collection.display()))?;
    collection.verify_sources(&dense, sparse.as_ref())?;

    let features = match &sparse {
        Some(s) => dense.embeddings().vstack(s.embeddings())?,
        None => dense.embeddings().clone(),
    };
    let (embedder, trace) = train_toy_embedder(&features, &collection, &cfg.loss, &cfg.opt)?;

    ensure_out_dir(&cfg.out_dir)?;
    let embedder_path = cfg.out_dir.join("embedder.json");
    let trace_path = cfg.out_dir.join("loss_trace.csv");
    embedder.save(&embedder_path)?;
    trace.save_csv(&trace_path)?;
    println!("{}", embedder_path.display());
    println!("{}", trace_path.display());
    match trace.rows.last() {
        Some(last) => println!("{} steps, final loss {}", trace.rows.len(), last.loss),
        None => println!("0 steps, embedder equals its initialization"),
    }
    Ok(())
}
