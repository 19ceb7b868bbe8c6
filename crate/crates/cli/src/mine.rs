//! The `mine` subcommand: compile a training batch collection.

use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;

use cliquemine::mining::{
    compile_batch_collection, compile_window_collection, save_collection, MiningStrategy,
};

use crate::config::{load_config, resolve_seed, MineFlags};
use crate::data::{ensure_out_dir, load_stem};

#[derive(Args, Debug)]
pub struct MineArgs {
    /// Experiment config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dense dataset stem: reads <stem>.jsonl and <stem>.gemb.
    #[arg(long)]
    dense: PathBuf,
    /// Sparse place-group dataset stem for the non-mined share of each
    /// batch.
    #[arg(long)]
    sparse: Option<PathBuf>,
    /// Batch sampler: clique or random-window.
    #[arg(long, default_value_t = MiningStrategy::Clique, value_parser = MiningStrategy::from_str)]
    strategy: MiningStrategy,
    /// Directory for the output file.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seed for every randomized stage of this command.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    fields: MineFlags,
}

pub fn run(args: &MineArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    args.fields.apply(&mut cfg.mining);
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.mining.seed = resolve_seed(args.seed, cfg.seed)?;

    let dense = load_stem(&args.dense)?;
    let sparse = args.sparse.as_deref().map(load_stem).transpose()?;
    let collection = match args.strategy {
        MiningStrategy::Clique => compile_batch_collection(&dense, sparse.as_ref(), &cfg.mining),
        MiningStrategy::RandomWindow => {
            compile_window_collection(&dense, sparse.as_ref(), &cfg.mining)
        }
    }?;

    ensure_out_dir(&cfg.out_dir)?;
    let out = cfg.out_dir.join("collection.json");
    save_collection(&out, &collection)?;
    println!("{}", out.display());
    println!(
        "mined {} batches of {} places (strategy={}, tau={} m, similar_sequences={})",
        collection.batches.len(),
        cfg.mining.places_per_batch,
        collection.header.strategy,
        collection.header.config.tau,
        collection.header.config.similar_sequences,
    );
    Ok(())
}
