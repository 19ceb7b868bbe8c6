//! The `synth` subcommand: write a synthetic world to disk.

use std::path::PathBuf;

use clap::Args;

use cliquemine::synth::{generate_world, make_dense_benchmark};

use crate::config::{load_config, resolve_seed, SynthFlags};
use crate::data::{ensure_out_dir, save_stem};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Experiment config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the output files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Split the world by condition into database and query datasets
    /// instead of writing one combined world.
    #[arg(long)]
    benchmark: bool,
    /// Seed for every randomized stage of this command.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    fields: SynthFlags,
}

pub fn run(args: &SynthArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    args.fields.apply(&mut cfg.synth);
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.synth.seed = resolve_seed(args.seed, cfg.seed)?;
    ensure_out_dir(&cfg.out_dir)?;

    if args.benchmark {
        let bench = make_dense_benchmark::<f64>(&cfg.synth)?;
        for (ds, name) in [(&bench.database, "db"), (&bench.queries, "queries")] {
            let (manifest, descriptors) = save_stem(ds, &cfg.out_dir, name)?;
            println!("{}", manifest.display());
            println!("{}", descriptors.display());
        }
    } else {
        let world = generate_world::<f64>(&cfg.synth)?;
        let (manifest, descriptors) = save_stem(&world, &cfg.out_dir, "world")?;
        println!("{}", manifest.display());
        println!("{}", descriptors.display());
    }
    Ok(())
}
