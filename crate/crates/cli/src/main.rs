//! Command line front end for the cliquemine library.
//!
//! Every subcommand reads an optional JSON config file, lets flags override
//! individual fields, and writes its artifacts under --out-dir with fixed
//! names so runs are easy to diff. Randomized commands refuse to run
//! without an explicit seed. Exit code 1 flags a runtime failure, 2 a
//! usage problem.

mod compare;
mod config;
mod data;
mod mine;
mod reports;
mod synth;
mod train;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cliquemine",
    version,
    about = "Clique-mined batch sampling for visual place recognition, end to end"
)]
struct Cli {
    /// Cap on worker threads; 0 keeps one thread per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic street-level world, or its benchmark split.
    Synth(synth::SynthArgs),
    /// Mine a training batch collection from a dataset.
    Mine(mine::MineArgs),
    /// Train a linear embedder on a mined collection.
    Train(train::TrainArgs),
    /// Measure recall of a query set against a database.
    Eval(reports::EvalArgs),
    /// Sweep recall across match thresholds.
    Curve(reports::CurveArgs),
    /// Profile descriptor distance against geographic distance.
    Gds(reports::GdsArgs),
    /// Compare clique mining with random windows across seeds.
    Compare(Box<compare::CompareArgs>),
}

fn try_main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| anyhow::anyhow!("could not size the thread pool: {e}"))?;
    }
    match &cli.command {
        Command::Synth(args) => synth::run(args),
        Command::Mine(args) => mine::run(args),
        Command::Train(args) => train::run(args),
        Command::Eval(args) => reports::run_eval(args),
        Command::Curve(args) => reports::run_curve(args),
        Command::Gds(args) => reports::run_gds(args),
        Command::Compare(args) => compare::run(args),
    }
}

fn main() {
    if let Err(e) = try_main() {
        eprintln!("error: {e:#}");
        let code = if e.downcast_ref::<config::UsageError>().is_some() {
            2
        } else {
            1
        };
        std::process::exit(code);
    }
}
