//! The `eval`, `curve` and `gds` subcommands: retrieval and sensitivity
//! reports over finished datasets and embedders.

use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;

use cliquemine::eval::{
    gds_csv, gds_profile, gds_series, knn_retrieve, ordering_csv, ordering_probability,
    recall_at_k, recall_csv, recall_vs_threshold, render_line_chart, ChartOptions, GdsBins,
    MatchRule, PairSampling, RecallRow, Series,
};

use crate::config::{load_config, resolve_seed, EvalMode};
use crate::data::{descriptors_for, emit, ensure_out_dir, load_embedder, load_stem};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Experiment config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Database dataset stem.
    #[arg(long)]
    database: PathBuf,
    /// Query dataset stem.
    #[arg(long)]
    queries: PathBuf,
    /// Trained embedder applied to both sides; raw descriptors otherwise.
    #[arg(long)]
    embedder: Option<PathBuf>,
    /// Recall cutoffs, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Ground-truth rule: meters or frames.
    #[arg(long, value_parser = EvalMode::from_str)]
    mode: Option<EvalMode>,
    /// Match threshold in the mode's unit: meters, or frame offset.
    #[arg(long)]
    threshold: Option<f64>,
    /// Directory for the output file.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

pub fn run_eval(args: &EvalArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(k) = &args.k {
        cfg.eval.k = k.clone();
    }
    if let Some(mode) = args.mode {
        cfg.eval.mode = mode;
    }
    if let Some(t) = args.threshold {
        cfg.eval.threshold = t;
    }
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    let rule = cfg.eval.mode.to_rule(cfg.eval.threshold)?;

    let database = load_stem(&args.database)?;
    let queries = load_stem(&args.queries)?;
    let embedder = args.embedder.as_deref().map(load_embedder).transpose()?;
    let db_desc = descriptors_for(&database, embedder.as_ref())?;
    let q_desc = descriptors_for(&queries, embedder.as_ref())?;

    let deepest = cfg.eval.k.iter().copied().max().unwrap_or(0);
    let retrieved = knn_retrieve(&db_desc, &q_desc, deepest)?;
    let mut rows = Vec::with_capacity(cfg.eval.k.len());
    for &k in &cfg.eval.k {
        let m = recall_at_k(&queries, &database, &retrieved, k, rule)?;
        println!(
            "recall@{k} under {rule}: {} ({}/{} queries)",
            m.recall, m.hits, m.num_queries
        );
        rows.push(RecallRow::new(rule, k, m));
    }

    ensure_out_dir(&cfg.out_dir)?;
    emit(&cfg.out_dir.join("recall.csv"), &recall_csv(&rows))
}

#[derive(Args, Debug)]
pub struct CurveArgs {
    /// Experiment config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Database dataset stem.
    #[arg(long)]
    database: PathBuf,
    /// Query dataset stem.
    #[arg(long)]
    queries: PathBuf,
    /// Trained embedder applied to both sides; raw descriptors otherwise.
    #[arg(long)]
    embedder: Option<PathBuf>,
    /// Recall cutoffs, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Metric thresholds of the sweep in meters, comma separated.
    #[arg(long, value_delimiter = ',')]
    curve_thresholds: Option<Vec<f64>>,
    /// Directory for the output files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

pub fn run_curve(args: &CurveArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(k) = &args.k {
        cfg.eval.k = k.clone();
    }
    if let Some(t) = &args.curve_thresholds {
        cfg.eval.curve_thresholds = t.clone();
    }
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }

    let database = load_stem(&args.database)?;
    let queries = load_stem(&args.queries)?;
    let embedder = args.embedder.as_deref().map(load_embedder).transpose()?;
    let db_desc = descriptors_for(&database, embedder.as_ref())?;
    let q_desc = descriptors_for(&queries, embedder.as_ref())?;

    let deepest = cfg.eval.k.iter().copied().max().unwrap_or(0);
    let retrieved = knn_retrieve(&db_desc, &q_desc, deepest)?;
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for &k in &cfg.eval.k {
        let sweep = recall_vs_threshold(
            &queries,
            &database,
            &retrieved,
            k,
            &cfg.eval.curve_thresholds,
        )?;
        series.push(Series {
            name: format!("k={k}"),
            points: sweep.iter().map(|(t, m)| (*t, m.recall)).collect(),
            band: None,
        });
        for (t, m) in sweep {
            rows.push(RecallRow::new(MatchRule::Meters(t), k, m));
        }
    }

    ensure_out_dir(&cfg.out_dir)?;
    emit(&cfg.out_dir.join("curve.csv"), &recall_csv(&rows))?;
    let chart = render_line_chart(
        &ChartOptions {
            title: "recall vs distance threshold".into(),
            x_label: "threshold (m)".into(),
            y_label: "recall".into(),
        },
        &series,
    );
    emit(&cfg.out_dir.join("curve.svg"), &chart)
}

#[derive(Args, Debug)]
pub struct GdsArgs {
    /// Experiment config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset stem the profile is measured over.
    #[arg(long)]
    dataset: PathBuf,
    /// Trained embedder applied to the descriptors; raw rows otherwise.
    #[arg(long)]
    embedder: Option<PathBuf>,
    /// Geographic bin edges in meters, comma separated.
    #[arg(long, value_delimiter = ',')]
    bin_edges: Option<Vec<f64>>,
    /// Same-city pairs sampled for the profile; 0 scans every pair.
    #[arg(long)]
    pair_budget: Option<u64>,
    /// Trials behind the ordering-probability estimate.
    #[arg(long)]
    ordering_trials: Option<u64>,
    /// Directory for the output files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seed for every randomized stage of this command.
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run_gds(args: &GdsArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(edges) = &args.bin_edges {
        cfg.eval.bin_edges = edges.clone();
    }
    if let Some(budget) = args.pair_budget {
        cfg.eval.pair_budget = budget;
    }
    if let Some(trials) = args.ordering_trials {
        cfg.eval.ordering_trials = trials;
    }
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    let seed = resolve_seed(args.seed, cfg.seed)?;

    let dataset = load_stem(&args.dataset)?;
    let embedder = args.embedder.as_deref().map(load_embedder).transpose()?;
    let descriptors = descriptors_for(&dataset, embedder.as_ref())?;

    let bins = GdsBins::new(cfg.eval.bin_edges.clone())?;
    let sampling = match cfg.eval.pair_budget {
        0 => PairSampling::Exhaustive,
        pairs => PairSampling::Sampled { pairs, seed },
    };
    let profile = gds_profile(&dataset, &descriptors, &bins, sampling)?;
    let ordering = ordering_probability(&dataset, &descriptors, cfg.eval.ordering_trials, seed)?;
    println!(
        "ordering probability {} (stderr {}, {} trials)",
        ordering.estimate, ordering.stderr, ordering.trials
    );

    ensure_out_dir(&cfg.out_dir)?;
    emit(&cfg.out_dir.join("gds.csv"), &gds_csv(&profile))?;
    emit(&cfg.out_dir.join("ordering.csv"), &ordering_csv(&ordering))?;
    let chart = render_line_chart(
        &ChartOptions {
            title: "descriptor distance vs geographic distance".into(),
            x_label: "geographic distance (m)".into(),
            y_label: "descriptor distance".into(),
        },
        &[gds_series("mean +/- std", &profile)],
    );
    emit(&cfg.out_dir.join("gds.svg"), &chart)
}
