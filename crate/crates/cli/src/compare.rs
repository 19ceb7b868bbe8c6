//! The `compare` subcommand: clique-mined training against random-window
//! training on the same benchmark, across several seeds.
//!
//! Every seed gets one world and one benchmark split, then three arms: the
//! raw descriptors, an embedder trained on clique batches, and an embedder
//! trained on random-window batches of identical shape. Each arm reports
//! recall at the configured cutoffs plus three sensitivity summaries: the
//! slope of the mean distance profile fitted inside (0, 50] m, the average
//! per-bin descriptor spread inside (0, 25] m, and the ordering
//! probability. Deltas are per-seed clique-minus-window differences,
//! summarized by their median.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::Context;
use clap::Args;

use cliquemine::eval::{
    gds_profile, knn_retrieve, recall_at_k, recall_vs_threshold, render_line_chart, ChartOptions,
    GdsBins, MatchRule, PairSampling, Series,
};
use cliquemine::mining::{compile_batch_collection, compile_window_collection};
use cliquemine::synth::{generate_world, make_dense_benchmark, BenchmarkPair};
use cliquemine::training::{train_toy_embedder, ToyEmbedder};
use cliquemine::Dataset64;

use crate::config::{load_config, save_config, EvalConfig, EvalMode, MineFlags, SynthFlags, TrainFlags, UsageError};
use crate::data::{descriptors_for, emit, ensure_out_dir};

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Experiment config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the output files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated seeds; each runs the full experiment once.
    #[arg(long, required = true, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[command(flatten)]
    synth_fields: SynthFlags,
    #[command(flatten)]
    mine_fields: MineFlags,
    #[command(flatten)]
    train_fields: TrainFlags,
    /// Recall cutoffs, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Ground-truth rule: meters or frames.
    #[arg(long, value_parser = EvalMode::from_str)]
    mode: Option<EvalMode>,
    /// Match threshold in the mode's unit: meters, or frame offset.
    #[arg(long)]
    threshold: Option<f64>,
    /// Metric thresholds of the per-arm recall sweep, meters.
    #[arg(long, value_delimiter = ',')]
    curve_thresholds: Option<Vec<f64>>,
    /// Geographic bin edges in meters, comma separated.
    #[arg(long, value_delimiter = ',')]
    bin_edges: Option<Vec<f64>>,
    /// Same-city pairs sampled for the profile; 0 scans every pair.
    #[arg(long)]
    pair_budget: Option<u64>,
    /// Trials behind the ordering-probability estimate.
    #[arg(long)]
    ordering_trials: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Arm {
    Raw,
    Clique,
    Window,
}

impl Arm {
    fn name(self) -> &'static str {
        match self {
            Arm::Raw => "raw",
            Arm::Clique => "clique",
            Arm::Window => "random-window",
        }
    }
}

struct ArmRow {
    arm: Arm,
    seed: u64,
    /// Recall per configured cutoff.
    recalls: Vec<f64>,
    /// Recall at the first cutoff per curve threshold.
    curve: Vec<f64>,
    gds_slope: f64,
    gds_std: f64,
    ordering: f64,
}

impl ArmRow {
    /// Flat metric values, in the column order of the CSV.
    fn metrics(&self) -> Vec<f64> {
        let mut v = self.recalls.clone();
        v.extend([self.gds_slope, self.gds_std, self.ordering]);
        v
    }
}

fn metric_names(ks: &[usize]) -> Vec<String> {
    let mut names: Vec<String> = ks.iter().map(|k| format!("recall_at_{k}")).collect();
    names.extend(["gds_slope", "gds_std", "ordering"].map(String::from));
    names
}

fn measure_arm(
    arm: Arm,
    seed: u64,
    world: &Dataset64,
    bench: &BenchmarkPair<f64>,
    embedder: Option<&ToyEmbedder<f64>>,
    eval: &EvalConfig,
    rule: MatchRule,
) -> anyhow::Result<ArmRow> {
    let db_desc = descriptors_for(&bench.database, embedder)?;
    let q_desc = descriptors_for(&bench.queries, embedder)?;
    let deepest = eval.k.iter().copied().max().unwrap_or(0);
    let retrieved = knn_retrieve(&db_desc, &q_desc, deepest)?;
    let mut recalls = Vec::with_capacity(eval.k.len());
    for &k in &eval.k {
        recalls.push(recall_at_k(&bench.queries, &bench.database, &retrieved, k, rule)?.recall);
    }
    let curve = recall_vs_threshold(
        &bench.queries,
        &bench.database,
        &retrieved,
        eval.k[0],
        &eval.curve_thresholds,
    )?
    .into_iter()
    .map(|(_, m)| m.recall)
    .collect();

    let world_desc = descriptors_for(world, embedder)?;
    let bins = GdsBins::new(eval.bin_edges.clone())?;
    let sampling = match eval.pair_budget {
        0 => PairSampling::Exhaustive,
        pairs => PairSampling::Sampled { pairs, seed },
    };
    let profile = gds_profile(world, &world_desc, &bins, sampling)?;
    let gds_slope = profile
        .slope(0.0, 50.0)
        .context("too few populated bins in (0, 50] m to fit a slope")?;
    let gds_std = profile
        .mean_std(0.0, 25.0)
        .context("no bin in (0, 25] m holds two pairs")?;
    let ordering = cliquemine::eval::ordering_probability(world, &world_desc, eval.ordering_trials, seed)?
        .estimate;

    Ok(ArmRow {
        arm,
        seed,
        recalls,
        curve,
        gds_slope,
        gds_std,
        ordering,
    })
}

/// Median with the usual midpoint rule for even counts.
fn median(values: &[f64]) -> f64 {
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn compare_csv(ks: &[usize], rows: &[ArmRow]) -> String {
    let mut out = String::from("arm,seed");
    for name in metric_names(ks) {
        write!(out, ",{name}").expect("string writes cannot fail");
    }
    out.push('\n');
    for r in rows {
        write!(out, "{},{}", r.arm.name(), r.seed).expect("string writes cannot fail");
        for v in r.metrics() {
            write!(out, ",{v}").expect("string writes cannot fail");
        }
        out.push('\n');
    }
    out
}

fn summary_csv(ks: &[usize], rows: &[ArmRow]) -> String {
    let mut out = String::from("metric,raw,clique,random_window,delta\n");
    let per_arm = |arm: Arm, i: usize| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.arm == arm)
            .map(|r| r.metrics()[i])
            .collect()
    };
    for (i, name) in metric_names(ks).into_iter().enumerate() {
        let raw = per_arm(Arm::Raw, i);
        let clique = per_arm(Arm::Clique, i);
        let window = per_arm(Arm::Window, i);
        let deltas: Vec<f64> = clique.iter().zip(&window).map(|(c, w)| c - w).collect();
        writeln!(
            out,
            "{name},{},{},{},{}",
            median(&raw),
            median(&clique),
            median(&window),
            median(&deltas)
        )
        .expect("string writes cannot fail");
    }
    out
}

pub fn run(args: &CompareArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    args.synth_fields.apply(&mut cfg.synth);
    args.mine_fields.apply(&mut cfg.mining);
    args.train_fields.apply(&mut cfg.loss, &mut cfg.opt);
    if let Some(k) = &args.k {
        cfg.eval.k = k.clone();
    }
    if let Some(mode) = args.mode {
        cfg.eval.mode = mode;
    }
    if let Some(t) = args.threshold {
        cfg.eval.threshold = t;
    }
    if let Some(t) = &args.curve_thresholds {
        cfg.eval.curve_thresholds = t.clone();
    }
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
    if args.seeds.is_empty() {
        return Err(UsageError("pass at least one seed via --seeds".into()).into());
    }
    if cfg.eval.k.is_empty() {
        return Err(UsageError("the recall cutoff list is empty".into()).into());
    }
    let rule = cfg.eval.mode.to_rule(cfg.eval.threshold)?;

    let mut rows: Vec<ArmRow> = Vec::new();
    for &seed in &args.seeds {
        let mut scfg = cfg.synth.clone();
        scfg.seed = seed;
        let world = generate_world::<f64>(&scfg)?;
        let bench = make_dense_benchmark::<f64>(&scfg)?;

        rows.push(measure_arm(Arm::Raw, seed, &world, &bench, None, &cfg.eval, rule)?);
        for arm in [Arm::Clique, Arm::Window] {
            let mut mcfg = cfg.mining.clone();
            mcfg.seed = seed;
            let collection = match arm {
                Arm::Clique => compile_batch_collection(&world, None, &mcfg),
                _ => compile_window_collection(&world, None, &mcfg),
            }?;
            let mut ocfg = cfg.opt.clone();
            ocfg.seed = seed;
            let (embedder, _) =
                train_toy_embedder(world.embeddings(), &collection, &cfg.loss, &ocfg)?;
            rows.push(measure_arm(
                arm,
                seed,
                &world,
                &bench,
                Some(&embedder),
                &cfg.eval,
                rule,
            )?);
        }
    }

    ensure_out_dir(&cfg.out_dir)?;
    let config_path = cfg.out_dir.join("resolved_config.json");
    save_config(&config_path, &cfg)?;
    println!("{}", config_path.display());
    emit(&cfg.out_dir.join("compare.csv"), &compare_csv(&cfg.eval.k, &rows))?;
    let summary = summary_csv(&cfg.eval.k, &rows);
    emit(&cfg.out_dir.join("compare_summary.csv"), &summary)?;

    // Median recall curve per arm, at the first cutoff.
    let series: Vec<Series> = [Arm::Raw, Arm::Clique, Arm::Window]
        .into_iter()
        .map(|arm| {
            let arm_rows: Vec<&ArmRow> = rows.iter().filter(|r| r.arm == arm).collect();
            let points = cfg
                .eval
                .curve_thresholds
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    let at_t: Vec<f64> = arm_rows.iter().map(|r| r.curve[i]).collect();
                    (t, median(&at_t))
                })
                .collect();
            Series {
                name: arm.name().into(),
                points,
                band: None,
            }
        })
        .collect();
    let chart = render_line_chart(
        &ChartOptions {
            title: format!("recall@{} vs distance threshold", cfg.eval.k[0]),
            x_label: "threshold (m)".into(),
            y_label: "recall".into(),
        },
        &series,
    );
    emit(&cfg.out_dir.join("compare_curve.svg"), &chart)?;

    // Human summary on stdout, one line per metric.
    println!();
    println!(
        "{:<14} {:>12} {:>12} {:>14} {:>10}",
        "metric", "raw", "clique", "random-window", "delta"
    );
    for line in summary.lines().skip(1) {
        let mut parts = line.split(',');
        let name = parts.next().unwrap_or("");
        let vals: Vec<f64> = parts.filter_map(|p| p.parse().ok()).collect();
        if vals.len() == 4 {
            println!(
                "{:<14} {:>12.4} {:>12.4} {:>14.4} {:>+10.4}",
                name, vals[0], vals[1], vals[2], vals[3]
            );
        }
    }
    Ok(())
}
