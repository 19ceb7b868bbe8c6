//! End-to-end checks of the command line binary: exit codes, flag
//! precedence, artifact layout, and byte-level reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cliquemine"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary launches")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is utf-8")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is utf-8")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed with {:?}\nstderr: {}",
        out.status.code(),
        stderr_of(out)
    );
}

/// Flags for a small world that every pipeline test shares.
const SMALL_WORLD: &[&str] = &[
    "--num-cities",
    "3",
    "--sequences-per-city",
    "4",
    "--path-length",
    "200",
    "--raw-dim",
    "8",
];

/// Flags for a small mining run against [`SMALL_WORLD`].
const SMALL_MINE: &[&str] = &[
    "--places-per-batch",
    "6",
    "--clique-size",
    "4",
    "--num-batches",
    "3",
];

fn synth_small(dir: &Path, seed: &str) {
    let out = run(&[
        &["synth", "--seed", seed, "--out-dir", dir.to_str().unwrap()],
        SMALL_WORLD,
    ]
    .concat());
    assert_ok(&out);
}

fn mine_small(dir: &Path, seed: &str) {
    let world = dir.join("world");
    let out = run(&[
        &[
            "mine",
            "--dense",
            world.to_str().unwrap(),
            "--seed",
            seed,
            "--out-dir",
            dir.to_str().unwrap(),
        ],
        SMALL_MINE,
    ]
    .concat());
    assert_ok(&out);
}

#[test]
fn synth_lists_files_and_reproduces_bytes() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    for dir in [&a, &b] {
        let out = run(&[
            &["synth", "--seed", "9", "--out-dir", dir.to_str().unwrap()],
            SMALL_WORLD,
        ]
        .concat());
        assert_ok(&out);
        let stdout = stdout_of(&out);
        let listed: Vec<&str> = stdout.lines().collect();
        assert_eq!(listed.len(), 2, "one line per written file: {stdout}");
        assert!(listed[0].ends_with("world.jsonl"));
        assert!(listed[1].ends_with("world.gemb"));
    }
    for name in ["world.jsonl", "world.gemb"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn randomized_commands_refuse_to_run_unseeded() {
    let t = tempfile::tempdir().unwrap();
    let out = run(&["synth", "--out-dir", t.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr_of(&out).contains("--seed"),
        "the error should point at the missing seed: {}",
        stderr_of(&out)
    );
}

#[test]
fn unknown_flags_exit_with_usage_code() {
    let out = run(&["synth", "--seed", "1", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_can_carry_the_seed() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("exp.json");
    std::fs::write(&cfg, "{\"seed\": 7}\n").unwrap();
    let out = run(&[
        &[
            "synth",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            t.path().to_str().unwrap(),
        ],
        SMALL_WORLD,
    ]
    .concat());
    assert_ok(&out);
    assert!(t.path().join("world.jsonl").exists());
}

#[test]
fn flags_override_the_config_file() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("exp.json");
    std::fs::write(
        &cfg,
        "{\"seed\": 7, \"synth\": {\"num_cities\": 2, \"sequences_per_city\": 2, \
         \"path_length\": 100.0, \"raw_dim\": 8}}\n",
    )
    .unwrap();
    let out = run(&[
        "synth",
        "--config",
        cfg.to_str().unwrap(),
        "--num-cities",
        "3",
        "--out-dir",
        t.path().to_str().unwrap(),
    ]);
    assert_ok(&out);
    let manifest = std::fs::read_to_string(t.path().join("world.jsonl")).unwrap();
    let mut cities: Vec<String> = manifest
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["city"].as_str().unwrap().to_string()
        })
        .collect();
    cities.sort();
    cities.dedup();
    assert_eq!(cities.len(), 3, "the flag should win over the config file");
}

#[test]
fn mine_echoes_the_run_and_honors_the_strategy() {
    let t = tempfile::tempdir().unwrap();
    synth_small(t.path(), "4");
    mine_small(t.path(), "4");

    let world = t.path().join("world");
    let out = run(&[
        &[
            "mine",
            "--dense",
            world.to_str().unwrap(),
            "--seed",
            "4",
            "--out-dir",
            t.path().to_str().unwrap(),
        ],
        SMALL_MINE,
    ]
    .concat());
    assert_ok(&out);
    let stdout = stdout_of(&out);
    assert!(
        stdout.contains("mined 3 batches of 6 places (strategy=clique, tau=25 m, similar_sequences=15)"),
        "unexpected mine summary: {stdout}"
    );

    let collection: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(t.path().join("collection.json")).unwrap())
            .unwrap();
    assert_eq!(collection["header"]["strategy"], "clique");
    assert_eq!(collection["header"]["num_batches"], 3);
    let batches = collection["batches"].as_array().unwrap();
    assert_eq!(batches.len(), 3);
    for batch in batches {
        for place in batch["places"].as_array().unwrap() {
            assert_eq!(place["provenance"], "clique", "clique_fraction 1 means every place is mined");
        }
    }

    let out = run(&[
        &[
            "mine",
            "--dense",
            world.to_str().unwrap(),
            "--strategy",
            "random-window",
            "--seed",
            "4",
            "--out-dir",
            t.path().to_str().unwrap(),
        ],
        SMALL_MINE,
    ]
    .concat());
    assert_ok(&out);
    assert!(stdout_of(&out).contains("strategy=random-window"));
}

#[test]
fn mine_reports_an_exhausted_world_as_a_runtime_error() {
    let t = tempfile::tempdir().unwrap();
    let out = run(&[
        "synth",
        "--seed",
        "2",
        "--num-cities",
        "1",
        "--sequences-per-city",
        "4",
        "--path-length",
        "40",
        "--raw-dim",
        "8",
        "--out-dir",
        t.path().to_str().unwrap(),
    ]);
    assert_ok(&out);
    let world = t.path().join("world");
    let out = run(&[
        "mine",
        "--dense",
        world.to_str().unwrap(),
        "--clique-size",
        "4",
        "--seed",
        "2",
        "--out-dir",
        t.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("no 4-clique left"),
        "unexpected failure report: {}",
        stderr_of(&out)
    );
}

#[test]
fn zero_epoch_training_writes_the_identity() {
    let t = tempfile::tempdir().unwrap();
    synth_small(t.path(), "5");
    mine_small(t.path(), "5");
    let out = run(&[
        "train",
        "--dense",
        t.path().join("world").to_str().unwrap(),
        "--collection",
        t.path().join("collection.json").to_str().unwrap(),
        "--epochs",
        "0",
        "--seed",
        "5",
        "--out-dir",
        t.path().to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(stdout_of(&out).contains("0 steps"));

    let trace = std::fs::read_to_string(t.path().join("loss_trace.csv")).unwrap();
    assert_eq!(trace, "step,loss,selected_positives,selected_negatives\n");

    let embedder: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(t.path().join("embedder.json")).unwrap())
            .unwrap();
    let d = embedder["d_raw"].as_u64().unwrap() as usize;
    assert_eq!(embedder["d_out"].as_u64().unwrap() as usize, d);
    let weights = embedder["weights"].as_array().unwrap();
    assert_eq!(weights.len(), d * d);
    for r in 0..d {
        for c in 0..d {
            let want = if r == c { 1.0 } else { 0.0 };
            assert_eq!(weights[r * d + c].as_f64().unwrap(), want);
        }
    }
}

#[test]
fn training_is_reproducible_and_traces_every_step() {
    let t = tempfile::tempdir().unwrap();
    synth_small(t.path(), "6");
    mine_small(t.path(), "6");
    let world = t.path().join("world");
    let collection = t.path().join("collection.json");
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    for dir in [&a, &b] {
        let out = run(&[
            "train",
            "--dense",
            world.to_str().unwrap(),
            "--collection",
            collection.to_str().unwrap(),
            "--epochs",
            "2",
            "--seed",
            "6",
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
        assert_ok(&out);
    }
    for name in ["embedder.json", "loss_trace.csv"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
    let trace = std::fs::read_to_string(a.join("loss_trace.csv")).unwrap();
    // Three batches, two epochs: six steps behind the header.
    assert_eq!(trace.lines().count(), 7);
}

#[test]
fn eval_reports_each_cutoff_under_both_rules() {
    let t = tempfile::tempdir().unwrap();
    let out = run(&[
        &[
            "synth",
            "--benchmark",
            "--seed",
            "8",
            "--out-dir",
            t.path().to_str().unwrap(),
        ],
        SMALL_WORLD,
    ]
    .concat());
    assert_ok(&out);
    let db = t.path().join("db");
    let queries = t.path().join("queries");

    let out = run(&[
        "eval",
        "--database",
        db.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--k",
        "1,2",
        "--threshold",
        "25",
        "--out-dir",
        t.path().to_str().unwrap(),
    ]);
    assert_ok(&out);
    let stdout = stdout_of(&out);
    assert!(stdout.contains("recall@1 under meters(25)"));
    assert!(stdout.contains("recall@2 under meters(25)"));
    let csv = std::fs::read_to_string(t.path().join("recall.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "mode,threshold,k,recall,num_queries");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("meters,25,1,"));
    assert!(lines[2].starts_with("meters,25,2,"));

    let out = run(&[
        "eval",
        "--database",
        db.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--k",
        "1",
        "--mode",
        "frames",
        "--threshold",
        "1",
        "--out-dir",
        t.path().to_str().unwrap(),
    ]);
    assert_ok(&out);
    let csv = std::fs::read_to_string(t.path().join("recall.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("frames,1,1,"));
}

#[test]
fn reports_are_identical_across_runs_and_thread_counts() {
    let t = tempfile::tempdir().unwrap();
    let out = run(&[
        &[
            "synth",
            "--benchmark",
            "--seed",
            "3",
            "--out-dir",
            t.path().to_str().unwrap(),
        ],
        SMALL_WORLD,
    ]
    .concat());
    assert_ok(&out);
    synth_small(t.path(), "3");

    let world = t.path().join("world");
    let db = t.path().join("db");
    let queries = t.path().join("queries");
    let dirs = [t.path().join("r1"), t.path().join("r2"), t.path().join("r4")];
    for (dir, threads) in dirs.iter().zip(["1", "1", "2"]) {
        let out = run(&[
            "--threads",
            threads,
            "gds",
            "--dataset",
            world.to_str().unwrap(),
            "--pair-budget",
            "2000",
            "--ordering-trials",
            "500",
            "--seed",
            "3",
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
        assert_ok(&out);
        let out = run(&[
            "--threads",
            threads,
            "curve",
            "--database",
            db.to_str().unwrap(),
            "--queries",
            queries.to_str().unwrap(),
            "--k",
            "1",
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
        assert_ok(&out);
    }
    for name in ["gds.csv", "ordering.csv", "gds.svg", "curve.csv", "curve.svg"] {
        let first = std::fs::read(dirs[0].join(name)).unwrap();
        for dir in &dirs[1..] {
            assert_eq!(
                std::fs::read(dir.join(name)).unwrap(),
                first,
                "{name} changed across runs or thread counts"
            );
        }
    }
}

/// Counts flag tokens with a word boundary after them, so `--seed` does not
/// match inside `--seeds`.
fn count_flag(help: &str, name: &str) -> usize {
    let token = format!("--{name}");
    let mut count = 0;
    let mut from = 0;
    while let Some(at) = help[from..].find(&token) {
        let end = from + at + token.len();
        let boundary = help[end..]
            .chars()
            .next()
            .is_none_or(|c| !(c.is_ascii_alphanumeric() || c == '-'));
        if boundary {
            count += 1;
        }
        from = end;
    }
    count
}

const SYNTH_FIELDS: &[&str] = &[
    "num-cities",
    "sequences-per-city",
    "path-length",
    "frame-spacing",
    "raw-dim",
    "spatial-length-scale",
    "appearance-noise-sigma",
    "num-conditions",
    "condition-offset-sigma",
];
const MINE_FIELDS: &[&str] = &[
    "similar-sequences",
    "tau",
    "places-per-batch",
    "clique-size",
    "clique-fraction",
    "num-batches",
    "sampling-mode",
    "similarity-temperature",
    "max-restarts",
];
const TRAIN_FIELDS: &[&str] = &[
    "alpha",
    "beta",
    "lambda",
    "epsilon",
    "epochs",
    "learning-rate",
    "momentum",
    "d-out",
    "init",
    "no-ms-mining",
];
const EVAL_FIELDS: &[&str] = &["k", "mode", "threshold"];
const SWEEP_FIELDS: &[&str] = &["curve-thresholds", "bin-edges", "pair-budget", "ordering-trials"];

#[test]
fn help_lists_every_config_field_exactly_once() {
    let cases: Vec<(&str, Vec<&str>)> = vec![
        (
            "synth",
            [&["config", "out-dir", "benchmark", "seed"], SYNTH_FIELDS].concat(),
        ),
        (
            "mine",
            [
                &["config", "dense", "sparse", "strategy", "out-dir", "seed"],
                MINE_FIELDS,
            ]
            .concat(),
        ),
        (
            "train",
            [
                &["config", "dense", "sparse", "collection", "out-dir", "seed"],
                TRAIN_FIELDS,
            ]
            .concat(),
        ),
        (
            "eval",
            [
                &["config", "database", "queries", "embedder", "out-dir"],
                EVAL_FIELDS,
            ]
            .concat(),
        ),
        (
            "curve",
            vec![
                "config",
                "database",
                "queries",
                "embedder",
                "out-dir",
                "k",
                "curve-thresholds",
            ],
        ),
        (
            "gds",
            vec![
                "config",
                "dataset",
                "embedder",
                "out-dir",
                "seed",
                "bin-edges",
                "pair-budget",
                "ordering-trials",
            ],
        ),
        (
            "compare",
            [
                &["config", "out-dir", "seeds"][..],
                SYNTH_FIELDS,
                MINE_FIELDS,
                TRAIN_FIELDS,
                EVAL_FIELDS,
                SWEEP_FIELDS,
            ]
            .concat(),
        ),
    ];
    for (cmd, fields) in cases {
        let out = run(&[cmd, "--help"]);
        assert_ok(&out);
        let full = stdout_of(&out);
        // Required flags repeat in the usage line; count the listing only.
        let help = full
            .split_once("Options:")
            .map(|(_, tail)| tail.to_string())
            .unwrap_or(full);
        for field in fields {
            assert_eq!(
                count_flag(&help, field),
                1,
                "{cmd} --help should list --{field} exactly once\n{help}"
            );
        }
    }
    // The multi-seed command takes --seeds, never a single --seed.
    let compare_help = stdout_of(&run(&["compare", "--help"]));
    assert_eq!(count_flag(&compare_help, "seed"), 0);
}

#[test]
fn compare_with_zero_epochs_ties_every_arm() {
    let t = tempfile::tempdir().unwrap();
    let out = run(&[
        &[
            "compare",
            "--seeds",
            "5,6",
            "--epochs",
            "0",
            "--pair-budget",
            "500",
            "--ordering-trials",
            "200",
            "--k",
            "1,2",
            "--curve-thresholds",
            "10,25",
            "--out-dir",
            t.path().to_str().unwrap(),
        ],
        SMALL_WORLD,
        SMALL_MINE,
    ]
    .concat());
    assert_ok(&out);

    let rows: Vec<Vec<String>> =
        std::fs::read_to_string(t.path().join("compare.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect();
    assert_eq!(rows.len(), 6, "three arms for each of two seeds");
    for seed in ["5", "6"] {
        let per_seed: Vec<&Vec<String>> = rows.iter().filter(|r| r[1] == seed).collect();
        assert_eq!(per_seed.len(), 3);
        let arms: Vec<&str> = per_seed.iter().map(|r| r[0].as_str()).collect();
        assert_eq!(arms, ["raw", "clique", "random-window"]);
        // Both untrained arms run the same identity embedder, so they must
        // match bitwise; against the raw arm only a renormalization of the
        // f32-quantized descriptors separates them.
        assert_eq!(per_seed[1][2..], per_seed[2][2..]);
        for (r, c) in per_seed[0][2..].iter().zip(&per_seed[1][2..]) {
            let (r, c): (f64, f64) = (r.parse().unwrap(), c.parse().unwrap());
            assert!(
                (r - c).abs() <= 1e-6,
                "an untrained embedder must reproduce the raw metrics: {r} vs {c}"
            );
        }
    }

    let summary = std::fs::read_to_string(t.path().join("compare_summary.csv")).unwrap();
    let metric_count = rows[0].len() - 2;
    assert_eq!(summary.lines().count(), metric_count + 1);
    for line in summary.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[4], "0", "zero training must mean zero delta: {line}");
        assert_eq!(fields[2], fields[3], "both untrained arms share one embedder: {line}");
        let raw: f64 = fields[1].parse().unwrap();
        let clique: f64 = fields[2].parse().unwrap();
        assert!(
            (raw - clique).abs() <= 1e-6,
            "an untrained embedder must track the raw metrics: {line}"
        );
    }

    // The medians in the summary must be recomputable from the raw rows.
    let median = |mut xs: Vec<f64>| -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len();
        if n % 2 == 1 {
            xs[n / 2]
        } else {
            (xs[n / 2 - 1] + xs[n / 2]) / 2.0
        }
    };
    for (i, line) in summary.lines().skip(1).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        let clique_vals: Vec<f64> = rows
            .iter()
            .filter(|r| r[0] == "clique")
            .map(|r| r[2 + i].parse().unwrap())
            .collect();
        assert_eq!(
            fields[2],
            format!("{}", median(clique_vals)),
            "summary median should match a recomputation: {line}"
        );
    }

    let resolved: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(t.path().join("resolved_config.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(resolved["opt"]["epochs"], 0);
    assert_eq!(resolved["mining"]["num_batches"], 3);
    assert!(t.path().join("compare_curve.svg").exists());
}
