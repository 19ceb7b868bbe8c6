//! Experiment configuration: one JSON file describing every stage.
//!
//! Each subcommand reads its slice of [`ExperimentConfig`]. Values resolve
//! in three layers: command-line flags override config-file values, which
//! override the built-in defaults. Seeds are the exception: randomized
//! subcommands never fall back to a default seed, so a run is either
//! explicitly seeded (flag or config file) or refused. The one seed then
//! drives every stage it touches, overriding any nested `seed` fields.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use cliquemine::eval::MatchRule;
use cliquemine::mining::{MiningConfig, SamplingMode};
use cliquemine::synth::SynthConfig;
use cliquemine::training::{InitScheme, MsParams, OptConfig};
use cliquemine::{Error, Result as CoreResult};

/// A command-line mistake: reported on stderr with exit code 2, unlike
/// runtime failures which exit with 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Which ground-truth rule recall is measured under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Correct retrievals lie within `threshold` meters of the query.
    Meters,
    /// Correct retrievals lie within `threshold` frame indices in the
    /// query's city.
    Frames,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Meters => "meters",
            EvalMode::Frames => "frames",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> CoreResult<Self> {
        match s {
            "meters" => Ok(EvalMode::Meters),
            "frames" => Ok(EvalMode::Frames),
            other => Err(Error::InvalidConfig(format!(
                "unknown eval mode {other:?}; expected meters or frames"
            ))),
        }
    }
}

impl EvalMode {
    /// Combines the mode with its threshold into a match rule.
    pub fn to_rule(self, threshold: f64) -> CoreResult<MatchRule> {
        match self {
            EvalMode::Meters => Ok(MatchRule::Meters(threshold)),
            EvalMode::Frames => {
                if !(threshold.is_finite()
                    && threshold >= 0.0
                    && threshold.fract() == 0.0
                    && threshold <= f64::from(u32::MAX))
                {
                    return Err(Error::InvalidConfig(format!(
                        "frames threshold must be a non-negative whole number, got {threshold}"
                    )));
                }
                Ok(MatchRule::Frames(threshold as u32))
            }
        }
    }
}

/// Evaluation settings shared by `eval`, `curve`, `gds` and `compare`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Recall cutoffs.
    pub k: Vec<usize>,
    pub mode: EvalMode,
    /// Match threshold in the mode's unit: meters, or frame offset.
    pub threshold: f64,
    /// Metric thresholds of the recall sweep, meters.
    pub curve_thresholds: Vec<f64>,
    /// Geographic bin edges of the distance profile, meters.
    pub bin_edges: Vec<f64>,
    /// Same-city pairs sampled for the profile; 0 scans every pair.
    pub pair_budget: u64,
    /// Trials behind the ordering-probability estimate.
    pub ordering_trials: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: vec![1, 5, 10],
            mode: EvalMode::Meters,
            threshold: 25.0,
            curve_thresholds: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 50.0, 75.0, 100.0],
            bin_edges: (0..=20).map(|i| 5.0 * f64::from(i)).collect(),
            pair_budget: 200_000,
            ordering_trials: 20_000,
        }
    }
}

/// Everything a full experiment needs, as stored on disk.
///
/// The defaults describe the desk-scale comparison: a dense two-condition
/// benchmark world, fully clique-mined batches (no sparse source), and a
/// single training epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub mining: MiningConfig,
    pub loss: MsParams,
    pub opt: OptConfig,
    pub eval: EvalConfig,
    /// Seed driving every randomized stage; absent means a `--seed` flag is
    /// mandatory.
    pub seed: Option<u64>,
    /// Directory the command writes its artifacts into.
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig {
                num_cities: 20,
                path_length: 500.0,
                spatial_length_scale: 40.0,
                appearance_noise_sigma: 0.18,
                condition_offset_sigma: 0.08,
                ..SynthConfig::default()
            },
            mining: MiningConfig {
                clique_size: 8,
                clique_fraction: 1.0,
                num_batches: 256,
                ..MiningConfig::default()
            },
            loss: MsParams::default(),
            opt: OptConfig {
                epochs: 3,
                ..OptConfig::default()
            },
            eval: EvalConfig::default(),
            seed: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Reads a config file, or the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
}

/// Writes a config as pretty JSON with a trailing newline.
pub fn save_config(path: &Path, cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(cfg).context("serializing config")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing config file {}", path.display()))?;
    Ok(())
}

/// Picks the run seed: flag first, then the config file. Randomized
/// commands have no default seed.
pub fn resolve_seed(flag: Option<u64>, from_config: Option<u64>) -> anyhow::Result<u64> {
    flag.or(from_config).ok_or_else(|| {
        UsageError(
            "this command is randomized: pass --seed or set \"seed\" in the config file".into(),
        )
        .into()
    })
}

/// World-generation overrides.
#[derive(clap::Args, Clone, Debug, Default)]
pub struct SynthFlags {
    /// Number of cities in the world.
    #[arg(long)]
    pub num_cities: Option<u32>,
    /// Traversals of each city's path.
    #[arg(long)]
    pub sequences_per_city: Option<u32>,
    /// Path length per city, meters.
    #[arg(long)]
    pub path_length: Option<f64>,
    /// Distance between consecutive frames, meters.
    #[arg(long)]
    pub frame_spacing: Option<f64>,
    /// Raw descriptor dimension.
    #[arg(long)]
    pub raw_dim: Option<usize>,
    /// Length scale of the appearance field, meters.
    #[arg(long)]
    pub spatial_length_scale: Option<f64>,
    /// Per-frame appearance noise level.
    #[arg(long)]
    pub appearance_noise_sigma: Option<f64>,
    /// Conditions cycled across a city's traversals.
    #[arg(long)]
    pub num_conditions: Option<u32>,
    /// Strength of each condition's descriptor offset.
    #[arg(long)]
    pub condition_offset_sigma: Option<f64>,
}

impl SynthFlags {
    pub fn apply(&self, cfg: &mut SynthConfig) {
        if let Some(v) = self.num_cities {
            cfg.num_cities = v;
        }
        if let Some(v) = self.sequences_per_city {
            cfg.sequences_per_city = v;
        }
        if let Some(v) = self.path_length {
            cfg.path_length = v;
        }
        if let Some(v) = self.frame_spacing {
            cfg.frame_spacing = v;
        }
        if let Some(v) = self.raw_dim {
            cfg.raw_dim = v;
        }
        if let Some(v) = self.spatial_length_scale {
            cfg.spatial_length_scale = v;
        }
        if let Some(v) = self.appearance_noise_sigma {
            cfg.appearance_noise_sigma = v;
        }
        if let Some(v) = self.num_conditions {
            cfg.num_conditions = v;
        }
        if let Some(v) = self.condition_offset_sigma {
            cfg.condition_offset_sigma = v;
        }
    }
}

/// Batch-mining overrides.
#[derive(clap::Args, Clone, Debug, Default)]
pub struct MineFlags {
    /// Sequences joining the reference sequence in each candidate graph.
    #[arg(long)]
    pub similar_sequences: Option<u32>,
    /// Edge threshold and place-separation distance, meters.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Places per batch.
    #[arg(long)]
    pub places_per_batch: Option<u32>,
    /// Frames per place.
    #[arg(long)]
    pub clique_size: Option<u32>,
    /// Fraction of each batch filled with mined places, in (0, 1].
    #[arg(long)]
    pub clique_fraction: Option<f64>,
    /// Batches per collection.
    #[arg(long)]
    pub num_batches: Option<u32>,
    /// How companion sequences are drawn: weighted, most-similar or
    /// uniform.
    #[arg(long, value_parser = SamplingMode::from_str)]
    pub sampling_mode: Option<SamplingMode>,
    /// Softmax temperature of the weighted sampling mode.
    #[arg(long)]
    pub similarity_temperature: Option<f64>,
    /// Graph rebuilds allowed per batch before mining is infeasible.
    #[arg(long)]
    pub max_restarts: Option<u32>,
}

impl MineFlags {
    pub fn apply(&self, cfg: &mut MiningConfig) {
        if let Some(v) = self.similar_sequences {
            cfg.similar_sequences = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.places_per_batch {
            cfg.places_per_batch = v;
        }
        if let Some(v) = self.clique_size {
            cfg.clique_size = v;
        }
        if let Some(v) = self.clique_fraction {
            cfg.clique_fraction = v;
        }
        if let Some(v) = self.num_batches {
            cfg.num_batches = v;
        }
        if let Some(v) = self.sampling_mode {
            cfg.sampling_mode = v;
        }
        if let Some(v) = self.similarity_temperature {
            cfg.similarity_temperature = v;
        }
        if let Some(v) = self.max_restarts {
            cfg.max_restarts = v;
        }
    }
}

/// Loss and optimizer overrides.
#[derive(clap::Args, Clone, Debug, Default)]
pub struct TrainFlags {
    /// Sharpness of the positive loss term.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Sharpness of the negative loss term.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Similarity offset inside both loss exponents.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Pair-selection margin in distance units.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Passes over the batch collection.
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Output dimension of the embedder; 0 keeps the input dimension.
    #[arg(long)]
    pub d_out: Option<usize>,
    /// Weight initialization: identity or random.
    #[arg(long, value_parser = InitScheme::from_str)]
    pub init: Option<InitScheme>,
    /// Feed every pair to the loss instead of the selected ones.
    #[arg(long)]
    pub no_ms_mining: bool,
}

impl TrainFlags {
    pub fn apply(&self, loss: &mut MsParams, opt: &mut OptConfig) {
        if let Some(v) = self.alpha {
            loss.alpha = v;
        }
        if let Some(v) = self.beta {
            loss.beta = v;
        }
        if let Some(v) = self.lambda {
            loss.lambda = v;
        }
        if let Some(v) = self.epsilon {
            loss.epsilon = v;
        }
        if let Some(v) = self.epochs {
            opt.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            opt.learning_rate = v;
        }
        if let Some(v) = self.momentum {
            opt.momentum = v;
        }
        if let Some(v) = self.d_out {
            opt.d_out = v;
        }
        if let Some(v) = self.init {
            opt.init = v;
        }
        if self.no_ms_mining {
            opt.ms_mining = false;
        }
    }
}
