//! Synthetic street-level worlds.
//!
//! A world is a set of cities on a coarse lattice, one random-walk path per
//! city, and `sequences_per_city` traversals of that path. Raw appearance is
//! a smooth function of position (random Fourier features of an RBF kernel
//! with length scale `spatial_length_scale`), shifted by a per-condition
//! offset vector and perturbed by i.i.d. noise. Everything is a pure
//! function of the config, so equal configs give byte-identical datasets.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ManifestRecord};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::geo::Position;
use crate::rng::{derive_rng, Stream};
use crate::scalar::Scalar;

/// Spacing of the city lattice, comfortably above any path extent.
const CITY_LATTICE_M: f64 = 50_000.0;
/// Largest heading change between consecutive path steps, radians.
const MAX_TURN_RAD: f64 = 0.45;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_cities: u32,
    pub sequences_per_city: u32,
    /// Path length in meters; frames sit every `frame_spacing` meters along
    /// it, so each sequence has `floor(path_length / frame_spacing) + 1`
    /// frames.
    pub path_length: f64,
    pub frame_spacing: f64,
    pub raw_dim: usize,
    /// Length scale of the appearance field: positions much closer than this
    /// look similar, positions much farther look unrelated.
    pub spatial_length_scale: f64,
    pub appearance_noise_sigma: f64,
    pub num_conditions: u32,
    pub condition_offset_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_cities: 4,
            sequences_per_city: 4,
            path_length: 400.0,
            frame_spacing: 5.0,
            raw_dim: 32,
            spatial_length_scale: 50.0,
            appearance_noise_sigma: 0.1,
            num_conditions: 2,
            condition_offset_sigma: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.num_cities == 0 {
            return bad("num_cities must be at least 1");
        }
        if self.sequences_per_city == 0 {
            return bad("sequences_per_city must be at least 1");
        }
        if !(self.frame_spacing.is_finite() && self.frame_spacing > 0.0) {
            return bad("frame_spacing must be positive");
        }
        if !(self.path_length.is_finite() && self.path_length >= 0.0) {
            return bad("path_length must be non-negative");
        }
        if self.raw_dim == 0 {
            return bad("raw_dim must be at least 1");
        }
        if !(self.spatial_length_scale.is_finite() && self.spatial_length_scale > 0.0) {
            return bad("spatial_length_scale must be positive");
        }
        if !(self.appearance_noise_sigma.is_finite() && self.appearance_noise_sigma >= 0.0) {
            return bad("appearance_noise_sigma must be non-negative");
        }
        if self.num_conditions == 0 {
            return bad("num_conditions must be at least 1");
        }
        if !(self.condition_offset_sigma.is_finite() && self.condition_offset_sigma >= 0.0) {
            return bad("condition_offset_sigma must be non-negative");
        }
        Ok(())
    }

    pub fn frames_per_sequence(&self) -> usize {
        (self.path_length / self.frame_spacing).floor() as usize + 1
    }

    /// Condition assigned to traversal `i` of a city.
    pub fn condition_of(&self, seq_in_city: u32) -> u32 {
        seq_in_city % self.num_conditions
    }
}

/// Smooth appearance field: paired cos/sin random Fourier features of an RBF
/// kernel. Rows have unit norm for even dimensions before noise is added.
struct RffField {
    dim: usize,
    freqs: Vec<[f64; 2]>,
    scale: f64,
}

impl RffField {
    fn new(dim: usize, length_scale: f64, mut rng: impl Rng) -> Self {
        let pairs = dim.div_ceil(2);
        let freqs = (0..pairs)
            .map(|_| {
                let we: f64 = rng.sample(StandardNormal);
                let wn: f64 = rng.sample(StandardNormal);
                [we / length_scale, wn / length_scale]
            })
            .collect();
        Self {
            dim,
            freqs,
            scale: (2.0 / dim as f64).sqrt(),
        }
    }

    fn eval(&self, p: Position, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        for (m, w) in self.freqs.iter().enumerate() {
            let phase = w[0] * p.east + w[1] * p.north;
            let (s, c) = phase.sin_cos();
            out[2 * m] = self.scale * c;
            if 2 * m + 1 < self.dim {
                out[2 * m + 1] = self.scale * s;
            }
        }
    }
}

/// Random-walk polyline: `n_vertices` points starting at `center`, each step
/// exactly `spacing` meters with a bounded heading change, steered back when
/// it leaves the city's bounding box.
fn walk_path(
    center: Position,
    n_vertices: usize,
    spacing: f64,
    half_box: f64,
    mut rng: impl Rng,
) -> Vec<Position> {
    let mut points = Vec::with_capacity(n_vertices);
    let mut p = center;
    points.push(p);
    if n_vertices == 1 {
        return points;
    }
    let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    for _ in 1..n_vertices {
        heading += rng.random_range(-MAX_TURN_RAD..MAX_TURN_RAD);
        let outside = (p.east - center.east).abs() > half_box
            || (p.north - center.north).abs() > half_box;
        if outside {
            heading = (center.north - p.north).atan2(center.east - p.east)
                + rng.random_range(-0.25..0.25);
        }
        p = Position::new(p.east + spacing * heading.cos(), p.north + spacing * heading.sin());
        points.push(p);
    }
    points
}

struct World {
    records: Vec<ManifestRecord>,
    rows: Vec<Vec<f64>>,
    /// Condition per global sequence index.
    conditions: Vec<u32>,
    /// Global sequence index per record.
    record_seq: Vec<usize>,
}

fn build_world(cfg: &SynthConfig) -> Result<World> {
    cfg.validate()?;

    let field = RffField::new(
        cfg.raw_dim,
        cfg.spatial_length_scale,
        derive_rng(cfg.seed, Stream::SynthField, 0),
    );

    let mut offsets = Vec::with_capacity(cfg.num_conditions as usize);
    for c in 0..cfg.num_conditions {
        let mut rng = derive_rng(cfg.seed, Stream::SynthCondition, c as u64);
        let off: Vec<f64> = (0..cfg.raw_dim)
            .map(|_| cfg.condition_offset_sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        offsets.push(off);
    }

    // A seeded world origin keeps worlds from different seeds geographically
    // disjoint; cities sit on a coarse lattice from that origin.
    let mut origin_rng = derive_rng(cfg.seed, Stream::SynthCity, 0);
    let origin = Position::new(
        origin_rng.random_range(0..1_000_000u64) as f64 * 1000.0,
        origin_rng.random_range(0..1_000_000u64) as f64 * 1000.0,
    );

    let frames_per_seq = cfg.frames_per_sequence();
    let half_box = (cfg.path_length / 4.0).clamp(100.0, 5000.0);

    let n_frames = cfg.num_cities as usize * cfg.sequences_per_city as usize * frames_per_seq;
    let mut records = Vec::with_capacity(n_frames);
    let mut rows = Vec::with_capacity(n_frames);
    let mut conditions = Vec::new();
    let mut record_seq = Vec::with_capacity(n_frames);
    let mut feature = vec![0.0f64; cfg.raw_dim];

    for city in 0..cfg.num_cities {
        let center = Position::new(
            origin.east + (city % 100) as f64 * CITY_LATTICE_M,
            origin.north + (city / 100) as f64 * CITY_LATTICE_M,
        );
        let path = walk_path(
            center,
            frames_per_seq,
            cfg.frame_spacing,
            half_box,
            derive_rng(cfg.seed, Stream::SynthPath, city as u64),
        );
        let city_name = format!("city{city:03}");

        for t in 0..cfg.sequences_per_city {
            let global_seq = (city * cfg.sequences_per_city + t) as u64;
            let condition = cfg.condition_of(t);
            conditions.push(condition);
            let mut noise_rng = derive_rng(cfg.seed, Stream::SynthNoise, global_seq);
            let seq_id = format!("{city_name}/t{t:02}");

            for (k, &pos) in path.iter().enumerate() {
                field.eval(pos, &mut feature);
                let mut row = Vec::with_capacity(cfg.raw_dim);
                for (d, &f) in feature.iter().enumerate() {
                    let noise: f64 = noise_rng.sample(StandardNormal);
                    row.push(f + offsets[condition as usize][d] + cfg.appearance_noise_sigma * noise);
                }
                records.push(ManifestRecord {
                    frame_id: records.len() as u64,
                    seq_id: seq_id.clone(),
                    city: city_name.clone(),
                    utm_east: pos.east,
                    utm_north: pos.north,
                    seq_index: k as u32,
                });
                rows.push(row);
                record_seq.push(global_seq as usize);
            }
        }
    }

    Ok(World {
        records,
        rows,
        conditions,
        record_seq,
    })
}

/// Normalizes rows and quantizes them to the f32 storage grid, so saving and
/// reloading reproduces the dataset exactly for any scalar type.
fn rows_to_matrix<S: Scalar>(rows: Vec<Vec<f64>>, dim: usize) -> Result<EmbeddingMatrix<S>> {
    let n = rows.len();
    let mut values = Vec::with_capacity(n * dim);
    for row in rows {
        let nrm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return Err(Error::InvalidConfig(
                "appearance row collapsed to zero; increase raw_dim or noise".into(),
            ));
        }
        values.extend(row.iter().map(|v| S::of_f32((v / nrm) as f32)));
    }
    let mut m = EmbeddingMatrix::from_values(n, dim, values)?;
    m.set_normalized_flag(true);
    Ok(m)
}

/// Generates the full synthetic world described by `cfg`.
pub fn generate_world<S: Scalar>(cfg: &SynthConfig) -> Result<Dataset<S>> {
    let world = build_world(cfg)?;
    let emb = rows_to_matrix(world.rows, cfg.raw_dim)?;
    Dataset::from_records(world.records, emb)
}

/// A retrieval benchmark: queries from one condition split, database from the
/// other, over the same paths.
#[derive(Clone, Debug)]
pub struct BenchmarkPair<S: Scalar> {
    pub database: Dataset<S>,
    pub queries: Dataset<S>,
}

/// Splits the world by condition into a database and a query set. The first
/// `num_conditions / 2` conditions form the database, the rest the queries,
/// so every query position also appears as a database position.
pub fn make_dense_benchmark<S: Scalar>(cfg: &SynthConfig) -> Result<BenchmarkPair<S>> {
    if cfg.num_conditions < 2 {
        return Err(Error::InvalidConfig(
            "a benchmark needs at least 2 conditions".into(),
        ));
    }
    if cfg.sequences_per_city < cfg.num_conditions {
        return Err(Error::InvalidConfig(
            "sequences_per_city must cover every condition so each path has \
             database and query traversals"
                .into(),
        ));
    }
    let world = build_world(cfg)?;
    let db_conditions = cfg.num_conditions / 2;

    let mut db_records = Vec::new();
    let mut db_rows = Vec::new();
    let mut q_records = Vec::new();
    let mut q_rows = Vec::new();
    for ((mut rec, row), &seq) in world
        .records
        .into_iter()
        .zip(world.rows)
        .zip(&world.record_seq)
    {
        if world.conditions[seq] < db_conditions {
            rec.frame_id = db_records.len() as u64;
            db_records.push(rec);
            db_rows.push(row);
        } else {
            rec.frame_id = q_records.len() as u64;
            q_records.push(rec);
            q_rows.push(row);
        }
    }

    let database = Dataset::from_records(db_records, rows_to_matrix(db_rows, cfg.raw_dim)?)?;
    let queries = Dataset::from_records(q_records, rows_to_matrix(q_rows, cfg.raw_dim)?)?;
    Ok(BenchmarkPair { database, queries })
}
