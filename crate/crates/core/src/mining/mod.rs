//! Mining training batches of places from a dataset.
//!
//! A batch is a set of labeled places. Mined places are cliques in a
//! candidate graph over the frames of descriptor-similar sequences from one
//! city: every pair inside a place sits strictly closer than `tau` meters,
//! and removing each sampled clique together with its graph neighborhood
//! keeps any two frames of different mined places at least `tau` apart. The
//! remainder of the batch is filled with places drawn from a sparse dataset
//! whose place groups are trivially separated.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{central_frame, Dataset};
use crate::error::{Error, Result};
use crate::geo::{geo_distance, Position};
use crate::scalar::Scalar;

mod cliques;
mod collection;
mod graph;

pub use cliques::{enumerate_cliques_in, KCliqueIter};
pub use collection::{
    compile_batch_collection, compile_window_collection, load_collection, save_collection,
    BatchCollection, CollectionHeader, MiningStrategy,
};
pub use graph::{AdjacencyMatrix, CandidateGraph};

/// How the sequences joining the reference sequence in a candidate graph
/// are drawn from its city.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Without replacement, weighted by a softmax over descriptor
    /// similarity to the reference sequence.
    Weighted,
    /// The top sequences by descriptor similarity, deterministically.
    MostSimilar,
    /// Uniformly at random.
    Uniform,
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SamplingMode::Weighted => "weighted",
            SamplingMode::MostSimilar => "most-similar",
            SamplingMode::Uniform => "uniform",
        };
        f.write_str(s)
    }
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(SamplingMode::Weighted),
            "most-similar" => Ok(SamplingMode::MostSimilar),
            "uniform" => Ok(SamplingMode::Uniform),
            other => Err(Error::InvalidConfig(format!(
                "unknown sampling mode {other:?}; expected weighted, most-similar or uniform"
            ))),
        }
    }
}

/// Batch mining parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningConfig {
    /// Number of sequences joining the reference sequence in each candidate
    /// graph.
    pub similar_sequences: u32,
    /// Distance threshold in meters: edges join frames strictly closer than
    /// this, and distinct mined places never come closer than this.
    pub tau: f64,
    /// Places per batch.
    pub places_per_batch: u32,
    /// Frames per place.
    pub clique_size: u32,
    /// Fraction of each batch filled with mined places, in (0, 1]; the rest
    /// comes from the sparse dataset.
    pub clique_fraction: f64,
    /// Batches per collection.
    pub num_batches: u32,
    pub sampling_mode: SamplingMode,
    /// Softmax temperature for [`SamplingMode::Weighted`].
    pub similarity_temperature: f64,
    /// How many times a batch may rebuild its candidate graph after running
    /// out of cliques before mining is declared infeasible.
    pub max_restarts: u32,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            similar_sequences: 15,
            tau: 25.0,
            places_per_batch: 60,
            clique_size: 4,
            clique_fraction: 0.5,
            num_batches: 4000,
            sampling_mode: SamplingMode::Weighted,
            similarity_temperature: 0.1,
            max_restarts: 32,
            seed: 0,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return fail(format!("tau must be positive and finite, got {}", self.tau));
        }
        if self.places_per_batch == 0 {
            return fail("places_per_batch must be at least 1".into());
        }
        if self.clique_size < 2 {
            return fail(format!(
                "clique_size must be at least 2, got {}",
                self.clique_size
            ));
        }
        if !(self.clique_fraction > 0.0 && self.clique_fraction <= 1.0) {
            return fail(format!(
                "clique_fraction must lie in (0, 1], got {}",
                self.clique_fraction
            ));
        }
        if !self.similarity_temperature.is_finite() || self.similarity_temperature <= 0.0 {
            return fail(format!(
                "similarity_temperature must be positive and finite, got {}",
                self.similarity_temperature
            ));
        }
        Ok(())
    }

    /// Mined places per batch: the clique fraction, rounded up.
    pub fn clique_quota(&self) -> usize {
        let n = self.places_per_batch as usize;
        ((self.clique_fraction * n as f64).ceil() as usize).min(n)
    }
}

/// Where a place came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Mined as a clique of the candidate graph.
    Clique,
    /// Drawn from a sparse place group.
    Sparse,
    /// A run of consecutive frames of one sequence (baseline mining).
    Window,
}

/// One labeled place of a batch. Frame ids are strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Place {
    /// Position of the place in its batch, starting at 1.
    pub label: u32,
    pub provenance: Provenance,
    pub frame_ids: Vec<u64>,
}

/// One training batch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub places: Vec<Place>,
}

impl BatchManifest {
    pub fn n_places(&self) -> usize {
        self.places.len()
    }

    pub fn n_frames(&self) -> usize {
        self.places.iter().map(|p| p.frame_ids.len()).sum()
    }

    /// All frames of the batch as `(label, frame_id)`, place by place.
    pub fn frames(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.places
            .iter()
            .flat_map(|p| p.frame_ids.iter().map(move |&id| (p.label, id)))
    }
}

/// Cosine similarity of the central-frame descriptors of two sequences,
/// computed in f64.
pub fn sequence_similarity<S: Scalar>(ds: &Dataset<S>, a: u32, b: u32) -> f64 {
    let ra = central_descriptor(ds, a);
    let rb = central_descriptor(ds, b);
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

fn central_descriptor<S: Scalar>(ds: &Dataset<S>, seq: u32) -> Vec<f64> {
    let fid = central_frame(ds.sequence(seq));
    ds.embeddings()
        .row(fid as usize)
        .iter()
        .map(|v| v.as_f64())
        .collect()
}

/// Draws up to `cfg.similar_sequences` sequences from `pool` according to
/// the sampling mode, scored by similarity to `s_ref`.
pub(crate) fn select_similar_sequences<S: Scalar, R: Rng + ?Sized>(
    ds: &Dataset<S>,
    s_ref: u32,
    pool: &[u32],
    cfg: &MiningConfig,
    rng: &mut R,
) -> Vec<u32> {
    let amount = (cfg.similar_sequences as usize).min(pool.len());
    if amount == 0 {
        return Vec::new();
    }
    match cfg.sampling_mode {
        SamplingMode::Uniform => rand::seq::index::sample(rng, pool.len(), amount)
            .iter()
            .map(|i| pool[i])
            .collect(),
        SamplingMode::MostSimilar => {
            let mut scored: Vec<(u32, f64)> = pool
                .iter()
                .map(|&s| (s, sequence_similarity(ds, s_ref, s)))
                .collect();
            scored.sort_by(|a, b| {
                b.1.total_cmp(&a.1)
                    .then_with(|| ds.sequence(a.0).seq_id.cmp(&ds.sequence(b.0).seq_id))
            });
            scored.truncate(amount);
            scored.into_iter().map(|(s, _)| s).collect()
        }
        SamplingMode::Weighted => {
            let sims: Vec<f64> = pool
                .iter()
                .map(|&s| sequence_similarity(ds, s_ref, s))
                .collect();
            let top = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut remaining: Vec<(u32, f64)> = pool
                .iter()
                .zip(&sims)
                .map(|(&s, &sim)| (s, ((sim - top) / cfg.similarity_temperature).exp()))
                .collect();
            let mut chosen = Vec::with_capacity(amount);
            for _ in 0..amount {
                let total: f64 = remaining.iter().map(|r| r.1).sum();
                let pick = if total > 0.0 {
                    let mut t = rng.random_range(0.0..total);
                    let mut pick = remaining.len() - 1;
                    for (i, r) in remaining.iter().enumerate() {
                        if t < r.1 {
                            pick = i;
                            break;
                        }
                        t -= r.1;
                    }
                    pick
                } else {
                    // Every weight underflowed; all candidates are equally
                    // (im)plausible at this temperature.
                    rng.random_range(0..remaining.len())
                };
                chosen.push(remaining.swap_remove(pick).0);
            }
            chosen
        }
    }
}

/// Builds a candidate graph: a random city, a random reference sequence in
/// it, up to `similar_sequences` companions drawn by the sampling mode, and
/// an edge between every frame pair strictly closer than `tau`.
pub fn build_candidate_graph<S: Scalar, R: Rng + ?Sized>(
    ds: &Dataset<S>,
    cfg: &MiningConfig,
    rng: &mut R,
) -> Result<CandidateGraph> {
    if ds.cities().is_empty() {
        return Err(Error::InvalidConfig(
            "cannot mine from a dataset with no cities".into(),
        ));
    }
    let city = rng.random_range(0..ds.cities().len() as u32);
    let seqs = ds.city_sequences(city);
    let s_ref = seqs[rng.random_range(0..seqs.len())];
    let pool: Vec<u32> = seqs.iter().copied().filter(|&s| s != s_ref).collect();
    let chosen = select_similar_sequences(ds, s_ref, &pool, cfg, rng);

    let mut frame_ids = Vec::new();
    let mut positions = Vec::new();
    for seq in std::iter::once(s_ref).chain(chosen) {
        for &fid in &ds.sequence(seq).frame_ids {
            frame_ids.push(fid);
            positions.push(ds.position(fid));
        }
    }
    Ok(CandidateGraph::build(frame_ids, positions, cfg.tau))
}

/// Samples one place: the first maximal clique with at least `k` vertices
/// met by a randomly ordered enumeration, thinned to `k` vertices uniformly
/// at random. Returns ascending vertex indices, or None when the alive
/// subgraph has no clique of `k` vertices left.
pub fn sample_place<R: Rng + ?Sized>(
    g: &CandidateGraph,
    k: usize,
    rng: &mut R,
) -> Option<Vec<u32>> {
    assert!(k >= 1, "place size must be at least 1");
    if g.n_alive() < k {
        return None;
    }
    let mut order = g.alive_vertices();
    order.shuffle(rng);
    for maximal in g.maximal_cliques_with_order(&order) {
        if maximal.len() < k {
            continue;
        }
        let mut verts: Vec<u32> = rand::seq::index::sample(rng, maximal.len(), k)
            .iter()
            .map(|i| maximal[i])
            .collect();
        verts.sort_unstable();
        return Some(verts);
    }
    None
}

/// Mines one batch: `clique_quota()` clique places from `dense`, the rest
/// sparse places from `sparse`. Labels run from 1 in place order. Sparse
/// place frame ids refer to the sparse dataset.
pub fn sample_batch<S: Scalar, R: Rng + ?Sized>(
    dense: &Dataset<S>,
    sparse: Option<&Dataset<S>>,
    cfg: &MiningConfig,
    rng: &mut R,
) -> Result<BatchManifest> {
    cfg.validate()?;
    let quota = cfg.clique_quota();
    let k = cfg.clique_size as usize;
    let mut places = Vec::with_capacity(cfg.places_per_batch as usize);
    let mut anchors: Vec<Position> = Vec::new();
    let mut graph = build_candidate_graph(dense, cfg, rng)?;
    let mut restarts = 0u32;

    while places.len() < quota {
        match sample_place(&graph, k, rng) {
            Some(verts) => {
                anchors.extend(verts.iter().map(|&v| graph.position(v)));
                let mut frame_ids = graph.frame_ids_of(&verts);
                frame_ids.sort_unstable();
                graph.remove_closed_neighborhood(&verts);
                places.push(Place {
                    label: places.len() as u32 + 1,
                    provenance: Provenance::Clique,
                    frame_ids,
                });
            }
            None => {
                restarts += 1;
                if restarts > cfg.max_restarts {
                    return Err(Error::MiningInfeasible {
                        k,
                        restarts: cfg.max_restarts,
                        found: places.len(),
                        needed: quota,
                    });
                }
                graph = build_candidate_graph(dense, cfg, rng)?;
                // A fresh graph knows nothing about places already mined;
                // kill everything near them so separation survives restarts.
                graph.cull_within(&anchors, cfg.tau);
            }
        }
    }

    append_sparse_places(&mut places, sparse, cfg, rng)?;
    Ok(BatchManifest { places })
}

/// Mines one baseline batch: mined places are runs of `clique_size`
/// consecutive frames at a random offset of a random sequence, distinct
/// within the batch, with no separation guarantee. The sparse remainder is
/// filled exactly as in [`sample_batch`].
pub fn sample_window_batch<S: Scalar, R: Rng + ?Sized>(
    dense: &Dataset<S>,
    sparse: Option<&Dataset<S>>,
    cfg: &MiningConfig,
    rng: &mut R,
) -> Result<BatchManifest> {
    cfg.validate()?;
    let quota = cfg.clique_quota();
    let k = cfg.clique_size as usize;
    let eligible: Vec<u32> = (0..dense.sequences().len() as u32)
        .filter(|&s| dense.sequence(s).frame_ids.len() >= k)
        .collect();
    if eligible.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no sequence has the {k} frames needed for a window place"
        )));
    }
    let mut used: HashSet<(u32, usize)> = HashSet::new();
    let mut places = Vec::with_capacity(cfg.places_per_batch as usize);
    let mut tries = 0usize;
    while places.len() < quota {
        tries += 1;
        if tries > 1000 * quota.max(1) {
            return Err(Error::InvalidConfig(
                "not enough distinct frame windows for the requested batch".into(),
            ));
        }
        let seq = eligible[rng.random_range(0..eligible.len())];
        let frame_ids = &dense.sequence(seq).frame_ids;
        let start = rng.random_range(0..=frame_ids.len() - k);
        if !used.insert((seq, start)) {
            continue;
        }
        places.push(Place {
            label: places.len() as u32 + 1,
            provenance: Provenance::Window,
            frame_ids: frame_ids[start..start + k].to_vec(),
        });
    }

    append_sparse_places(&mut places, sparse, cfg, rng)?;
    Ok(BatchManifest { places })
}

fn append_sparse_places<S: Scalar, R: Rng + ?Sized>(
    places: &mut Vec<Place>,
    sparse: Option<&Dataset<S>>,
    cfg: &MiningConfig,
    rng: &mut R,
) -> Result<()> {
    let fill = cfg.places_per_batch as usize - places.len();
    if fill == 0 {
        return Ok(());
    }
    let Some(sparse) = sparse else {
        return Err(Error::InvalidConfig(format!(
            "clique_fraction {} leaves {fill} sparse places per batch but no sparse dataset was given",
            cfg.clique_fraction
        )));
    };
    let offset = places.len() as u32;
    for mut place in mix_sparse_places(sparse, fill, cfg.clique_size as usize, rng)? {
        place.label += offset;
        places.push(place);
    }
    Ok(())
}

/// Draws `count` places of `k` frames each from a sparse dataset, where
/// every sequence is one place group: groups are distinct within the batch
/// and frames are drawn uniformly without replacement inside a group.
pub fn mix_sparse_places<S: Scalar, R: Rng + ?Sized>(
    sparse: &Dataset<S>,
    count: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Place>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let seqs = sparse.sequences();
    for seq in seqs {
        if seq.frame_ids.len() < k {
            return Err(Error::SparseGroupTooSmall {
                seq_id: seq.seq_id.clone(),
                len: seq.frame_ids.len(),
                k,
            });
        }
    }
    if seqs.len() < count {
        return Err(Error::NotEnoughSparseGroups {
            needed: count,
            available: seqs.len(),
        });
    }
    let groups = rand::seq::index::sample(rng, seqs.len(), count);
    let mut out = Vec::with_capacity(count);
    for (i, gi) in groups.iter().enumerate() {
        let seq = &seqs[gi];
        let mut frame_ids: Vec<u64> = rand::seq::index::sample(rng, seq.frame_ids.len(), k)
            .iter()
            .map(|j| seq.frame_ids[j])
            .collect();
        frame_ids.sort_unstable();
        out.push(Place {
            label: i as u32 + 1,
            provenance: Provenance::Sparse,
            frame_ids,
        });
    }
    Ok(out)
}

/// Verifies every structural and geometric invariant one batch promises:
/// place count, labeling, place sizes, the mined/sparse split, within-place
/// tightness and cross-place separation of clique places, window
/// contiguity, and sparse group membership. `sparse_id_offset` is the shift
/// applied to sparse frame ids (as recorded in a collection header), if any.
pub fn check_batch<S: Scalar>(
    dense: &Dataset<S>,
    sparse: Option<&Dataset<S>>,
    cfg: &MiningConfig,
    batch: &BatchManifest,
    sparse_id_offset: Option<u64>,
) -> std::result::Result<(), String> {
    let total = cfg.places_per_batch as usize;
    let quota = cfg.clique_quota();
    let k = cfg.clique_size as usize;

    if batch.places.len() != total {
        return Err(format!(
            "expected {total} places, found {}",
            batch.places.len()
        ));
    }
    for (i, place) in batch.places.iter().enumerate() {
        if place.label != i as u32 + 1 {
            return Err(format!(
                "place at index {i} has label {}, expected {}",
                place.label,
                i + 1
            ));
        }
        if place.frame_ids.len() != k {
            return Err(format!(
                "place {} has {} frames, expected {k}",
                place.label,
                place.frame_ids.len()
            ));
        }
        if !place.frame_ids.windows(2).all(|w| w[0] < w[1]) {
            return Err(format!(
                "place {} frame ids are not strictly increasing",
                place.label
            ));
        }
    }
    let mined = batch
        .places
        .iter()
        .filter(|p| p.provenance != Provenance::Sparse)
        .count();
    if mined != quota {
        return Err(format!("expected {quota} mined places, found {mined}"));
    }
    if batch.places[mined..]
        .iter()
        .any(|p| p.provenance != Provenance::Sparse)
    {
        return Err("mined places must precede sparse places".into());
    }

    let dense_position = |id: u64| -> std::result::Result<Position, String> {
        if (id as usize) < dense.n_frames() {
            Ok(dense.position(id))
        } else {
            Err(format!("frame id {id} lies outside the dense dataset"))
        }
    };

    let mut clique_places: Vec<(u32, Vec<Position>)> = Vec::new();
    for place in &batch.places {
        match place.provenance {
            Provenance::Clique => {
                let ps: Vec<Position> = place
                    .frame_ids
                    .iter()
                    .map(|&id| dense_position(id))
                    .collect::<std::result::Result<_, _>>()?;
                for i in 0..ps.len() {
                    for j in i + 1..ps.len() {
                        let d = geo_distance(ps[i], ps[j]);
                        if d >= cfg.tau {
                            return Err(format!(
                                "place {}: frames {} and {} are {d:.3} m apart, not strictly below tau = {}",
                                place.label, place.frame_ids[i], place.frame_ids[j], cfg.tau
                            ));
                        }
                    }
                }
                clique_places.push((place.label, ps));
            }
            Provenance::Window => {
                let mut seq_of: Option<u32> = None;
                let mut indices = Vec::with_capacity(k);
                for &id in &place.frame_ids {
                    dense_position(id)?;
                    let f = dense.frame(id);
                    match seq_of {
                        None => seq_of = Some(f.seq),
                        Some(s) if s != f.seq => {
                            return Err(format!(
                                "window place {} spans more than one sequence",
                                place.label
                            ));
                        }
                        _ => {}
                    }
                    indices.push(f.seq_index);
                }
                indices.sort_unstable();
                if !indices.windows(2).all(|w| w[1] == w[0] + 1) {
                    return Err(format!(
                        "window place {} is not a run of consecutive frames",
                        place.label
                    ));
                }
            }
            Provenance::Sparse => {}
        }
    }

    for (a, (label_a, ps_a)) in clique_places.iter().enumerate() {
        for (label_b, ps_b) in clique_places.iter().skip(a + 1) {
            for &pa in ps_a {
                for &pb in ps_b {
                    let d = geo_distance(pa, pb);
                    if d < cfg.tau {
                        return Err(format!(
                            "places {label_a} and {label_b} have frames {d:.3} m apart, below tau = {}",
                            cfg.tau
                        ));
                    }
                }
            }
        }
    }

    let mut used_groups = HashSet::new();
    for place in batch
        .places
        .iter()
        .filter(|p| p.provenance == Provenance::Sparse)
    {
        let Some(sp) = sparse else {
            return Err("batch has sparse places but no sparse dataset was given".into());
        };
        let off = sparse_id_offset.unwrap_or(0);
        let mut seq_of: Option<u32> = None;
        for &id in &place.frame_ids {
            let Some(raw) = id.checked_sub(off) else {
                return Err(format!("sparse frame id {id} is below the id offset {off}"));
            };
            if raw as usize >= sp.n_frames() {
                return Err(format!(
                    "sparse frame id {id} lies outside the sparse dataset"
                ));
            }
            let f = sp.frame(raw);
            match seq_of {
                None => seq_of = Some(f.seq),
                Some(s) if s != f.seq => {
                    return Err(format!(
                        "sparse place {} mixes frames of different groups",
                        place.label
                    ));
                }
                _ => {}
            }
        }
        let s = seq_of.expect("places have at least one frame");
        if !used_groups.insert(s) {
            return Err(format!(
                "sparse group {:?} backs two places of one batch",
                sp.sequence(s).seq_id
            ));
        }
    }

    Ok(())
}
