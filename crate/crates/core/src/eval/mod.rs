//! Retrieval evaluation: nearest-neighbor search and recall.
//!
//! Retrieval is exhaustive and exact, which keeps results reproducible and
//! leaves nothing to tune. Ground truth comes in two flavors: a metric radius
//! around the query position, and a frame-index window within the query's
//! city (every traversal of a city follows the same path, so frame indices
//! align across traversals).

mod gds;
mod report;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::embedding::{desc_distance, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::geo::geo_distance;
use crate::scalar::Scalar;

pub use gds::{
    gds_profile, ordering_probability, GdsBin, GdsBins, GdsProfile, OrderingEstimate,
    PairSampling,
};
pub use report::{
    gds_csv, gds_series, ordering_csv, recall_csv, render_line_chart, ChartOptions, RecallRow,
    Series,
};

/// One retrieved database frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    /// Row index into the database.
    pub index: u32,
    pub distance: f64,
}

/// Exhaustive k-nearest-neighbor search from every query row into the
/// database, by Euclidean descriptor distance.
///
/// Results are sorted by distance with ties broken toward the lower database
/// index, so the outcome does not depend on scan order or thread count. `k`
/// larger than the database is clamped.
pub fn knn_retrieve<S: Scalar>(
    database: &EmbeddingMatrix<S>,
    queries: &EmbeddingMatrix<S>,
    k: usize,
) -> Result<Vec<Vec<Neighbor>>> {
    if database.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if database.dim() != queries.dim() {
        return Err(Error::DimMismatch {
            expected: database.dim(),
            actual: queries.dim(),
        });
    }
    let k = k.min(database.n());
    let out = (0..queries.n())
        .into_par_iter()
        .map(|q| {
            let qrow = queries.row(q);
            let mut scored: Vec<(S, u32)> = database
                .rows()
                .enumerate()
                .map(|(i, row)| (desc_distance(qrow, row), i as u32))
                .collect();
            let by_dist_then_index = |a: &(S, u32), b: &(S, u32)| {
                a.0.partial_cmp(&b.0)
                    .expect("descriptor distances are finite")
                    .then(a.1.cmp(&b.1))
            };
            if k > 0 && k < scored.len() {
                scored.select_nth_unstable_by(k - 1, by_dist_then_index);
                scored.truncate(k);
            }
            scored.sort_unstable_by(by_dist_then_index);
            scored.truncate(k);
            scored
                .into_iter()
                .map(|(d, i)| Neighbor {
                    index: i,
                    distance: d.as_f64(),
                })
                .collect()
        })
        .collect();
    Ok(out)
}

/// What counts as a correct retrieval for a query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatchRule {
    /// Database frame within this many meters of the query position.
    Meters(f64),
    /// Database frame in the query's city within this many frame indices.
    Frames(u32),
}

impl std::fmt::Display for MatchRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MatchRule::Meters(m) => write!(f, "meters({m})"),
            MatchRule::Frames(n) => write!(f, "frames({n})"),
        }
    }
}

impl MatchRule {
    fn validate(&self) -> Result<()> {
        match *self {
            MatchRule::Meters(m) if !(m.is_finite() && m >= 0.0) => Err(Error::InvalidConfig(
                format!("meters threshold must be non-negative and finite, got {m}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Maps each database city index to the same-named query city index.
fn city_translation<S: Scalar>(queries: &Dataset<S>, database: &Dataset<S>) -> Vec<Option<u32>> {
    database
        .cities()
        .iter()
        .map(|name| {
            queries
                .cities()
                .iter()
                .position(|q| q == name)
                .map(|i| i as u32)
        })
        .collect()
}

fn is_match<S: Scalar>(
    rule: MatchRule,
    queries: &Dataset<S>,
    database: &Dataset<S>,
    db_city_to_query_city: &[Option<u32>],
    q: usize,
    db: u32,
) -> bool {
    let qf = queries.frame(q as u64);
    let df = database.frame(u64::from(db));
    match rule {
        MatchRule::Meters(m) => geo_distance(qf.position, df.position) <= m,
        MatchRule::Frames(w) => {
            let q_city = queries.sequence(qf.seq).city;
            let d_city = db_city_to_query_city[database.sequence(df.seq).city as usize];
            d_city == Some(q_city) && qf.seq_index.abs_diff(df.seq_index) <= w
        }
    }
}

/// One recall value with the counts behind it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecallMeasurement {
    /// Hits over answerable queries, in `[0, 1]`.
    pub recall: f64,
    pub hits: u64,
    /// Queries with at least one correct database frame; only these enter
    /// the denominator.
    pub num_queries: u64,
}

/// Fraction of queries whose top `k` retrievals contain a correct frame.
///
/// Queries with no correct database frame at all are excluded from the
/// denominator; if every query is like that the rule is unanswerable and an
/// error is returned. `retrieved` must hold one list per query row, as
/// produced by [`knn_retrieve`] on the same datasets.
pub fn recall_at_k<S: Scalar>(
    queries: &Dataset<S>,
    database: &Dataset<S>,
    retrieved: &[Vec<Neighbor>],
    k: usize,
    rule: MatchRule,
) -> Result<RecallMeasurement> {
    rule.validate()?;
    if retrieved.len() != queries.n_frames() {
        return Err(Error::DimMismatch {
            expected: queries.n_frames(),
            actual: retrieved.len(),
        });
    }
    let translation = city_translation(queries, database);
    let mut eligible = 0u64;
    let mut hits = 0u64;
    for (q, list) in retrieved.iter().enumerate() {
        let answerable = (0..database.n_frames() as u32)
            .any(|db| is_match(rule, queries, database, &translation, q, db));
        if !answerable {
            continue;
        }
        eligible += 1;
        if list
            .iter()
            .take(k)
            .any(|n| is_match(rule, queries, database, &translation, q, n.index))
        {
            hits += 1;
        }
    }
    if eligible == 0 {
        return Err(Error::InvalidConfig(format!(
            "no query has a database frame satisfying {rule}"
        )));
    }
    Ok(RecallMeasurement {
        recall: hits as f64 / eligible as f64,
        hits,
        num_queries: eligible,
    })
}

/// Recall at `k` across a sweep of metric thresholds.
pub fn recall_vs_threshold<S: Scalar>(
    queries: &Dataset<S>,
    database: &Dataset<S>,
    retrieved: &[Vec<Neighbor>],
    k: usize,
    thresholds_m: &[f64],
) -> Result<Vec<(f64, RecallMeasurement)>> {
    thresholds_m
        .iter()
        .map(|&m| Ok((m, recall_at_k(queries, database, retrieved, k, MatchRule::Meters(m))?)))
        .collect()
}
