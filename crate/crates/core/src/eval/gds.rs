//! Geographic distance sensitivity diagnostics.
//!
//! These statistics ask how strongly descriptor distance tracks geographic
//! distance at street scale. [`gds_profile`] bins same-city frame pairs by
//! their metric separation and accumulates descriptor-distance moments per
//! bin; a sensitive embedding shows a steep, low-variance rise over the first
//! tens of meters. [`ordering_probability`] boils the same question down to
//! one number: how often two places at different distances from an anchor
//! are ranked in the right order.

use rand::Rng;

use crate::dataset::Dataset;
use crate::embedding::{desc_distance, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::geo::geo_distance;
use crate::rng::{derive_rng, Stream};
use crate::scalar::Scalar;

/// Geographic distance bin edges, in meters.
///
/// Edges must be finite, non-negative, and strictly increasing; `m + 1`
/// edges define `m` half-open bins `[e_i, e_{i+1})` plus one tail bin
/// aggregating everything from the last edge up. Pairs below the first edge
/// are not counted (with the default edges nothing falls there).
#[derive(Clone, Debug, PartialEq)]
pub struct GdsBins {
    edges: Vec<f64>,
}

impl GdsBins {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidConfig(
                "need at least two bin edges".into(),
            ));
        }
        if edges.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::InvalidConfig(
                "bin edges must be finite and non-negative".into(),
            ));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "bin edges must be strictly increasing".into(),
            ));
        }
        Ok(Self { edges })
    }

    /// 5 m bins from 0 to 100 m, the range street-level retrieval cares
    /// about, with the tail catching everything farther.
    pub fn street_default() -> Self {
        Self {
            edges: (0..=20).map(|i| 5.0 * f64::from(i)).collect(),
        }
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Number of bins including the tail.
    pub fn n_bins(&self) -> usize {
        self.edges.len()
    }

    /// Bin index for a geographic distance; the last index is the tail,
    /// `None` means below the first edge.
    fn locate(&self, g: f64) -> Option<usize> {
        if g < self.edges[0] {
            return None;
        }
        if g >= self.edges[self.edges.len() - 1] {
            return Some(self.edges.len() - 1);
        }
        // partition_point gives the first edge > g; the bin is one left.
        Some(self.edges.partition_point(|&e| e <= g) - 1)
    }

    fn bounds(&self, i: usize) -> (f64, f64) {
        if i == self.edges.len() - 1 {
            (self.edges[i], f64::INFINITY)
        } else {
            (self.edges[i], self.edges[i + 1])
        }
    }
}

/// Descriptor-distance statistics of one geographic bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GdsBin {
    pub lo: f64,
    /// Upper edge; infinite for the tail bin.
    pub hi: f64,
    pub count: u64,
    /// Mean descriptor distance; 0 when the bin is empty.
    pub mean: f64,
    /// Sample standard deviation; 0 below two observations.
    pub std: f64,
}

impl GdsBin {
    /// Bin midpoint; infinite for the tail bin.
    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_tail(&self) -> bool {
        self.hi.is_infinite()
    }
}

/// Binned relation between geographic and descriptor distance.
#[derive(Clone, Debug, PartialEq)]
pub struct GdsProfile {
    pub bins: Vec<GdsBin>,
}

impl GdsProfile {
    /// Least-squares slope of mean descriptor distance against bin center,
    /// over non-empty bins with center in `(lo, hi]`. Needs two such bins.
    pub fn slope(&self, lo: f64, hi: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .bins
            .iter()
            .filter(|b| b.count > 0 && b.center() > lo && b.center() <= hi)
            .map(|b| (b.center(), b.mean))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Some(sxy / sxx)
    }

    /// Mean of per-bin standard deviations over bins with at least two
    /// observations and center in `(lo, hi]`.
    pub fn mean_std(&self, lo: f64, hi: f64) -> Option<f64> {
        let stds: Vec<f64> = self
            .bins
            .iter()
            .filter(|b| b.count >= 2 && b.center() > lo && b.center() <= hi)
            .map(|b| b.std)
            .collect();
        if stds.is_empty() {
            return None;
        }
        Some(stds.iter().sum::<f64>() / stds.len() as f64)
    }
}

/// How pairs enter the profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PairSampling {
    /// Every unordered same-city pair once.
    Exhaustive,
    /// Up to `pairs` uniform draws from the same-city pairs, one generator
    /// per draw index, so the estimate is independent of evaluation order.
    /// A budget covering every pair falls back to the exhaustive scan.
    Sampled { pairs: u64, seed: u64 },
}

/// Streaming mean and variance.
#[derive(Clone, Copy, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    fn finish(self, lo: f64, hi: f64) -> GdsBin {
        GdsBin {
            lo,
            hi,
            count: self.count,
            mean: if self.count > 0 { self.mean } else { 0.0 },
            std: if self.count >= 2 {
                (self.m2 / (self.count - 1) as f64).sqrt()
            } else {
                0.0
            },
        }
    }
}

fn frames_by_city<S: Scalar>(ds: &Dataset<S>) -> Vec<Vec<u64>> {
    (0..ds.cities().len() as u32)
        .map(|c| {
            ds.city_sequences(c)
                .iter()
                .flat_map(|&s| ds.sequence(s).frame_ids.iter().copied())
                .collect()
        })
        .collect()
}

fn check_descriptor_rows<S: Scalar>(ds: &Dataset<S>, emb: &EmbeddingMatrix<S>) -> Result<()> {
    if emb.n() != ds.n_frames() {
        return Err(Error::DimMismatch {
            expected: ds.n_frames(),
            actual: emb.n(),
        });
    }
    Ok(())
}

/// Profiles descriptor distance against geographic distance over same-city
/// pairs. `descriptors` supplies one row per dataset frame; pass the
/// dataset's own matrix to profile the raw descriptors or a re-embedded
/// matrix to profile a trained space.
pub fn gds_profile<S: Scalar>(
    ds: &Dataset<S>,
    descriptors: &EmbeddingMatrix<S>,
    bins: &GdsBins,
    sampling: PairSampling,
) -> Result<GdsProfile> {
    check_descriptor_rows(ds, descriptors)?;
    let cities = frames_by_city(ds);
    let total_pairs: u64 = cities
        .iter()
        .map(|f| f.len() as u64 * (f.len() as u64).saturating_sub(1) / 2)
        .sum();
    let mut acc = vec![Welford::default(); bins.n_bins()];
    let mut observe = |a: u64, b: u64| {
        let g = geo_distance(ds.position(a), ds.position(b));
        if let Some(i) = bins.locate(g) {
            let d = desc_distance(
                descriptors.row(a as usize),
                descriptors.row(b as usize),
            );
            acc[i].push(d.as_f64());
        }
    };
    let exhaustive = match sampling {
        PairSampling::Exhaustive => true,
        PairSampling::Sampled { pairs, .. } => {
            if pairs == 0 {
                return Err(Error::InvalidConfig(
                    "pair budget must be at least 1".into(),
                ));
            }
            if total_pairs == 0 {
                return Err(Error::InvalidConfig(
                    "no city has two frames to pair".into(),
                ));
            }
            pairs >= total_pairs
        }
    };
    if exhaustive {
        for frames in &cities {
            for (i, &a) in frames.iter().enumerate() {
                for &b in &frames[i + 1..] {
                    observe(a, b);
                }
            }
        }
    } else if let PairSampling::Sampled { pairs, seed } = sampling {
        let n = ds.n_frames() as u64;
        for t in 0..pairs {
            let mut rng = derive_rng(seed, Stream::GdsPair, t);
            let (a, b) = loop {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a == b {
                    continue;
                }
                let ca = ds.sequence(ds.frame(a).seq).city;
                let cb = ds.sequence(ds.frame(b).seq).city;
                if ca == cb {
                    break (a, b);
                }
            };
            observe(a, b);
        }
    }
    let bins_out = acc
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            let (lo, hi) = bins.bounds(i);
            w.finish(lo, hi)
        })
        .collect();
    Ok(GdsProfile { bins: bins_out })
}

/// Monte Carlo estimate of an order statistic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderingEstimate {
    /// Probability that the geographically nearer of two same-city frames
    /// is also the nearer in descriptor space; descriptor ties score half.
    pub estimate: f64,
    /// Binomial standard error of the estimate.
    pub stderr: f64,
    pub trials: u64,
}

/// Estimates how often descriptor distance ranks two same-city frames in
/// the same order as geographic distance, over random anchored triples.
///
/// Each trial draws an anchor and two distinct same-city companions at
/// different geographic distances (equidistant draws are rejected), and
/// succeeds when the geographically nearer one is nearer in descriptor
/// space. An uninformative embedding scores 0.5, a perfectly
/// distance-monotone one scores 1.0.
pub fn ordering_probability<S: Scalar>(
    ds: &Dataset<S>,
    descriptors: &EmbeddingMatrix<S>,
    trials: u64,
    seed: u64,
) -> Result<OrderingEstimate> {
    check_descriptor_rows(ds, descriptors)?;
    if trials == 0 {
        return Err(Error::InvalidConfig("need at least one trial".into()));
    }
    let cities = frames_by_city(ds);
    if !cities.iter().any(|f| f.len() >= 3) {
        return Err(Error::InvalidConfig(
            "no city has three frames to form an ordering triple".into(),
        ));
    }
    const MAX_ATTEMPTS: u32 = 1000;
    let mut score = 0.0f64;
    for t in 0..trials {
        let mut rng = derive_rng(seed, Stream::OrderingTrial, t);
        let mut attempts = 0u32;
        let (a, near, far) = loop {
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(Error::InvalidConfig(format!(
                    "trial {t}: no geographically distinguishable triple in \
                     {MAX_ATTEMPTS} draws"
                )));
            }
            let a = rng.random_range(0..ds.n_frames() as u64);
            let frames = &cities[ds.sequence(ds.frame(a).seq).city as usize];
            if frames.len() < 3 {
                continue;
            }
            let b = frames[rng.random_range(0..frames.len())];
            let c = frames[rng.random_range(0..frames.len())];
            if b == a || c == a || b == c {
                continue;
            }
            let gb = geo_distance(ds.position(a), ds.position(b));
            let gc = geo_distance(ds.position(a), ds.position(c));
            if gb == gc {
                continue;
            }
            if gb < gc {
                break (a, b, c);
            }
            break (a, c, b);
        };
        let dn = desc_distance(descriptors.row(a as usize), descriptors.row(near as usize));
        let df = desc_distance(descriptors.row(a as usize), descriptors.row(far as usize));
        score += match dn.partial_cmp(&df).expect("descriptor distances are finite") {
            std::cmp::Ordering::Less => 1.0,
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Greater => 0.0,
        };
    }
    let estimate = score / trials as f64;
    Ok(OrderingEstimate {
        estimate,
        stderr: (estimate * (1.0 - estimate) / trials as f64).sqrt(),
        trials,
    })
}
