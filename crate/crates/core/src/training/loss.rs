//! Multi-similarity loss over a labeled batch of unit-norm embeddings.
//!
//! Pair selection works in distance form with strict inequalities: for an
//! anchor, a candidate negative is kept when it sits closer than the
//! hardest positive plus a margin, and a candidate positive when it sits
//! farther than the easiest negative minus the margin. Anchors without
//! same-label partners select no negatives, and anchors without
//! other-label partners select no positives.

use serde::{Deserialize, Serialize};

use crate::embedding::{desc_distance, dot, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Loss shape parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsParams {
    /// Sharpness of the positive term.
    pub alpha: f64,
    /// Sharpness of the negative term.
    pub beta: f64,
    /// Similarity offset inside both exponents.
    pub lambda: f64,
    /// Selection margin in distance units.
    pub epsilon: f64,
}

impl Default for MsParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 50.0,
            lambda: 0.5,
            epsilon: 0.1,
        }
    }
}

impl MsParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return fail(format!("alpha must be positive and finite, got {}", self.alpha));
        }
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return fail(format!("beta must be positive and finite, got {}", self.beta));
        }
        if !self.lambda.is_finite() {
            return fail(format!("lambda must be finite, got {}", self.lambda));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return fail(format!(
                "epsilon must be non-negative and finite, got {}",
                self.epsilon
            ));
        }
        Ok(())
    }
}

/// Which pairs each anchor contributes to the loss. Row i of either list
/// holds the partner row indices selected for anchor i.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSelection {
    pub positives: Vec<Vec<u32>>,
    pub negatives: Vec<Vec<u32>>,
}

impl PairSelection {
    pub fn n_positives(&self) -> usize {
        self.positives.iter().map(Vec::len).sum()
    }

    pub fn n_negatives(&self) -> usize {
        self.negatives.iter().map(Vec::len).sum()
    }
}

fn check_inputs<S: Scalar>(emb: &EmbeddingMatrix<S>, labels: &[u32]) -> Result<()> {
    if !emb.is_normalized() {
        return Err(Error::UnitNormRequired);
    }
    if labels.len() != emb.n() {
        return Err(Error::DimMismatch {
            expected: emb.n(),
            actual: labels.len(),
        });
    }
    Ok(())
}

/// Margin-based pair selection.
pub fn select_pairs<S: Scalar>(
    emb: &EmbeddingMatrix<S>,
    labels: &[u32],
    params: &MsParams,
) -> Result<PairSelection> {
    params.validate()?;
    check_inputs(emb, labels)?;
    let n = emb.n();
    let eps = S::of_f64(params.epsilon);
    let mut positives = Vec::with_capacity(n);
    let mut negatives = Vec::with_capacity(n);
    for i in 0..n {
        let xi = emb.row(i);
        let d: Vec<S> = (0..n).map(|j| desc_distance(xi, emb.row(j))).collect();
        let mut hardest_positive = S::neg_infinity();
        let mut easiest_negative = S::infinity();
        for j in 0..n {
            if j == i {
                continue;
            }
            if labels[j] == labels[i] {
                if d[j] > hardest_positive {
                    hardest_positive = d[j];
                }
            } else if d[j] < easiest_negative {
                easiest_negative = d[j];
            }
        }
        positives.push(
            (0..n)
                .filter(|&j| j != i && labels[j] == labels[i] && d[j] > easiest_negative - eps)
                .map(|j| j as u32)
                .collect(),
        );
        negatives.push(
            (0..n)
                .filter(|&j| labels[j] != labels[i] && d[j] < hardest_positive + eps)
                .map(|j| j as u32)
                .collect(),
        );
    }
    Ok(PairSelection {
        positives,
        negatives,
    })
}

/// The trivial selection: every same-label pair is a positive, every
/// other-label pair a negative. Used to train without pair mining.
pub fn select_all_pairs(labels: &[u32]) -> PairSelection {
    let n = labels.len();
    let mut positives = Vec::with_capacity(n);
    let mut negatives = Vec::with_capacity(n);
    for i in 0..n {
        positives.push(
            (0..n)
                .filter(|&j| j != i && labels[j] == labels[i])
                .map(|j| j as u32)
                .collect(),
        );
        negatives.push(
            (0..n)
                .filter(|&j| labels[j] != labels[i])
                .map(|j| j as u32)
                .collect(),
        );
    }
    PairSelection {
        positives,
        negatives,
    }
}

/// The smallest absolute margin between any candidate pair distance and its
/// selection threshold. Finite-difference probes are only trustworthy when
/// this slack dwarfs the probe step, since selection is piecewise constant.
pub fn selection_slack<S: Scalar>(
    emb: &EmbeddingMatrix<S>,
    labels: &[u32],
    params: &MsParams,
) -> Result<f64> {
    params.validate()?;
    check_inputs(emb, labels)?;
    let n = emb.n();
    let mut slack = f64::INFINITY;
    for i in 0..n {
        let xi = emb.row(i);
        let d: Vec<f64> = (0..n)
            .map(|j| desc_distance(xi, emb.row(j)).as_f64())
            .collect();
        let mut hardest_positive = f64::NEG_INFINITY;
        let mut easiest_negative = f64::INFINITY;
        for j in 0..n {
            if j == i {
                continue;
            }
            if labels[j] == labels[i] {
                hardest_positive = hardest_positive.max(d[j]);
            } else {
                easiest_negative = easiest_negative.min(d[j]);
            }
        }
        for j in 0..n {
            if j == i {
                continue;
            }
            if labels[j] == labels[i] && easiest_negative.is_finite() {
                slack = slack.min((d[j] - (easiest_negative - params.epsilon)).abs());
            }
            if labels[j] != labels[i] && hardest_positive.is_finite() {
                slack = slack.min((d[j] - (hardest_positive + params.epsilon)).abs());
            }
        }
    }
    Ok(slack)
}

/// Loss value and its gradient with respect to the embedding entries.
#[derive(Clone, Debug, PartialEq)]
pub struct MsEvaluation<S: Scalar> {
    pub loss: S,
    /// Row-major, same shape as the evaluated matrix.
    pub grad: Vec<S>,
    pub selected_positives: usize,
    pub selected_negatives: usize,
}

struct AnchorTerms<S: Scalar> {
    pos_den: S,
    neg_den: S,
    pos_exp: Vec<(usize, S)>,
    neg_exp: Vec<(usize, S)>,
}

fn anchor_terms<S: Scalar>(
    emb: &EmbeddingMatrix<S>,
    i: usize,
    selection: &PairSelection,
    params: &MsParams,
) -> AnchorTerms<S> {
    let alpha = S::of_f64(params.alpha);
    let beta = S::of_f64(params.beta);
    let lambda = S::of_f64(params.lambda);
    let xi = emb.row(i);
    let mut pos_exp = Vec::with_capacity(selection.positives[i].len());
    let mut pos_sum = S::zero();
    for &j in &selection.positives[i] {
        let s = dot(xi, emb.row(j as usize));
        let e = (-alpha * (s - lambda)).exp();
        pos_sum += e;
        pos_exp.push((j as usize, e));
    }
    let mut neg_exp = Vec::with_capacity(selection.negatives[i].len());
    let mut neg_sum = S::zero();
    for &j in &selection.negatives[i] {
        let s = dot(xi, emb.row(j as usize));
        let e = (beta * (s - lambda)).exp();
        neg_sum += e;
        neg_exp.push((j as usize, e));
    }
    AnchorTerms {
        pos_den: S::one() + pos_sum,
        neg_den: S::one() + neg_sum,
        pos_exp,
        neg_exp,
    }
}

fn check_selection<S: Scalar>(emb: &EmbeddingMatrix<S>, selection: &PairSelection) -> Result<()> {
    if !emb.is_normalized() {
        return Err(Error::UnitNormRequired);
    }
    if selection.positives.len() != emb.n() || selection.negatives.len() != emb.n() {
        return Err(Error::DimMismatch {
            expected: emb.n(),
            actual: selection.positives.len().min(selection.negatives.len()),
        });
    }
    Ok(())
}

/// Loss value under a fixed pair selection.
pub fn ms_loss_on<S: Scalar>(
    emb: &EmbeddingMatrix<S>,
    selection: &PairSelection,
    params: &MsParams,
) -> Result<S> {
    params.validate()?;
    check_selection(emb, selection)?;
    let n = emb.n();
    let alpha = S::of_f64(params.alpha);
    let beta = S::of_f64(params.beta);
    let inv_b = S::one() / S::of_f64(n as f64);
    let mut loss = S::zero();
    for i in 0..n {
        let terms = anchor_terms(emb, i, selection, params);
        loss += inv_b * (terms.pos_den.ln() / alpha + terms.neg_den.ln() / beta);
    }
    Ok(loss)
}

/// Loss value and gradient under a fixed pair selection. The selection is
/// treated as a constant of the batch, so the gradient is exact on the
/// smooth piece the batch lies in.
pub fn ms_grad_on<S: Scalar>(
    emb: &EmbeddingMatrix<S>,
    selection: &PairSelection,
    params: &MsParams,
) -> Result<MsEvaluation<S>> {
    params.validate()?;
    check_selection(emb, selection)?;
    let n = emb.n();
    let dim = emb.dim();
    let alpha = S::of_f64(params.alpha);
    let beta = S::of_f64(params.beta);
    let inv_b = S::one() / S::of_f64(n as f64);
    let mut loss = S::zero();
    let mut grad = vec![S::zero(); n * dim];
    for i in 0..n {
        let terms = anchor_terms(emb, i, selection, params);
        loss += inv_b * (terms.pos_den.ln() / alpha + terms.neg_den.ln() / beta);
        for &(j, e) in &terms.pos_exp {
            // d/ds of (1/alpha) ln(1 + sum exp(-alpha (s - lambda)))
            let coef = -inv_b * e / terms.pos_den;
            for t in 0..dim {
                grad[i * dim + t] += coef * emb.row(j)[t];
                grad[j * dim + t] += coef * emb.row(i)[t];
            }
        }
        for &(j, e) in &terms.neg_exp {
            let coef = inv_b * e / terms.neg_den;
            for t in 0..dim {
                grad[i * dim + t] += coef * emb.row(j)[t];
                grad[j * dim + t] += coef * emb.row(i)[t];
            }
        }
    }
    Ok(MsEvaluation {
        loss,
        grad,
        selected_positives: selection.n_positives(),
        selected_negatives: selection.n_negatives(),
    })
}

/// Selects pairs, then evaluates the loss.
pub fn ms_loss<S: Scalar>(
    emb: &EmbeddingMatrix<S>,
    labels: &[u32],
    params: &MsParams,
) -> Result<S> {
    let selection = select_pairs(emb, labels, params)?;
    ms_loss_on(emb, &selection, params)
}

/// Selects pairs, then evaluates the loss and its gradient.
pub fn ms_loss_grad<S: Scalar>(
    emb: &EmbeddingMatrix<S>,
    labels: &[u32],
    params: &MsParams,
) -> Result<MsEvaluation<S>> {
    let selection = select_pairs(emb, labels, params)?;
    ms_grad_on(emb, &selection, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, Stream};
    use rand::Rng;

    /// Unit 2-vectors at the given angles.
    fn ring(angles: &[f64]) -> EmbeddingMatrix<f64> {
        let values: Vec<f64> = angles.iter().flat_map(|a| [a.cos(), a.sin()]).collect();
        EmbeddingMatrix::from_values(angles.len(), 2, values)
            .unwrap()
            .assert_normalized()
            .unwrap()
    }

    /// Random unit rows with `groups` labels of `per_group` rows each.
    fn random_batch(seed: u64, groups: usize, per_group: usize, dim: usize) -> (EmbeddingMatrix<f64>, Vec<u32>) {
        let mut rng = derive_rng(seed, Stream::TrainInit, 77);
        let n = groups * per_group;
        let values: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut m = EmbeddingMatrix::from_values(n, dim, values).unwrap();
        m.normalize_rows().unwrap();
        let labels: Vec<u32> = (0..n).map(|i| (i / per_group) as u32).collect();
        (m, labels)
    }

    #[test]
    fn default_params_match_documented_values() {
        let p = MsParams::default();
        assert_eq!(p.alpha, 1.0);
        assert_eq!(p.beta, 50.0);
        assert_eq!(p.lambda, 0.5);
        assert_eq!(p.epsilon, 0.1);
    }

    #[test]
    fn selection_matches_hand_worked_fixture() {
        // Chord distances: d01 = 0.870, d02 = 0.959, d03 = 1.782,
        // d12 = 0.100, d13 = 1.210, d23 = 1.129. Labels pair (0,1) and
        // (2,3). With epsilon = 0.1 the margins work out to:
        //   anchor 0: P = {1}, N = {2}
        //   anchor 1: P = {0}, N = {2}
        //   anchor 2: P = {3}, N = {0, 1}
        //   anchor 3: P = {2}, N = {1}
        let emb = ring(&[0.0, 0.9, 1.0, 2.2]);
        let labels = vec![7, 7, 9, 9];
        let sel = select_pairs(&emb, &labels, &MsParams::default()).unwrap();
        assert_eq!(sel.positives, vec![vec![1], vec![0], vec![3], vec![2]]);
        assert_eq!(sel.negatives, vec![vec![2], vec![2], vec![0, 1], vec![1]]);
    }

    #[test]
    fn selection_matches_quadratic_reference() {
        let params = MsParams::default();
        for seed in 0..20u64 {
            let (emb, labels) = random_batch(seed, 4, 3, 6);
            let sel = select_pairs(&emb, &labels, &params).unwrap();
            let n = emb.n();
            for i in 0..n {
                let mut hardest_positive = f64::NEG_INFINITY;
                let mut easiest_negative = f64::INFINITY;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let d = desc_distance(emb.row(i), emb.row(j));
                    if labels[j] == labels[i] {
                        hardest_positive = hardest_positive.max(d);
                    } else {
                        easiest_negative = easiest_negative.min(d);
                    }
                }
                let expect_pos: Vec<u32> = (0..n)
                    .filter(|&j| {
                        j != i
                            && labels[j] == labels[i]
                            && desc_distance(emb.row(i), emb.row(j))
                                > easiest_negative - params.epsilon
                    })
                    .map(|j| j as u32)
                    .collect();
                let expect_neg: Vec<u32> = (0..n)
                    .filter(|&j| {
                        labels[j] != labels[i]
                            && desc_distance(emb.row(i), emb.row(j))
                                < hardest_positive + params.epsilon
                    })
                    .map(|j| j as u32)
                    .collect();
                assert_eq!(sel.positives[i], expect_pos, "seed {seed} anchor {i}");
                assert_eq!(sel.negatives[i], expect_neg, "seed {seed} anchor {i}");
            }
        }
    }

    #[test]
    fn lonely_labels_select_nothing() {
        // All rows share one label: no negatives exist, so no positives are
        // selected either, and the loss is exactly zero.
        let emb = ring(&[0.0, 0.4, 0.8, 1.2]);
        let labels = vec![3, 3, 3, 3];
        let sel = select_pairs(&emb, &labels, &MsParams::default()).unwrap();
        assert!(sel.positives.iter().all(Vec::is_empty));
        assert!(sel.negatives.iter().all(Vec::is_empty));
        assert_eq!(ms_loss(&emb, &labels, &MsParams::default()).unwrap(), 0.0);

        // All labels distinct: no positives exist, so no negatives are
        // selected either.
        let labels = vec![0, 1, 2, 3];
        let sel = select_pairs(&emb, &labels, &MsParams::default()).unwrap();
        assert!(sel.positives.iter().all(Vec::is_empty));
        assert!(sel.negatives.iter().all(Vec::is_empty));
        assert_eq!(ms_loss(&emb, &labels, &MsParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn widening_the_margin_grows_selections_monotonically() {
        let (emb, labels) = random_batch(5, 4, 3, 6);
        let mut prev_pos = 0;
        let mut prev_neg = 0;
        let mut prev: Option<PairSelection> = None;
        for eps in [0.0, 0.05, 0.1, 0.2, 0.4, 0.8] {
            let params = MsParams {
                epsilon: eps,
                ..MsParams::default()
            };
            let sel = select_pairs(&emb, &labels, &params).unwrap();
            assert!(sel.n_positives() >= prev_pos);
            assert!(sel.n_negatives() >= prev_neg);
            if let Some(prev) = &prev {
                for i in 0..emb.n() {
                    for j in &prev.positives[i] {
                        assert!(sel.positives[i].contains(j));
                    }
                    for j in &prev.negatives[i] {
                        assert!(sel.negatives[i].contains(j));
                    }
                }
            }
            prev_pos = sel.n_positives();
            prev_neg = sel.n_negatives();
            prev = Some(sel);
        }
    }

    #[test]
    fn loss_matches_direct_formula_on_fixture() {
        let angles = [0.0, 0.9, 1.0, 2.2];
        let emb = ring(&angles);
        let labels = vec![7, 7, 9, 9];
        let p = MsParams::default();
        let got = ms_loss(&emb, &labels, &p).unwrap();

        // Recompute from the frozen selection with raw angle arithmetic:
        // similarities are cosines of angle differences.
        let s = |a: usize, b: usize| (angles[a] - angles[b]).cos();
        let pos_term = |sim: f64| (1.0 + (-p.alpha * (sim - p.lambda)).exp()).ln() / p.alpha;
        let neg_term_1 = |sim: f64| 1.0 + (p.beta * (sim - p.lambda)).exp();
        let anchor0 = pos_term(s(0, 1)) + neg_term_1(s(0, 2)).ln() / p.beta;
        let anchor1 = pos_term(s(1, 0)) + neg_term_1(s(1, 2)).ln() / p.beta;
        let anchor2 = pos_term(s(2, 3))
            + (1.0 + (p.beta * (s(2, 0) - p.lambda)).exp() + (p.beta * (s(2, 1) - p.lambda)).exp())
                .ln()
                / p.beta;
        let anchor3 = pos_term(s(3, 2)) + neg_term_1(s(3, 1)).ln() / p.beta;
        let expected = (anchor0 + anchor1 + anchor2 + anchor3) / 4.0;
        assert!(
            (got - expected).abs() < 1e-12,
            "got {got}, expected {expected}"
        );
    }

    #[test]
    fn value_and_gradient_paths_agree_bitwise() {
        for seed in 0..10u64 {
            let (emb, labels) = random_batch(seed, 4, 3, 8);
            let p = MsParams::default();
            let value = ms_loss(&emb, &labels, &p).unwrap();
            let eval = ms_loss_grad(&emb, &labels, &p).unwrap();
            assert_eq!(value.to_bits(), eval.loss.to_bits(), "seed {seed}");
        }
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let p = MsParams::default();
        let h = 1e-6;
        let mut checked = 0;
        let mut seed = 0u64;
        while checked < 6 {
            seed += 1;
            let (emb, labels) = random_batch(seed, 4, 3, 5);
            // Selection boundaries are discontinuities; probe only batches
            // that keep a comfortable margin around every threshold.
            if selection_slack(&emb, &labels, &p).unwrap() < 1e-4 {
                continue;
            }
            let eval = ms_loss_grad(&emb, &labels, &p).unwrap();
            let mut fd = vec![0.0f64; emb.n() * emb.dim()];
            for idx in 0..fd.len() {
                let perturb = |delta: f64| -> f64 {
                    let mut vals = emb.values().to_vec();
                    vals[idx] += delta;
                    let mut m = EmbeddingMatrix::from_values(emb.n(), emb.dim(), vals).unwrap();
                    m.set_normalized_flag(true);
                    ms_loss(&m, &labels, &p).unwrap()
                };
                fd[idx] = (perturb(h) - perturb(-h)) / (2.0 * h);
            }
            let max_a = eval.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            let max_err = eval
                .grad
                .iter()
                .zip(&fd)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let max_fd = fd.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            let ratio = max_err / max_a.max(max_fd);
            assert!(ratio <= 1e-5, "seed {seed}: gradient error ratio {ratio}");
            checked += 1;
        }
    }

    #[test]
    fn loss_is_invariant_under_batch_permutation() {
        let (emb, labels) = random_batch(3, 4, 3, 6);
        let p = MsParams::default();
        let base = ms_loss(&emb, &labels, &p).unwrap();
        // A fixed permutation of the rows.
        let perm: Vec<usize> = vec![5, 0, 11, 3, 7, 1, 9, 2, 10, 4, 8, 6];
        let values: Vec<f64> = perm
            .iter()
            .flat_map(|&i| emb.row(i).to_vec())
            .collect();
        let mut m = EmbeddingMatrix::from_values(emb.n(), emb.dim(), values).unwrap();
        m.set_normalized_flag(true);
        let plabels: Vec<u32> = perm.iter().map(|&i| labels[i]).collect();
        let permuted = ms_loss(&m, &plabels, &p).unwrap();
        assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn duplicated_batches_stay_consistent() {
        let (emb, labels) = random_batch(8, 3, 3, 5);
        let doubled = emb.vstack(&emb).unwrap();
        let mut dlabels = labels.clone();
        dlabels.extend_from_slice(&labels);
        let p = MsParams::default();
        let value = ms_loss(&doubled, &dlabels, &p).unwrap();
        let eval = ms_loss_grad(&doubled, &dlabels, &p).unwrap();
        assert!(value.is_finite());
        assert_eq!(value.to_bits(), eval.loss.to_bits());
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let m = EmbeddingMatrix::from_values(2, 2, vec![3.0, 0.0, 0.0, 2.0]).unwrap();
        let labels = vec![0, 0];
        assert!(matches!(
            ms_loss(&m, &labels, &MsParams::default()).unwrap_err(),
            Error::UnitNormRequired
        ));
    }

    #[test]
    fn label_count_mismatch_is_rejected() {
        let emb = ring(&[0.0, 1.0]);
        assert!(matches!(
            ms_loss(&emb, &[1, 2, 3], &MsParams::default()).unwrap_err(),
            Error::DimMismatch {
                expected: 2,
                actual: 3
            }
        ));
    }

    #[test]
    fn all_pair_selection_covers_every_pair() {
        let labels = vec![1, 1, 2, 2, 2];
        let sel = select_all_pairs(&labels);
        assert_eq!(sel.positives[0], vec![1]);
        assert_eq!(sel.negatives[0], vec![2, 3, 4]);
        assert_eq!(sel.positives[4], vec![2, 3]);
        assert_eq!(sel.negatives[4], vec![0, 1]);
        // 2 + 6 ordered same-label pairs, 2 * 2 * 3 ordered cross pairs.
        assert_eq!(sel.n_positives(), 8);
        assert_eq!(sel.n_negatives(), 12);
    }
}
