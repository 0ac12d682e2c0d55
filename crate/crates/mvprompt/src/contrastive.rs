//! Contrastive structuring of the prompt bank over missing-view patterns.
//!
//! Two patterns are a positive pair when they share at least one observed
//! view and a negative pair when they share none. Positive pairs pull their
//! prompts together (squared distance), negative pairs push them apart up to
//! a margin:
//!
//! ```text
//! L = (1/|P|) sum_P ||p_i - p_j||^2
//!   + (1/|N|) sum_N max(0, alpha - ||p_i - p_j||)^2
//! ```
//!
//! Pair membership is decided by the sign of the learnable overlap score
//! s_ij = sum_v m_iv * sigmoid(w_v) * m_jv. Since sigmoid is strictly
//! positive, the sign (and therefore the pair sets and the loss above) does
//! not depend on w at all: the literal loss gives w an exactly zero
//! gradient. The weights only acquire gradient under the optional
//! s_ij-weighted positive term ([`dynamic_contrastive_loss_weighted`]).

use crate::bank::MissingPattern;
use crate::error::{shape_err, Error, Result};
use crate::linalg::{sigmoid_scalar, Matrix};
use crate::param::ParamTensor;

/// Learnable per-view weights, stored pre-sigmoid. Initialized to zero so
/// every view starts at weight 0.5.
#[derive(Clone, Debug)]
pub struct ViewWeights {
    pub raw: ParamTensor,
}

impl ViewWeights {
    pub fn new(n: usize) -> Self {
        ViewWeights {
            raw: ParamTensor::new("dcl.view_weights", Matrix::zeros(1, n), true),
        }
    }

    pub fn n_views(&self) -> usize {
        self.raw.value.cols()
    }

    pub fn sigmoid_values(&self) -> Vec<f64> {
        self.raw.value.data().iter().map(|&w| sigmoid_scalar(w)).collect()
    }
}

/// Index pairs (into a pattern list) that act as positives and negatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairSets {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

/// Weighted view overlap s_ij = sum_v m_iv * sigmoid(w_v) * m_jv.
/// Exactly zero when the patterns share no observed view.
pub fn overlap_score(a: &MissingPattern, b: &MissingPattern, w: &ViewWeights) -> Result<f64> {
    if a.n_views() != b.n_views() {
        return Err(shape_err(format!(
            "patterns disagree on view count: {} vs {}",
            a.n_views(),
            b.n_views()
        )));
    }
    if a.n_views() != w.n_views() {
        return Err(shape_err(format!(
            "view weights cover {} views, patterns have {}",
            w.n_views(),
            a.n_views()
        )));
    }
    let mut s = 0.0;
    for v in 0..a.n_views() {
        if a.is_observed(v) && b.is_observed(v) {
            s += sigmoid_scalar(w.raw.value.get(0, v));
        }
    }
    Ok(s)
}

/// Splits every unordered pattern pair (i < j) into positives (overlap
/// score > 0) and negatives (score 0). Patterns must be distinct and the
/// all-zero pattern is not allowed.
pub fn build_pairs(patterns: &[MissingPattern], w: &ViewWeights) -> Result<PairSets> {
    for (i, p) in patterns.iter().enumerate() {
        if !p.any_observed() {
            return Err(Error::Validation(format!(
                "pattern at position {i} observes no view"
            )));
        }
        for q in &patterns[i + 1..] {
            if p == q {
                return Err(Error::Validation(format!(
                    "duplicate pattern {p} in pair construction"
                )));
            }
        }
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for i in 0..patterns.len() {
        for j in i + 1..patterns.len() {
            if overlap_score(&patterns[i], &patterns[j], w)? > 0.0 {
                positives.push((i, j));
            } else {
                negatives.push((i, j));
            }
        }
    }
    Ok(PairSets {
        positives,
        negatives,
    })
}

/// Loss value plus gradients for the prompt columns and the view weights.
#[derive(Clone, Debug)]
pub struct ContrastiveOutput {
    pub loss: f64,
    pub positive_term: f64,
    pub negative_term: f64,
    /// d x P, column j = dL/d(prompt column j).
    pub prompt_grads: Matrix,
    /// 1 x n, exactly zero under the literal loss.
    pub weight_grads: Matrix,
}

fn check_inputs(prompts: &Matrix, pairs: &PairSets, alpha: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("margin alpha={alpha} must be > 0")));
    }
    if !prompts.all_finite() {
        return Err(Error::NonFinite("prompt matrix contains NaN or Inf".into()));
    }
    let p = prompts.cols();
    for &(i, j) in pairs.positives.iter().chain(&pairs.negatives) {
        if i >= p || j >= p {
            return Err(Error::Validation(format!(
                "pair ({i}, {j}) out of range for {p} prompt columns"
            )));
        }
    }
    Ok(())
}

fn column_diff(prompts: &Matrix, i: usize, j: usize) -> Vec<f64> {
    (0..prompts.rows())
        .map(|r| prompts.get(r, i) - prompts.get(r, j))
        .collect()
}

/// The literal contrastive loss over prompt columns. `n_views` sizes the
/// (identically zero) weight gradient. Empty pair sets contribute zero.
pub fn dynamic_contrastive_loss(
    prompts: &Matrix,
    pairs: &PairSets,
    alpha: f64,
    n_views: usize,
) -> Result<ContrastiveOutput> {
    check_inputs(prompts, pairs, alpha)?;
    let d = prompts.rows();
    let mut grads = Matrix::zeros(d, prompts.cols());

    let mut positive_term = 0.0;
    if !pairs.positives.is_empty() {
        let scale = 1.0 / pairs.positives.len() as f64;
        for &(i, j) in &pairs.positives {
            let diff = column_diff(prompts, i, j);
            let sq: f64 = diff.iter().map(|x| x * x).sum();
            positive_term += scale * sq;
            for (r, &x) in diff.iter().enumerate() {
                let g = 2.0 * scale * x;
                grads.set(r, i, grads.get(r, i) + g);
                grads.set(r, j, grads.get(r, j) - g);
            }
        }
    }

    let mut negative_term = 0.0;
    if !pairs.negatives.is_empty() {
        let scale = 1.0 / pairs.negatives.len() as f64;
        for &(i, j) in &pairs.negatives {
            let diff = column_diff(prompts, i, j);
            let dist = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
            let slack = alpha - dist;
            if slack > 0.0 {
                negative_term += scale * slack * slack;
                // Not differentiable at dist = 0; the coincident-prompt
                // subgradient is taken as zero.
                if dist > 0.0 {
                    let coef = -2.0 * scale * slack / dist;
                    for (r, &x) in diff.iter().enumerate() {
                        let g = coef * x;
                        grads.set(r, i, grads.get(r, i) + g);
                        grads.set(r, j, grads.get(r, j) - g);
                    }
                }
            }
        }
    }

    Ok(ContrastiveOutput {
        loss: positive_term + negative_term,
        positive_term,
        negative_term,
        prompt_grads: grads,
        weight_grads: Matrix::zeros(1, n_views),
    })
}

/// Variant with the positive term scaled by the overlap score s_ij, which
/// gives the view weights a nonzero gradient. Off by default; enabled by the
/// `weighted_positive_term` config key.
pub fn dynamic_contrastive_loss_weighted(
    prompts: &Matrix,
    pairs: &PairSets,
    alpha: f64,
    patterns: &[MissingPattern],
    w: &ViewWeights,
) -> Result<ContrastiveOutput> {
    check_inputs(prompts, pairs, alpha)?;
    if patterns.len() != prompts.cols() {
        return Err(shape_err(format!(
            "{} patterns vs {} prompt columns",
            patterns.len(),
            prompts.cols()
        )));
    }
    let n = w.n_views();
    let d = prompts.rows();
    let mut grads = Matrix::zeros(d, prompts.cols());
    let mut wgrads = Matrix::zeros(1, n);

    let mut positive_term = 0.0;
    if !pairs.positives.is_empty() {
        let scale = 1.0 / pairs.positives.len() as f64;
        for &(i, j) in &pairs.positives {
            let s = overlap_score(&patterns[i], &patterns[j], w)?;
            let diff = column_diff(prompts, i, j);
            let sq: f64 = diff.iter().map(|x| x * x).sum();
            positive_term += scale * s * sq;
            for (r, &x) in diff.iter().enumerate() {
                let g = 2.0 * scale * s * x;
                grads.set(r, i, grads.get(r, i) + g);
                grads.set(r, j, grads.get(r, j) - g);
            }
            for v in 0..n {
                if patterns[i].is_observed(v) && patterns[j].is_observed(v) {
                    let sv = sigmoid_scalar(w.raw.value.get(0, v));
                    wgrads.set(0, v, wgrads.get(0, v) + scale * sq * sv * (1.0 - sv));
                }
            }
        }
    }

    // The margin side is identical to the literal loss.
    let margin_only = dynamic_contrastive_loss(
        prompts,
        &PairSets {
            positives: Vec::new(),
            negatives: pairs.negatives.clone(),
        },
        alpha,
        n,
    )?;
    let negative_term = margin_only.negative_term;
    let mut prompt_grads = grads;
    prompt_grads.add_assign(&margin_only.prompt_grads)?;

    Ok(ContrastiveOutput {
        loss: positive_term + negative_term,
        positive_term,
        negative_term,
        prompt_grads,
        weight_grads: wgrads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{finite_diff_grad, max_rel_err};
    use crate::rng::Rng;

    fn pattern(bits: &[u8]) -> MissingPattern {
        MissingPattern::new(bits.iter().map(|&b| b == 1).collect())
    }

    #[test]
    fn overlap_scores_at_zero_weights() {
        let w = ViewWeights::new(3);
        let s = overlap_score(&pattern(&[1, 1, 0]), &pattern(&[0, 1, 1]), &w).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
        let full = pattern(&[1, 1, 1]);
        let s2 = overlap_score(&full, &full, &w).unwrap();
        assert!((s2 - 1.5).abs() < 1e-15);
        let s3 = overlap_score(&pattern(&[1, 0, 0]), &pattern(&[0, 1, 1]), &w).unwrap();
        assert_eq!(s3, 0.0);
    }

    #[test]
    fn two_view_pair_split() {
        let w = ViewWeights::new(2);
        let patterns = vec![pattern(&[1, 0]), pattern(&[0, 1]), pattern(&[1, 1])];
        let pairs = build_pairs(&patterns, &w).unwrap();
        assert_eq!(pairs.positives, vec![(0, 2), (1, 2)]);
        assert_eq!(pairs.negatives, vec![(0, 1)]);
    }

    #[test]
    fn three_view_full_domain_counts() {
        let w = ViewWeights::new(3);
        let patterns = MissingPattern::all_nonzero(3).unwrap();
        let pairs = build_pairs(&patterns, &w).unwrap();
        // Of the C(7,2) = 21 pairs, six share no view: the three
        // singleton-singleton pairs and the three singleton-complement
        // pairs {100,011}, {010,101}, {001,110}.
        assert_eq!(pairs.positives.len() + pairs.negatives.len(), 21);
        assert_eq!(pairs.negatives.len(), 6);
        assert_eq!(pairs.positives.len(), 15);
        let neg_indices: Vec<(usize, usize)> = pairs
            .negatives
            .iter()
            .map(|&(i, j)| (patterns[i].index(), patterns[j].index()))
            .collect();
        for complement_pair in [(1, 6), (2, 5), (3, 4)] {
            assert!(
                neg_indices.contains(&complement_pair),
                "missing complement pair {complement_pair:?}"
            );
        }
    }

    #[test]
    fn pair_membership_ignores_weight_values() {
        let patterns = MissingPattern::all_nonzero(4).unwrap();
        let zero = ViewWeights::new(4);
        let mut skewed = ViewWeights::new(4);
        skewed.raw.value = Matrix::row_vector(vec![-7.5, 3.0, 0.2, -111.0]);
        let a = build_pairs(&patterns, &zero).unwrap();
        let b = build_pairs(&patterns, &skewed).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicates_and_all_zero_rejected() {
        let w = ViewWeights::new(2);
        assert!(build_pairs(&[pattern(&[1, 0]), pattern(&[1, 0])], &w).is_err());
        assert!(build_pairs(&[pattern(&[0, 0]), pattern(&[1, 0])], &w).is_err());
    }

    #[test]
    fn identical_prompts_sharing_a_view_cost_nothing() {
        let prompts = Matrix::from_vec(2, 2, vec![0.3, 0.3, -1.0, -1.0]).unwrap();
        let pairs = PairSets {
            positives: vec![(0, 1)],
            negatives: vec![],
        };
        let out = dynamic_contrastive_loss(&prompts, &pairs, 1.0, 2).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.prompt_grads.max_abs(), 0.0);
    }

    #[test]
    fn coincident_disjoint_prompts_pay_full_margin() {
        let prompts = Matrix::from_vec(2, 2, vec![0.3, 0.3, -1.0, -1.0]).unwrap();
        let pairs = PairSets {
            positives: vec![],
            negatives: vec![(0, 1)],
        };
        let out = dynamic_contrastive_loss(&prompts, &pairs, 1.0, 2).unwrap();
        assert!((out.loss - 1.0).abs() < 1e-15);
    }

    #[test]
    fn far_negatives_are_free() {
        let prompts = Matrix::from_vec(1, 2, vec![0.0, 5.0]).unwrap();
        let pairs = PairSets {
            positives: vec![],
            negatives: vec![(0, 1)],
        };
        let out = dynamic_contrastive_loss(&prompts, &pairs, 1.0, 1).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn empty_pair_sets_give_zero() {
        let prompts = Matrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let pairs = PairSets {
            positives: vec![],
            negatives: vec![],
        };
        let out = dynamic_contrastive_loss(&prompts, &pairs, 0.7, 2).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn rejects_bad_margin_and_nonfinite_prompts() {
        let prompts = Matrix::from_vec(1, 2, vec![0.0, 1.0]).unwrap();
        let pairs = PairSets {
            positives: vec![(0, 1)],
            negatives: vec![],
        };
        assert!(dynamic_contrastive_loss(&prompts, &pairs, 0.0, 1).is_err());
        let bad = Matrix::from_vec(1, 2, vec![f64::NAN, 1.0]).unwrap();
        assert!(matches!(
            dynamic_contrastive_loss(&bad, &pairs, 1.0, 1),
            Err(Error::NonFinite(_))
        ));
    }

    fn random_prompts(rng: &mut Rng, d: usize, p: usize) -> Matrix {
        Matrix::from_fn(d, p, |_, _| rng.uniform(-0.6, 0.6))
    }

    #[test]
    fn literal_gradients_match_finite_differences() {
        let mut rng = Rng::new(31);
        let patterns = MissingPattern::all_nonzero(3).unwrap();
        let w = ViewWeights::new(3);
        let pairs = build_pairs(&patterns, &w).unwrap();
        let prompts = random_prompts(&mut rng, 4, patterns.len());

        let out = dynamic_contrastive_loss(&prompts, &pairs, 1.0, 3).unwrap();
        let fd = finite_diff_grad(
            |probe| {
                dynamic_contrastive_loss(probe, &pairs, 1.0, 3)
                    .unwrap()
                    .loss
            },
            &prompts,
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(&out.prompt_grads, &fd, 1e-8) <= 1e-6);
        assert_eq!(out.weight_grads.max_abs(), 0.0);
    }

    #[test]
    fn literal_loss_is_flat_in_view_weights() {
        let mut rng = Rng::new(32);
        let patterns = MissingPattern::all_nonzero(3).unwrap();
        let prompts = random_prompts(&mut rng, 4, patterns.len());
        let mut w = ViewWeights::new(3);
        let base_pairs = build_pairs(&patterns, &w).unwrap();
        let base = dynamic_contrastive_loss(&prompts, &base_pairs, 1.0, 3)
            .unwrap()
            .loss;
        w.raw.value = Matrix::row_vector(vec![2.0, -3.0, 0.4]);
        let moved_pairs = build_pairs(&patterns, &w).unwrap();
        let moved = dynamic_contrastive_loss(&prompts, &moved_pairs, 1.0, 3)
            .unwrap()
            .loss;
        assert_eq!(base, moved);
    }

    #[test]
    fn weighted_gradients_match_finite_differences() {
        let mut rng = Rng::new(33);
        let patterns = MissingPattern::all_nonzero(3).unwrap();
        let mut w = ViewWeights::new(3);
        w.raw.value = Matrix::row_vector(vec![0.3, -0.8, 1.1]);
        let pairs = build_pairs(&patterns, &w).unwrap();
        let prompts = random_prompts(&mut rng, 4, patterns.len());

        let out =
            dynamic_contrastive_loss_weighted(&prompts, &pairs, 1.0, &patterns, &w).unwrap();

        let fd_prompts = finite_diff_grad(
            |probe| {
                dynamic_contrastive_loss_weighted(probe, &pairs, 1.0, &patterns, &w)
                    .unwrap()
                    .loss
            },
            &prompts,
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(&out.prompt_grads, &fd_prompts, 1e-8) <= 1e-6);

        let fd_w = finite_diff_grad(
            |probe| {
                let mut w2 = ViewWeights::new(3);
                w2.raw.value = probe.clone();
                dynamic_contrastive_loss_weighted(&prompts, &pairs, 1.0, &patterns, &w2)
                    .unwrap()
                    .loss
            },
            &w.raw.value,
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(&out.weight_grads, &fd_w, 1e-8) <= 1e-6);
        assert!(out.weight_grads.max_abs() > 0.0, "weighted path must move w");
    }
}
