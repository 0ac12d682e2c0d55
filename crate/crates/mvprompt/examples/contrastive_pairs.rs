//! Shows how the pattern-level contrastive loss partitions pattern pairs and
//! what it optimizes.
//!
//! Two missing patterns are a positive pair when they share at least one
//! observed view (their learned-weight overlap score is positive) and a
//! negative pair when their observed sets are disjoint (score exactly zero).
//! The loss pulls positive-pair prompts together and pushes negative-pair
//! prompts at least a margin alpha apart.
//!
//! Run with: cargo run --example contrastive_pairs

use mvprompt::bank::{MissingPattern, TensorTrainBank};
use mvprompt::contrastive::{
    build_pairs, dynamic_contrastive_loss, overlap_score, ViewWeights,
};
use mvprompt::linalg::Matrix;
use mvprompt::rng::Rng;

fn main() -> mvprompt::Result<()> {
    let n = 3;
    let patterns = MissingPattern::all_nonzero(n)?;
    let weights = ViewWeights::new(n);

    let pairs = build_pairs(&patterns, &weights)?;
    println!(
        "{} patterns over {n} views -> {} pairs: {} positive, {} negative\n",
        patterns.len(),
        pairs.positives.len() + pairs.negatives.len(),
        pairs.positives.len(),
        pairs.negatives.len()
    );

    println!("negative pairs (observed sets disjoint, overlap exactly 0):");
    for &(i, j) in &pairs.negatives {
        let s = overlap_score(&patterns[i], &patterns[j], &weights)?;
        println!("  {} | {}   overlap = {s}", patterns[i], patterns[j]);
    }

    println!("\na few positive pairs (share >= 1 observed view):");
    for &(i, j) in pairs.positives.iter().take(4) {
        let s = overlap_score(&patterns[i], &patterns[j], &weights)?;
        println!("  {} & {}   overlap = {s:.4}", patterns[i], patterns[j]);
    }

    // The pair partition depends only on which overlaps are zero, so any
    // positive view weighting yields the same split.
    let mut shifted = ViewWeights::new(n);
    for x in shifted.raw.value.data_mut() {
        *x = 2.5;
    }
    let again = build_pairs(&patterns, &shifted)?;
    assert_eq!(pairs.positives, again.positives);
    assert_eq!(pairs.negatives, again.negatives);
    println!("\nreweighting views leaves the positive/negative split unchanged");

    // Loss behaviour on two extreme prompt sets. Identical prompts have zero
    // positive cost but pay the full margin on every negative pair; spread
    // prompts do the opposite.
    let alpha = 1.0;
    let d = 16;
    let identical = Matrix::from_fn(d, patterns.len(), |r, _| (r as f64).sin());
    let same = dynamic_contrastive_loss(&identical, &pairs, alpha, n)?;
    println!(
        "\nidentical prompts:  loss = {:.4} (all from the {}-pair negative margin)",
        same.loss,
        pairs.negatives.len()
    );

    let mut rng = Rng::new(11);
    let bank = TensorTrainBank::with_uniform_rank(n, d, 4, 2, &mut rng)?;
    let columns: Vec<Vec<f64>> = patterns
        .iter()
        .map(|p| bank.prompt_for_pattern(p))
        .collect::<mvprompt::Result<_>>()?;
    let bank_prompts = Matrix::from_fn(d, patterns.len(), |r, c| columns[c][r]);
    let at_init = dynamic_contrastive_loss(&bank_prompts, &pairs, alpha, n)?;
    println!(
        "freshly initialized bank:  loss = {:.4} (prompts start near zero, so the\n\
         \u{20}                                    margin term dominates exactly like above)",
        at_init.loss
    );

    let spread = Matrix::from_fn(d, patterns.len(), |_, _| rng.normal());
    let random = dynamic_contrastive_loss(&spread, &pairs, alpha, n)?;
    println!(
        "spread random prompts:     loss = {:.4} (positive {:.4} + negative {:.4})",
        random.loss, random.positive_term, random.negative_term
    );

    // The returned gradient has one column per pattern; stepping against it
    // lowers the loss, which is how the bank cores learn pattern geometry.
    let mut nudged = spread.clone();
    let step = 0.05;
    for r in 0..nudged.rows() {
        for c in 0..nudged.cols() {
            nudged.set(r, c, nudged.get(r, c) - step * random.prompt_grads.get(r, c));
        }
    }
    let after = dynamic_contrastive_loss(&nudged, &pairs, alpha, n)?;
    println!(
        "after one gradient step on the prompts: {:.4} -> {:.4}",
        random.loss, after.loss
    );
    assert!(after.loss < random.loss);

    Ok(())
}
