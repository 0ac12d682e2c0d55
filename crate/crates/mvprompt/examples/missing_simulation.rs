//! Generates a synthetic multi-view dataset and knocks out views at a
//! controlled rate.
//!
//! The simulator removes exactly round(p * N) views per modality (never a
//! sample's last remaining view - those draws are repaired by moving to the
//! next candidate), zeroes the affected feature rows, and records what it
//! did. Every sample is guaranteed to keep at least one observed view.
//!
//! Run with: cargo run --example missing_simulation

use std::collections::BTreeMap;

use mvprompt::data::{gen_data, SynthSpec};
use mvprompt::incremental::simulate_missing;
use mvprompt::rng::Rng;

fn main() -> mvprompt::Result<()> {
    let spec = SynthSpec {
        samples: 1000,
        views: 6,
        dims: vec![20],
        classes: 12,
        labels_per_sample: 2.0,
        cluster_separation: 2.0,
        train_frac: 0.6,
        val_frac: 0.2,
    };
    let root = Rng::new(123);

    for p in [0.3, 0.5, 0.7] {
        let mut dataset = gen_data(&spec, &root)?;
        let summary = simulate_missing(&mut dataset, p, &root)?;

        println!("missing rate p = {p}");
        println!(
            "  per-view removed: {:?} (target {} each)",
            summary.per_view_missing, summary.target_per_view
        );
        println!("  repaired draws (would have orphaned a sample): {}", summary.repaired);

        let orphaned = dataset
            .indicators
            .iter()
            .filter(|m| !m.any_observed())
            .count();
        assert_eq!(orphaned, 0);

        // Zeroed feature rows follow the indicators exactly.
        for (v, feats) in dataset.features.iter().enumerate() {
            for (i, m) in dataset.indicators.iter().enumerate() {
                if !m.is_observed(v) {
                    assert!(feats.row(i).iter().all(|&x| x == 0.0));
                }
            }
        }

        let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
        for m in &dataset.indicators {
            *histogram.entry(m.observed_count()).or_default() += 1;
        }
        let shape: Vec<String> = histogram
            .iter()
            .map(|(k, v)| format!("{k} views x {v}"))
            .collect();
        println!("  observed-view histogram: {}", shape.join(", "));
        println!("  every sample keeps >= 1 view; zeroed rows match the indicators\n");
    }

    // The same seed reproduces the same pattern assignment bit for bit.
    let mut a = gen_data(&spec, &root)?;
    let mut b = gen_data(&spec, &root)?;
    simulate_missing(&mut a, 0.5, &root)?;
    simulate_missing(&mut b, 0.5, &root)?;
    assert_eq!(a.indicators, b.indicators);
    println!("same seed, same missing assignment: reproducible by construction");

    Ok(())
}
