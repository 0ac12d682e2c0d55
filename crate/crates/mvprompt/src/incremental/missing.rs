//! Missing-view simulation with exact per-view counts and total row coverage.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{streams, Rng};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MissingSummary {
    pub rate: f64,
    /// Exactly `round(rate * samples)` for every view.
    pub per_view_missing: Vec<usize>,
    pub target_per_view: usize,
    /// Victims skipped because removal would have stripped a row's last view;
    /// each skip moved the removal to the next candidate in rng order.
    pub repaired: usize,
}

/// Marks exactly `round(p * N)` instances missing in each view, never
/// removing a row's last remaining view, and zeroes the affected feature
/// rows. Views are processed in index order; within a view, victims are
/// drawn in rng-shuffled order and a victim that would lose its last view is
/// skipped in favor of the next candidate.
pub fn simulate_missing(dataset: &mut Dataset, p: f64, rng: &Rng) -> Result<MissingSummary> {
    if !p.is_finite() || !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!(
            "missing rate must lie in [0, 1), got {p}"
        )));
    }
    dataset.validate()?;
    let n = dataset.num_samples();
    let n_views = dataset.n_views();
    let target = (p * n as f64).round() as usize;

    // Aggregate feasibility: every row must keep >= 1 of its n_views slots,
    // so at most n * (n_views - 1) removals exist in total. This is the
    // n*(1-p) >= 1 coverage bound expressed in counts.
    if target * n_views > n * (n_views - 1) {
        return Err(Error::Config(format!(
            "missing rate {p} over {n_views} views cannot keep every sample observable \
             ({} removals requested, {} available)",
            target * n_views,
            n * (n_views - 1)
        )));
    }

    let mut m_rng = rng.stream(streams::MISSING);
    let mut repaired = 0usize;
    for v in 0..n_views {
        let mut order: Vec<usize> = (0..n).collect();
        m_rng.shuffle(&mut order);
        let mut removed = 0usize;
        for &i in &order {
            if removed == target {
                break;
            }
            if !dataset.indicators[i].is_observed(v) {
                continue;
            }
            if dataset.indicators[i].observed_count() == 1 {
                repaired += 1;
                continue;
            }
            dataset.indicators[i].set(v, false);
            removed += 1;
        }
        if removed < target {
            return Err(Error::Validation(format!(
                "view {v}: only {removed} of {target} removals possible without \
                 stripping some sample's last view"
            )));
        }
    }

    dataset.zero_missing_rows();
    let per_view_missing: Vec<usize> = (0..n_views)
        .map(|v| {
            dataset
                .indicators
                .iter()
                .filter(|m| !m.is_observed(v))
                .count()
        })
        .collect();
    Ok(MissingSummary {
        rate: p,
        per_view_missing,
        target_per_view: target,
        repaired,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_data, SynthSpec};

    fn complete(samples: usize, views: usize) -> Dataset {
        let spec = SynthSpec {
            samples,
            views,
            dims: vec![3],
            classes: 4,
            labels_per_sample: 1.5,
            cluster_separation: 1.0,
            train_frac: 0.6,
            val_frac: 0.2,
        };
        gen_data(&spec, &Rng::new(11)).unwrap()
    }

    #[test]
    fn zero_rate_changes_nothing() {
        let mut d = complete(30, 4);
        let before: Vec<f64> = d.features[0].data().to_vec();
        let summary = simulate_missing(&mut d, 0.0, &Rng::new(1)).unwrap();
        assert_eq!(summary.per_view_missing, vec![0; 4]);
        assert_eq!(d.features[0].data(), &before[..]);
        assert!(d.indicators.iter().all(|m| m.is_complete()));
    }

    #[test]
    fn counts_are_exact_and_coverage_total() {
        for &p in &[0.3, 0.5, 0.7] {
            for seed in 0..10 {
                let mut d = complete(200, 6);
                let summary = simulate_missing(&mut d, p, &Rng::new(seed)).unwrap();
                let target = (p * 200.0).round() as usize;
                assert_eq!(summary.per_view_missing, vec![target; 6], "p={p} seed={seed}");
                assert!(
                    d.indicators.iter().all(|m| m.any_observed()),
                    "p={p} seed={seed}: a row lost all views"
                );
            }
        }
    }

    #[test]
    fn missing_rows_are_zeroed() {
        let mut d = complete(50, 3);
        simulate_missing(&mut d, 0.4, &Rng::new(5)).unwrap();
        for i in 0..d.num_samples() {
            for v in 0..d.n_views() {
                if !d.indicators[i].is_observed(v) {
                    assert!(d.features[v].row(i).iter().all(|&x| x == 0.0));
                }
            }
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let mut a = complete(80, 4);
        let mut b = complete(80, 4);
        simulate_missing(&mut a, 0.5, &Rng::new(42)).unwrap();
        simulate_missing(&mut b, 0.5, &Rng::new(42)).unwrap();
        assert_eq!(a.indicators, b.indicators);
    }

    #[test]
    fn infeasible_rate_is_rejected() {
        // two views at p=0.6: 2*round(0.6*10)=12 removals, only 10 available
        let mut d = complete(10, 2);
        let err = simulate_missing(&mut d, 0.6, &Rng::new(0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn out_of_range_rate_is_rejected() {
        let mut d = complete(10, 3);
        assert!(simulate_missing(&mut d, 1.0, &Rng::new(0)).is_err());
        assert!(simulate_missing(&mut d, -0.1, &Rng::new(0)).is_err());
        assert!(simulate_missing(&mut d, f64::NAN, &Rng::new(0)).is_err());
    }

    #[test]
    fn repair_preserves_exact_counts_at_high_rate() {
        // p = 0.5 over 2 views forces repairs once early removals collide.
        let mut d = complete(40, 2);
        let summary = simulate_missing(&mut d, 0.5, &Rng::new(3)).unwrap();
        assert_eq!(summary.per_view_missing, vec![20, 20]);
        assert!(d.indicators.iter().all(|m| m.any_observed()));
    }
}
