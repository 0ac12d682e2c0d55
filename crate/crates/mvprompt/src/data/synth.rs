//! Synthetic multi-view multi-label data with controllable class separation.
//!
//! Each (class, view) pair gets a Gaussian centroid scaled by
//! `cluster_separation / 2`. A sample's view features are the mean of the
//! centroids of its positive classes plus unit-variance noise, so larger
//! separation widens the gap between label sets relative to the noise floor.

use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::bank::MissingPattern;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{streams, Rng};

fn default_train_frac() -> f64 {
    0.6
}

fn default_val_frac() -> f64 {
    0.2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthSpec {
    pub samples: usize,
    pub views: usize,
    /// Per-view feature widths; a single entry is broadcast to every view.
    pub dims: Vec<usize>,
    pub classes: usize,
    /// Mean number of positive labels per sample. Fractional part is a
    /// Bernoulli coin for one extra label; every sample keeps at least one.
    pub labels_per_sample: f64,
    /// Centroid scale relative to unit noise; higher separates classes more.
    pub cluster_separation: f64,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default = "default_val_frac")]
    pub val_frac: f64,
}

impl SynthSpec {
    /// Per-view widths with the single-entry broadcast resolved.
    pub fn view_dims(&self) -> Result<Vec<usize>> {
        if self.dims.len() == self.views {
            Ok(self.dims.clone())
        } else if self.dims.len() == 1 && self.views >= 1 {
            Ok(vec![self.dims[0]; self.views])
        } else {
            Err(Error::Config(format!(
                "dims has {} entries for {} views (give one per view or a single broadcast value)",
                self.dims.len(),
                self.views
            )))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.views == 0 {
            return Err(Error::Config("views must be positive".into()));
        }
        let dims = self.view_dims()?;
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("dims entries must be positive".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be positive".into()));
        }
        if self.classes == 0 {
            return Err(Error::Config("classes must be positive".into()));
        }
        if !self.labels_per_sample.is_finite()
            || self.labels_per_sample < 1.0
            || self.labels_per_sample > self.classes as f64
        {
            return Err(Error::Config(format!(
                "labels_per_sample must lie in [1, {}], got {}",
                self.classes, self.labels_per_sample
            )));
        }
        if !self.cluster_separation.is_finite() || self.cluster_separation < 0.0 {
            return Err(Error::Config(format!(
                "cluster_separation must be finite and non-negative, got {}",
                self.cluster_separation
            )));
        }
        for (name, f) in [("train_frac", self.train_frac), ("val_frac", self.val_frac)] {
            if !f.is_finite() || !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {f}")));
            }
        }
        if self.train_frac + self.val_frac > 1.0 + 1e-12 {
            return Err(Error::Config(format!(
                "train_frac + val_frac = {} exceeds 1",
                self.train_frac + self.val_frac
            )));
        }
        Ok(())
    }
}

/// Generates a fully observed dataset from `spec`, deterministic in the seed
/// behind `rng`. Missing views are simulated separately.
pub fn gen_data(spec: &SynthSpec, rng: &Rng) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.samples;
    let c = spec.classes;
    let view_dims = spec.view_dims()?;
    let n_views = spec.views;

    let mut proto_rng = rng.substream(streams::DATA, 0);
    let mut label_rng = rng.substream(streams::DATA, 1);
    let mut noise_rng = rng.substream(streams::DATA, 2);
    let mut split_rng = rng.substream(streams::DATA, 3);

    let scale = spec.cluster_separation / 2.0;
    let centroids: Vec<Matrix> = view_dims
        .iter()
        .map(|&d| Matrix::from_fn(c, d, |_, _| scale * proto_rng.normal()))
        .collect();

    let base = spec.labels_per_sample.floor() as usize;
    let extra_p = spec.labels_per_sample - base as f64;
    let mut labels = Matrix::zeros(n, c);
    let mut positives: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut k = base;
        if extra_p > 0.0 && label_rng.next_f64() < extra_p {
            k += 1;
        }
        let k = k.clamp(1, c);
        let picks = label_rng.sample_indices(c, k);
        for &class in &picks {
            labels.set(i, class, 1.0);
        }
        positives.push(picks);
    }

    let mut features: Vec<Matrix> = view_dims.iter().map(|&d| Matrix::zeros(n, d)).collect();
    for i in 0..n {
        let inv = 1.0 / positives[i].len() as f64;
        for (v, f) in features.iter_mut().enumerate() {
            let row = f.row_mut(i);
            for &class in &positives[i] {
                let proto = centroids[v].row(class);
                for (x, p) in row.iter_mut().zip(proto) {
                    *x += inv * p;
                }
            }
            for x in row.iter_mut() {
                *x += noise_rng.normal();
            }
        }
    }

    let n_train = (spec.train_frac * n as f64).round() as usize;
    let n_val = (spec.val_frac * n as f64).round() as usize;
    if n_train + n_val > n {
        return Err(Error::Config(format!(
            "split rounding assigns {} of {n} samples to train+val",
            n_train + n_val
        )));
    }
    let mut splits = Vec::with_capacity(n);
    splits.resize(n_train, Split::Train);
    splits.resize(n_train + n_val, Split::Val);
    splits.resize(n, Split::Test);
    split_rng.shuffle(&mut splits);

    let dataset = Dataset {
        view_dims,
        features,
        labels,
        indicators: (0..n)
            .map(|_| MissingPattern::new(vec![true; n_views]))
            .collect(),
        splits,
    };
    dataset.validate()?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec {
            samples: 40,
            views: 3,
            dims: vec![3, 5, 2],
            classes: 6,
            labels_per_sample: 2.5,
            cluster_separation: 2.0,
            train_frac: 0.5,
            val_frac: 0.25,
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = gen_data(&spec(), &Rng::new(9)).unwrap();
        let b = gen_data(&spec(), &Rng::new(9)).unwrap();
        for v in 0..3 {
            assert_eq!(a.features[v].data(), b.features[v].data());
        }
        assert_eq!(a.labels.data(), b.labels.data());
        assert_eq!(a.splits, b.splits);
    }

    #[test]
    fn different_seeds_differ() {
        let a = gen_data(&spec(), &Rng::new(9)).unwrap();
        let b = gen_data(&spec(), &Rng::new(10)).unwrap();
        assert_ne!(a.features[0].data(), b.features[0].data());
    }

    #[test]
    fn single_dim_broadcasts_to_all_views() {
        let mut s = spec();
        s.dims = vec![4];
        let d = gen_data(&s, &Rng::new(1)).unwrap();
        assert_eq!(d.view_dims, vec![4, 4, 4]);
    }

    #[test]
    fn every_sample_has_a_label() {
        let d = gen_data(&spec(), &Rng::new(1)).unwrap();
        for i in 0..d.num_samples() {
            let row_sum: f64 = (0..d.num_classes()).map(|c| d.labels.get(i, c)).sum();
            assert!(row_sum >= 1.0, "sample {i} has no labels");
        }
    }

    #[test]
    fn label_count_hits_expected_mean() {
        let mut s = spec();
        s.samples = 4000;
        let d = gen_data(&s, &Rng::new(3)).unwrap();
        let mean = d.labels.sum() / s.samples as f64;
        assert!((mean - 2.5).abs() < 0.1, "mean labels {mean}");
    }

    #[test]
    fn split_counts_match_fractions() {
        let d = gen_data(&spec(), &Rng::new(2)).unwrap();
        assert_eq!(d.indices_of(Split::Train).len(), 20);
        assert_eq!(d.indices_of(Split::Val).len(), 10);
        assert_eq!(d.indices_of(Split::Test).len(), 10);
    }

    #[test]
    fn all_views_initially_observed() {
        let d = gen_data(&spec(), &Rng::new(2)).unwrap();
        assert!(d.indicators.iter().all(|m| m.is_complete()));
    }

    #[test]
    fn separation_widens_class_gap() {
        let mut near = spec();
        near.cluster_separation = 0.1;
        let mut far = spec();
        far.cluster_separation = 8.0;
        let gap = |s: &SynthSpec| {
            let d = gen_data(s, &Rng::new(4)).unwrap();
            // mean pairwise feature distance between samples with disjoint labels
            let mut total = 0.0;
            let mut count = 0usize;
            for i in 0..d.num_samples() {
                for j in (i + 1)..d.num_samples() {
                    let disjoint = (0..d.num_classes())
                        .all(|k| d.labels.get(i, k) * d.labels.get(j, k) == 0.0);
                    if !disjoint {
                        continue;
                    }
                    let mut dist = 0.0;
                    for v in 0..d.n_views() {
                        for (a, b) in d.features[v].row(i).iter().zip(d.features[v].row(j)) {
                            dist += (a - b) * (a - b);
                        }
                    }
                    total += dist.sqrt();
                    count += 1;
                }
            }
            total / count as f64
        };
        assert!(gap(&far) > gap(&near) + 1.0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = spec();
        s.labels_per_sample = 0.2;
        assert!(gen_data(&s, &Rng::new(0)).is_err());
        let mut s = spec();
        s.train_frac = 0.9;
        s.val_frac = 0.3;
        assert!(gen_data(&s, &Rng::new(0)).is_err());
        let mut s = spec();
        s.dims = vec![3, 5];
        assert!(gen_data(&s, &Rng::new(0)).is_err());
    }
}
