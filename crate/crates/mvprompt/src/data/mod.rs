//! In-memory datasets: per-view features, multi-hot labels, missing-view
//! indicators, and split tags.

mod manifest;
mod synth;

pub use manifest::{load_dataset, save_dataset, DatasetManifest, FeatureFormat, CSV_VALUE_LIMIT};
pub use synth::{gen_data, SynthSpec};

use crate::bank::MissingPattern;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::SampleView;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_byte(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Split::Train),
            1 => Ok(Split::Val),
            2 => Ok(Split::Test),
            other => Err(Error::Dataset(format!("invalid split tag byte {other}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub view_dims: Vec<usize>,
    /// One matrix per view, samples x view_dim. Missing views hold zeros.
    pub features: Vec<Matrix>,
    /// samples x classes, entries 0.0 or 1.0.
    pub labels: Matrix,
    pub indicators: Vec<MissingPattern>,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn n_views(&self) -> usize {
        self.view_dims.len()
    }

    pub fn num_samples(&self) -> usize {
        self.labels.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.cols()
    }

    pub fn sample_view(&self, i: usize) -> SampleView<'_> {
        SampleView {
            features: self.features.iter().map(|f| f.row(i)).collect(),
            pattern: &self.indicators[i],
        }
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.num_samples())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }

    /// Structural consistency: every per-view matrix, the label matrix, the
    /// indicator list, and the split list must agree on the sample count;
    /// labels must be binary; features must be finite.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_samples();
        if self.features.len() != self.view_dims.len() {
            return Err(Error::Dataset(format!(
                "{} feature matrices for {} views",
                self.features.len(),
                self.view_dims.len()
            )));
        }
        for (v, f) in self.features.iter().enumerate() {
            if f.rows() != n || f.cols() != self.view_dims[v] {
                return Err(Error::Dataset(format!(
                    "view {v}: features are {}x{}, expected {n}x{}",
                    f.rows(),
                    f.cols(),
                    self.view_dims[v]
                )));
            }
            if !f.all_finite() {
                return Err(Error::NonFinite(format!("view {v} features")));
            }
        }
        if self.indicators.len() != n || self.splits.len() != n {
            return Err(Error::Dataset(format!(
                "{} indicators / {} splits for {n} samples",
                self.indicators.len(),
                self.splits.len()
            )));
        }
        for (i, ind) in self.indicators.iter().enumerate() {
            if ind.n_views() != self.n_views() {
                return Err(Error::Dataset(format!(
                    "sample {i}: indicator covers {} views, dataset has {}",
                    ind.n_views(),
                    self.n_views()
                )));
            }
            if !ind.any_observed() {
                return Err(Error::Dataset(format!(
                    "sample {i} has no observed view"
                )));
            }
        }
        if self.labels.data().iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::Dataset("labels must be 0 or 1".into()));
        }
        Ok(())
    }

    /// Zeroes the feature rows of every missing view. Idempotent.
    pub fn zero_missing_rows(&mut self) {
        for i in 0..self.num_samples() {
            for v in 0..self.n_views() {
                if !self.indicators[i].is_observed(v) {
                    for x in self.features[v].row_mut(i) {
                        *x = 0.0;
                    }
                }
            }
        }
    }
}
