//! Run reports: structured JSON with a stable field order so diffs between
//! runs are meaningful.
//!
//! A report embeds the config hash and every seed's per-session metrics.
//! Wall-clock timing is carried in a dedicated section that
//! [`RunReport::canonical_json`] zeroes out, so two runs of the same config
//! and seed compare byte-identical while the emitted file still records how
//! long the run took.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bank::ParamCount;
use crate::error::{Error, Result};
use crate::incremental::MissingSummary;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionReport {
    /// 0-based session index.
    pub session: usize,
    /// Classes introduced this session.
    pub classes: usize,
    /// Classes evaluated after this session (cumulative).
    pub cumulative_classes: usize,
    pub train_samples: usize,
    pub epochs_run: usize,
    pub final_train_loss: f64,
    pub map: f64,
    pub cf1: f64,
    pub of1: f64,
    /// Classes with zero test positives, excluded from map/cf1.
    pub skipped_classes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub sessions: Vec<SessionReport>,
    /// Arithmetic mean of the per-session mAPs.
    pub average_map: f64,
    pub last_map: f64,
    /// Samples with no positive label in any session.
    pub excluded_samples: usize,
    pub missing: MissingSummary,
}

impl SeedReport {
    pub fn new(
        seed: u64,
        sessions: Vec<SessionReport>,
        excluded_samples: usize,
        missing: MissingSummary,
    ) -> Result<Self> {
        if sessions.is_empty() {
            return Err(Error::Validation("seed report needs >= 1 session".into()));
        }
        let average_map = sessions.iter().map(|s| s.map).sum::<f64>() / sessions.len() as f64;
        let last_map = sessions.last().unwrap().map;
        Ok(SeedReport {
            seed,
            sessions,
            average_map,
            last_map,
            excluded_samples,
            missing,
        })
    }
}

/// Mean and population standard deviation over seeds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Aggregate {
    pub average_map: MeanStd,
    pub last_map: MeanStd,
    pub last_cf1: MeanStd,
    pub last_of1: MeanStd,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    /// Accounting rows for the configured (n, d, k, R).
    pub param_counts: Vec<ParamCount>,
    /// Trainable scalars in the instantiated model after the last session.
    pub trainable_params: usize,
    pub seeds: Vec<SeedReport>,
    pub aggregate: Aggregate,
    pub timing: Timing,
}

impl RunReport {
    pub fn new(
        config_hash: String,
        param_counts: Vec<ParamCount>,
        trainable_params: usize,
        seeds: Vec<SeedReport>,
        wall_clock_s: f64,
    ) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::Validation("run report needs >= 1 seed".into()));
        }
        let avg: Vec<f64> = seeds.iter().map(|s| s.average_map).collect();
        let last: Vec<f64> = seeds.iter().map(|s| s.last_map).collect();
        let cf1: Vec<f64> = seeds
            .iter()
            .map(|s| s.sessions.last().unwrap().cf1)
            .collect();
        let of1: Vec<f64> = seeds
            .iter()
            .map(|s| s.sessions.last().unwrap().of1)
            .collect();
        Ok(RunReport {
            config_hash,
            param_counts,
            trainable_params,
            seeds,
            aggregate: Aggregate {
                average_map: MeanStd::of(&avg),
                last_map: MeanStd::of(&last),
                last_cf1: MeanStd::of(&cf1),
                last_of1: MeanStd::of(&of1),
            },
            timing: Timing { wall_clock_s },
        })
    }

    /// Pretty JSON with real timing, newline-terminated.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Pretty JSON with timing zeroed: the determinism-comparable payload.
    pub fn canonical_json(&self) -> String {
        let mut clone = self.clone();
        clone.timing.wall_clock_s = 0.0;
        clone.to_json()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("report: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn missing_summary() -> MissingSummary {
        MissingSummary {
            rate: 0.3,
            per_view_missing: vec![3, 3],
            target_per_view: 3,
            repaired: 0,
        }
    }

    fn session(i: usize, map: f64) -> SessionReport {
        SessionReport {
            session: i,
            classes: 2,
            cumulative_classes: 2 * (i + 1),
            train_samples: 10,
            epochs_run: 5,
            final_train_loss: 0.4,
            map,
            cf1: 0.5,
            of1: 0.6,
            skipped_classes: 0,
        }
    }

    fn report() -> RunReport {
        let seeds = vec![
            SeedReport::new(
                0,
                vec![session(0, 0.8), session(1, 0.6)],
                1,
                missing_summary(),
            )
            .unwrap(),
            SeedReport::new(
                1,
                vec![session(0, 0.7), session(1, 0.5)],
                0,
                missing_summary(),
            )
            .unwrap(),
        ];
        RunReport::new("abc123".into(), vec![], 42, seeds, 1.25).unwrap()
    }

    #[test]
    fn average_map_is_session_mean() {
        let r = report();
        assert!((r.seeds[0].average_map - 0.7).abs() < 1e-15);
        assert_eq!(r.seeds[0].last_map, 0.6);
    }

    #[test]
    fn aggregate_mean_and_std() {
        let r = report();
        assert!((r.aggregate.last_map.mean - 0.55).abs() < 1e-15);
        assert!((r.aggregate.last_map.std - 0.05).abs() < 1e-12);
    }

    #[test]
    fn canonical_json_zeroes_timing_only() {
        let a = report();
        let mut b = report();
        b.timing.wall_clock_s = 99.0;
        assert_ne!(a.to_json(), b.to_json());
        assert_eq!(a.canonical_json(), b.canonical_json());
        assert!(a.to_json().contains("1.25"));
    }

    #[test]
    fn file_round_trip() {
        let r = report();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        r.write(&path).unwrap();
        let loaded = RunReport::read(&path).unwrap();
        assert_eq!(loaded.to_json(), r.to_json());
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(SeedReport::new(0, vec![], 0, missing_summary()).is_err());
        assert!(RunReport::new("h".into(), vec![], 0, vec![], 0.0).is_err());
    }
}
