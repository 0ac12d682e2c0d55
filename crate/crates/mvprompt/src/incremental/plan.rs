//! Class partitioning and session membership.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

/// Disjoint class sets per session: the base session takes `c_base` classes,
/// every later session takes the same increment. Classes are shuffled before
/// splitting, so the plan depends on the partition rng stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionPlan {
    pub class_sets: Vec<Vec<usize>>,
    pub c_base: usize,
    pub c_inc: usize,
}

impl SessionPlan {
    pub fn num_sessions(&self) -> usize {
        self.class_sets.len()
    }

    pub fn total_classes(&self) -> usize {
        self.class_sets.iter().map(|s| s.len()).sum()
    }

    /// Class ids of sessions 0..=through, concatenated in session order.
    /// This is the column order of every cumulative score matrix.
    pub fn cumulative_classes(&self, through: usize) -> Vec<usize> {
        self.class_sets[..=through]
            .iter()
            .flat_map(|s| s.iter().copied())
            .collect()
    }
}

/// Splits `c` classes into `t` sessions. The increment (c - c_base) must
/// divide evenly across the t - 1 later sessions; a single-session plan
/// requires c_base == c.
pub fn partition_classes(c: usize, c_base: usize, t: usize, rng: &mut Rng) -> Result<SessionPlan> {
    if c == 0 || t == 0 {
        return Err(Error::Config(format!(
            "need at least one class and one session (got {c} classes, {t} sessions)"
        )));
    }
    if c_base == 0 || c_base > c {
        return Err(Error::Config(format!(
            "base class count {c_base} must lie in 1..={c}"
        )));
    }
    let c_inc = if t == 1 {
        if c_base != c {
            return Err(Error::Config(format!(
                "single-session plan must put all {c} classes in the base session, got c_base={c_base}"
            )));
        }
        0
    } else {
        let rest = c - c_base;
        if rest % (t - 1) != 0 {
            return Err(Error::Config(format!(
                "cannot split {rest} remaining classes into {} equal increments: remainder {}",
                t - 1,
                rest % (t - 1)
            )));
        }
        rest / (t - 1)
    };

    let mut order: Vec<usize> = (0..c).collect();
    rng.shuffle(&mut order);

    let mut class_sets = Vec::with_capacity(t);
    class_sets.push(order[..c_base].to_vec());
    for s in 0..t - 1 {
        let start = c_base + s * c_inc;
        class_sets.push(order[start..start + c_inc].to_vec());
    }
    Ok(SessionPlan {
        class_sets,
        c_base,
        c_inc,
    })
}

/// Session membership per Eq.-style rule: a sample belongs to session t when
/// it has at least one positive label among that session's classes. Samples
/// can belong to several sessions. Rows with no positive label at all are
/// excluded and reported.
pub fn assign_samples(labels: &Matrix, plan: &SessionPlan) -> Result<(Vec<Vec<usize>>, usize)> {
    if plan.total_classes() != labels.cols() {
        return Err(Error::Validation(format!(
            "plan covers {} classes but labels have {} columns",
            plan.total_classes(),
            labels.cols()
        )));
    }
    let mut per_session: Vec<Vec<usize>> = vec![Vec::new(); plan.num_sessions()];
    let mut excluded = 0usize;
    for i in 0..labels.rows() {
        let row = labels.row(i);
        if row.iter().all(|&y| y == 0.0) {
            excluded += 1;
            continue;
        }
        for (s, classes) in plan.class_sets.iter().enumerate() {
            if classes.iter().any(|&c| row[c] == 1.0) {
                per_session[s].push(i);
            }
        }
    }
    Ok((per_session, excluded))
}
