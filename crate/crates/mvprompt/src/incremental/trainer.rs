//! Session-by-session training loop, cumulative inference, and evaluation.
//!
//! Each session trains only the parameter set the freeze schedule allows
//! (everything learnable in session 0; later sessions add a task prompt and
//! head and train only those), so earlier pathways stay bit-frozen.
//! Inference concatenates every trained pathway's class probabilities in
//! session order; evaluation restricts the held-out test split's labels to
//! the classes seen so far.

use std::time::Instant;

use super::metrics::{classification_metrics, ClassificationMetrics};
use super::missing::{simulate_missing, MissingSummary};
use super::plan::{assign_samples, partition_classes, SessionPlan};
use crate::bank::{
    cross_modal_count, dense_count, per_view_count, tt_bound_count, tt_exact_count, ParamCount,
};
use crate::config::{DatasetSource, ExperimentConfig};
use crate::data::{gen_data, load_dataset, Dataset, Split};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{backward_step, ModelState, StepOptions};
use crate::param::adam_step;
use crate::report::{RunReport, SeedReport, SessionReport};
use crate::rng::{streams, Rng};

pub const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct SessionLog {
    pub session: usize,
    pub epochs_run: usize,
    pub final_train_loss: f64,
    /// Best validation mAP seen, when the session had validation samples.
    pub best_val_map: Option<f64>,
    pub train_samples: usize,
}

/// Label submatrix for `indices` restricted to `class_set`, column order
/// following `class_set`.
pub fn label_matrix(labels: &Matrix, indices: &[usize], class_set: &[usize]) -> Matrix {
    Matrix::from_fn(indices.len(), class_set.len(), |r, c| {
        labels.get(indices[r], class_set[c])
    })
}

/// Contrastive pattern domain for one step: every nonzero pattern, or a
/// random subset of `cap` of them drawn without replacement.
pub fn dcl_patterns_for_step(
    n_views: usize,
    cap: Option<usize>,
    rng: &mut Rng,
) -> Result<Vec<crate::bank::MissingPattern>> {
    let all = crate::bank::MissingPattern::all_nonzero(n_views)?;
    match cap {
        Some(cap) if cap < all.len() => {
            let picks = rng.sample_indices(all.len(), cap);
            Ok(picks.into_iter().map(|i| all[i].clone()).collect())
        }
        _ => Ok(all),
    }
}

/// Probability matrix over the cumulative label space: for each sample in
/// `indices`, pathways 0..=upto run independently and their class
/// probabilities concatenate in session order.
pub fn predict(
    state: &ModelState,
    dataset: &Dataset,
    indices: &[usize],
    upto: usize,
) -> Result<Matrix> {
    if upto >= state.num_tasks() {
        return Err(Error::Validation(format!(
            "pathway {upto} not trained yet ({} tasks registered)",
            state.num_tasks()
        )));
    }
    let total: usize = state.tasks[..=upto].iter().map(|t| t.num_classes).sum();
    let mut out = Matrix::zeros(indices.len(), total);
    for (r, &i) in indices.iter().enumerate() {
        let sample = dataset.sample_view(i);
        let mut col = 0;
        for task in 0..=upto {
            let fwd = state.forward_task(&sample, task)?;
            for (j, &p) in fwd.probs.iter().enumerate() {
                out.set(r, col + j, p);
            }
            col += state.tasks[task].num_classes;
        }
    }
    Ok(out)
}

/// Metrics on `split` after session `upto`: scores from the concatenated
/// pathways against labels restricted to the cumulative class set.
pub fn evaluate(
    state: &ModelState,
    dataset: &Dataset,
    plan: &SessionPlan,
    upto: usize,
    split: Split,
) -> Result<ClassificationMetrics> {
    let indices = dataset.indices_of(split);
    if indices.is_empty() {
        return Err(Error::Validation(format!("no {split:?} samples to evaluate")));
    }
    let scores = predict(state, dataset, &indices, upto)?;
    let classes = plan.cumulative_classes(upto);
    let labels = label_matrix(&dataset.labels, &indices, &classes);
    classification_metrics(&scores, &labels)
}

fn snapshot_updatable(state: &ModelState) -> Vec<(String, Matrix)> {
    state
        .params()
        .iter()
        .filter(|p| p.updatable())
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect()
}

fn restore_snapshot(state: &mut ModelState, snapshot: &[(String, Matrix)]) {
    for (name, value) in snapshot {
        if let Some(p) = state.param_mut(name) {
            p.value = value.clone();
        }
    }
}

/// Trains session `session_idx` (0-based). Registers the session's pathway
/// if absent, applies the freeze schedule, then runs minibatch Adam with
/// early stopping on validation mAP (patience in epochs); when validation
/// samples exist the state is left at the best-validation epoch.
#[allow(clippy::too_many_arguments)]
pub fn train_session(
    state: &mut ModelState,
    dataset: &Dataset,
    train_idx: &[usize],
    val_idx: &[usize],
    class_set: &[usize],
    session_idx: usize,
    config: &ExperimentConfig,
    root: &Rng,
) -> Result<SessionLog> {
    if train_idx.is_empty() {
        return Err(Error::Validation(format!(
            "session {session_idx} has no training samples"
        )));
    }
    if state.num_tasks() < session_idx {
        return Err(Error::Validation(format!(
            "cannot train session {session_idx}: only {} earlier pathways exist",
            state.num_tasks()
        )));
    }
    if state.num_tasks() == session_idx {
        let mut task_rng = root.substream(streams::INIT, 1 + session_idx as u64);
        state.add_task(class_set.len(), &mut task_rng)?;
    } else if state.tasks[session_idx].num_classes != class_set.len() {
        return Err(Error::Validation(format!(
            "session {session_idx} pathway handles {} classes, plan gives {}",
            state.tasks[session_idx].num_classes,
            class_set.len()
        )));
    }
    state.freeze_for_session(session_idx, config.train_bank_every_session);
    for p in state.params_mut() {
        if p.updatable() {
            p.reset_optimizer_state();
        }
    }

    let train_labels = label_matrix(&dataset.labels, train_idx, class_set);
    let val_labels = label_matrix(&dataset.labels, val_idx, class_set);

    let mut best: Option<(f64, usize, Vec<(String, Matrix)>)> = None;
    let mut step: u64 = 0;
    let mut epochs_run = 0;
    let mut final_train_loss = f64::NAN;

    for epoch in 0..config.epochs {
        let epoch_key = session_idx as u64 * 100_000 + epoch as u64;
        let mut batch_rng = root.substream(streams::BATCH, epoch_key);
        let mut dcl_rng = root.substream(streams::DCL, epoch_key);

        let mut order: Vec<usize> = (0..train_idx.len()).collect();
        batch_rng.shuffle(&mut order);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch) {
            let samples: Vec<_> = chunk
                .iter()
                .map(|&local| dataset.sample_view(train_idx[local]))
                .collect();
            let batch_labels = Matrix::from_fn(chunk.len(), class_set.len(), |r, c| {
                train_labels.get(chunk[r], c)
            });
            let opts = StepOptions {
                lambda: config.lambda,
                alpha: config.alpha,
                dcl_patterns: dcl_patterns_for_step(
                    dataset.n_views(),
                    config.dcl_pattern_subsample,
                    &mut dcl_rng,
                )?,
                weighted_positive_term: config.weighted_positive_term,
            };
            let breakdown =
                backward_step(state, &samples, &batch_labels, session_idx, &opts)?;
            step += 1;
            let mut params = state.params_mut();
            adam_step(&mut params, config.lr, ADAM_BETAS, ADAM_EPS, step)?;
            epoch_loss += breakdown.total;
            batches += 1;
        }
        epochs_run = epoch + 1;
        final_train_loss = epoch_loss / batches as f64;

        if !val_idx.is_empty() {
            let scores = predict_single_task(state, dataset, val_idx, session_idx)?;
            let val_map = classification_metrics(&scores, &val_labels)?.map;
            let improved = best.as_ref().map_or(true, |(b, _, _)| val_map > *b);
            if improved {
                best = Some((val_map, epoch, snapshot_updatable(state)));
            } else if let Some((_, best_epoch, _)) = &best {
                if epoch - best_epoch >= config.patience {
                    break;
                }
            }
        }
    }

    let best_val_map = match best {
        Some((map, _, snapshot)) => {
            restore_snapshot(state, &snapshot);
            Some(map)
        }
        None => None,
    };
    Ok(SessionLog {
        session: session_idx,
        epochs_run,
        final_train_loss,
        best_val_map,
        train_samples: train_idx.len(),
    })
}

/// Probabilities from one pathway only, for per-session validation.
fn predict_single_task(
    state: &ModelState,
    dataset: &Dataset,
    indices: &[usize],
    task: usize,
) -> Result<Matrix> {
    let classes = state.tasks[task].num_classes;
    let mut out = Matrix::zeros(indices.len(), classes);
    for (r, &i) in indices.iter().enumerate() {
        let fwd = state.forward_task(&dataset.sample_view(i), task)?;
        for (j, &p) in fwd.probs.iter().enumerate() {
            out.set(r, j, p);
        }
    }
    Ok(out)
}

/// Everything a finished experiment hands back: the report plus the first
/// seed's final model and plan, which the CLI checkpoints.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub report: RunReport,
    pub state: ModelState,
    pub plan: SessionPlan,
    pub first_seed: u64,
}

/// Full protocol for one seed: generate/load data, simulate missing views,
/// partition classes, then train and evaluate session by session.
pub fn run_seed(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(SeedReport, ModelState, SessionPlan)> {
    let root = Rng::new(seed);
    let mut dataset = match &config.dataset {
        DatasetSource::Synthetic(spec) => gen_data(spec, &root)?,
        DatasetSource::Manifest(path) => load_dataset(path)?,
    };
    config.check_class_split(dataset.num_classes())?;
    let missing: MissingSummary = simulate_missing(&mut dataset, config.missing_rate, &root)?;

    let mut part_rng = root.stream(streams::PARTITION);
    let plan = partition_classes(
        dataset.num_classes(),
        config.c_base,
        config.sessions,
        &mut part_rng,
    )?;
    let (assignments, excluded) = assign_samples(&dataset.labels, &plan)?;

    let mut init_rng = root.stream(streams::INIT);
    let spec = config.model_spec(dataset.view_dims.clone())?;
    let mut state = ModelState::new(spec, &mut init_rng)?;
    state.ablate_prompts = config.ablate_prompts;

    let mut sessions = Vec::with_capacity(plan.num_sessions());
    for t in 0..plan.num_sessions() {
        let train_idx: Vec<usize> = assignments[t]
            .iter()
            .copied()
            .filter(|&i| dataset.splits[i] == Split::Train)
            .collect();
        let val_idx: Vec<usize> = assignments[t]
            .iter()
            .copied()
            .filter(|&i| dataset.splits[i] == Split::Val)
            .collect();
        let log = train_session(
            &mut state,
            &dataset,
            &train_idx,
            &val_idx,
            &plan.class_sets[t],
            t,
            config,
            &root,
        )?;
        let metrics = evaluate(&state, &dataset, &plan, t, Split::Test)?;
        sessions.push(SessionReport {
            session: t,
            classes: plan.class_sets[t].len(),
            cumulative_classes: plan.cumulative_classes(t).len(),
            train_samples: log.train_samples,
            epochs_run: log.epochs_run,
            final_train_loss: log.final_train_loss,
            map: metrics.map,
            cf1: metrics.cf1,
            of1: metrics.of1,
            skipped_classes: metrics.skipped_classes,
        });
    }

    let report = SeedReport::new(seed, sessions, excluded, missing)?;
    Ok((report, state, plan))
}

/// Accounting rows for the configured shapes, shared by reports and the
/// params command.
pub fn param_count_rows(config: &ExperimentConfig, n_views: usize) -> Result<Vec<ParamCount>> {
    let n = n_views as u32;
    let d = config.d as u64;
    let k = config.k as u64;
    let r = config.rank as u64;
    let ranks: Vec<u64> = config
        .resolve_ranks(n_views)?
        .into_iter()
        .map(|x| x as u64)
        .collect();
    Ok(vec![
        dense_count(n, d),
        per_view_count(n, d),
        cross_modal_count(n, d, r),
        tt_bound_count(n, d, k, r),
        tt_exact_count(d, k, &ranks),
    ])
}

/// Runs every configured seed and aggregates. The returned state/plan belong
/// to the first seed so reruns with extended seed lists keep the same
/// checkpoint.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let start = Instant::now();
    let mut seed_reports = Vec::with_capacity(config.seeds.len());
    let mut first: Option<(ModelState, SessionPlan)> = None;
    for &seed in &config.seeds {
        let (seed_report, state, plan) = run_seed(config, seed)?;
        if first.is_none() {
            first = Some((state, plan));
        }
        seed_reports.push(seed_report);
    }
    let (state, plan) = first.expect("seeds validated non-empty");
    let report = RunReport::new(
        config.hash(),
        param_count_rows(config, state.n_views())?,
        state.trainable_param_count(),
        seed_reports,
        start.elapsed().as_secs_f64(),
    )?;
    Ok(ExperimentOutcome {
        report,
        state,
        plan,
        first_seed: config.seeds[0],
    })
}
