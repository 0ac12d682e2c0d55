//! Whole-model gradient verification against central finite differences.
//!
//! A deliberately tiny model (every dimension <= 8) is built, one training
//! step's analytic gradients are computed, and each trainable tensor is then
//! re-derived entry by entry from the value-only total loss. Dimensions and
//! loss weights are pinned here - not taken from the experiment config - so
//! that every block (bank, contrastive view weights, encoders, task prompt,
//! task head) receives gradient signal; the config contributes only the
//! seed. Frozen tensors never appear in the report.

use serde::Serialize;

use crate::bank::MissingPattern;
use crate::error::Result;
use crate::linalg::Matrix;
use crate::model::{
    backward_step, total_loss, BankChoice, ModelSpec, ModelState, SampleView, StepOptions,
};
use crate::param::{finite_diff_grad, max_rel_err};
use crate::rng::Rng;

pub const TOLERANCE: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-5;
/// Relative-error floor for entries whose gradient is essentially zero.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct BlockCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub fd_step: f64,
    pub blocks: Vec<BlockCheck>,
    pub all_pass: bool,
}

struct Fixture {
    state: ModelState,
    features: Vec<Vec<Vec<f64>>>,
    patterns: Vec<MissingPattern>,
    labels: Matrix,
    opts: StepOptions,
}

fn fixture(seed: u64) -> Result<Fixture> {
    let spec = ModelSpec {
        view_dims: vec![3, 2],
        prompt_len: 8,
        layers: 1,
        heads: 1,
        factors: 2,
        tt_ranks: vec![1, 2, 2],
        bank_kind: BankChoice::TensorTrain,
    };
    let mut rng = Rng::new(seed);
    let mut state = ModelState::new(spec, &mut rng)?;
    state.add_task(3, &mut rng)?;
    state.freeze_for_session(0, false);

    let batch = 4;
    let patterns = vec![
        MissingPattern::new(vec![true, true]),
        MissingPattern::new(vec![true, false]),
        MissingPattern::new(vec![false, true]),
        MissingPattern::new(vec![true, true]),
    ];
    let features: Vec<Vec<Vec<f64>>> = (0..batch)
        .map(|_| {
            vec![
                (0..3).map(|_| rng.normal()).collect(),
                (0..2).map(|_| rng.normal()).collect(),
            ]
        })
        .collect();
    let labels = Matrix::from_fn(batch, 3, |_, _| if rng.next_f64() < 0.5 { 1.0 } else { 0.0 });
    let opts = StepOptions {
        lambda: 0.5,
        alpha: 1.0,
        dcl_patterns: MissingPattern::all_nonzero(2)?,
        weighted_positive_term: true,
    };
    Ok(Fixture {
        state,
        features,
        patterns,
        labels,
        opts,
    })
}

fn samples_owned<'a>(
    features: &'a [Vec<Vec<f64>>],
    patterns: &'a [MissingPattern],
) -> Vec<SampleView<'a>> {
    features
        .iter()
        .zip(patterns)
        .map(|(views, pattern)| SampleView {
            features: views.iter().map(|v| v.as_slice()).collect(),
            pattern,
        })
        .collect()
}

/// Checks every trainable block of the tiny model. `corrupt_block`, when
/// set, perturbs that block's analytic gradient before comparison so the
/// harness itself can be validated.
pub fn run_gradcheck(seed: u64, corrupt_block: Option<&str>) -> Result<GradCheckReport> {
    let mut f = fixture(seed)?;

    {
        let views = samples_owned(&f.features, &f.patterns);
        backward_step(&mut f.state, &views, &f.labels, 0, &f.opts)?;
    }
    if let Some(name) = corrupt_block {
        if let Some(p) = f.state.param_mut(name) {
            let bumped = p.grad.map(|g| g + 0.05);
            p.grad = bumped;
        }
    }

    let names: Vec<String> = f
        .state
        .params()
        .iter()
        .filter(|p| p.updatable())
        .map(|p| p.name.clone())
        .collect();

    let mut blocks = Vec::with_capacity(names.len());
    for name in names {
        let analytic = f.state.param(&name).unwrap().grad.clone();
        let at = f.state.param(&name).unwrap().value.clone();
        let fd = {
            let state = &mut f.state;
            let labels = &f.labels;
            let opts = &f.opts;
            let features = &f.features;
            let patterns = &f.patterns;
            finite_diff_grad(
                |probe: &Matrix| {
                    state.param_mut(&name).unwrap().value = probe.clone();
                    let views = samples_owned(features, patterns);
                    total_loss(state, &views, labels, 0, opts)
                        .expect("loss evaluates at probe")
                        .total
                },
                &at,
                FD_STEP,
            )?
        };
        f.state.param_mut(&name).unwrap().value = at;
        let err = max_rel_err(&analytic, &fd, REL_FLOOR);
        blocks.push(BlockCheck {
            name,
            max_rel_err: err,
            pass: err <= TOLERANCE,
        });
    }

    let all_pass = blocks.iter().all(|b| b.pass);
    Ok(GradCheckReport {
        tolerance: TOLERANCE,
        fd_step: FD_STEP,
        blocks,
        all_pass,
    })
}
