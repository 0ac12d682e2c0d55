//! Sweeps the two capacity knobs of the tensor-train prompt bank and
//! measures what they buy.
//!
//! k is the number of mixing coefficients over the shared d x k basis; R is
//! the internal tensor-train rank. Each grid cell trains a bank with plain
//! Adam to reproduce a fixed target prompt table (one target vector per
//! missing pattern) and reports the final root-mean-square error next to the
//! cell's exact parameter count: more capacity, better fit, more parameters.
//!
//! Run with: cargo run --example factor_rank_sweep

use mvprompt::bank::{BankGrads, MissingPattern, PromptBank, TensorTrainBank};
use mvprompt::linalg::Matrix;
use mvprompt::param::adam_step;
use mvprompt::rng::Rng;

const N_VIEWS: usize = 5;
const PROMPT_LEN: usize = 32;
const STEPS: u64 = 800;
const LR: f64 = 0.02;

/// Mean squared error between bank prompts and targets, plus the gradient
/// of that error pushed back through the bank.
fn fit_step(
    bank: &mut PromptBank,
    patterns: &[MissingPattern],
    targets: &Matrix,
) -> mvprompt::Result<f64> {
    let mut acc = BankGrads::zeros_like(bank);
    let mut total = 0.0;
    let scale = 2.0 / (patterns.len() * PROMPT_LEN) as f64;
    for (j, pattern) in patterns.iter().enumerate() {
        let prompt = bank.prompt_for_pattern(pattern)?;
        let upstream: Vec<f64> = prompt
            .iter()
            .enumerate()
            .map(|(r, &p)| {
                let diff = p - targets.get(r, j);
                total += diff * diff;
                scale * diff
            })
            .collect();
        bank.accumulate_backward(pattern, &upstream, &mut acc)?;
    }
    for t in bank.tensors_mut() {
        t.zero_grad();
    }
    bank.apply_grads(&acc)?;
    Ok(total / (patterns.len() * PROMPT_LEN) as f64)
}

fn main() -> mvprompt::Result<()> {
    let patterns = MissingPattern::all_nonzero(N_VIEWS)?;

    // A target with real pattern structure: a shared component per observed
    // view plus a small pattern-specific twist.
    let mut target_rng = Rng::new(99);
    let view_parts: Vec<Vec<f64>> = (0..N_VIEWS)
        .map(|_| (0..PROMPT_LEN).map(|_| target_rng.normal()).collect())
        .collect();
    let targets = Matrix::from_fn(PROMPT_LEN, patterns.len(), |r, j| {
        let m = &patterns[j];
        let mut x = 0.0;
        for (v, part) in view_parts.iter().enumerate() {
            if m.is_observed(v) {
                x += part[r];
            }
        }
        x + 0.3 * ((m.index() * (r + 1)) as f64).sin()
    });

    println!(
        "fitting {} patterns x {} dims with {STEPS} Adam steps per cell\n",
        patterns.len(),
        PROMPT_LEN
    );
    println!("{:>3}  {:>4}  {:>11}  {:>10}", "k", "rank", "bank params", "rmse");

    for &k in &[2usize, 4, 8] {
        for &rank in &[1usize, 2, 4] {
            let mut rng = Rng::new(7);
            let mut bank = PromptBank::TensorTrain(TensorTrainBank::with_uniform_rank(
                N_VIEWS, PROMPT_LEN, k, rank, &mut rng,
            )?);
            let params = bank.param_count();
            let mut mse = f64::NAN;
            for step in 1..=STEPS {
                mse = fit_step(&mut bank, &patterns, &targets)?;
                let mut tensors = bank.tensors_mut();
                adam_step(&mut tensors, LR, (0.9, 0.999), 1e-8, step)?;
            }
            println!("{k:>3}  {rank:>4}  {params:>11}  {:>10.4}", mse.sqrt());
        }
    }

    println!(
        "\neach extra view costs 2R^2 core parameters; k widens the shared basis.\n\
         capacity buys fit quality, and even the largest cell stays far below\n\
         the dense table's {} parameters.",
        PROMPT_LEN * (1 << N_VIEWS)
    );

    Ok(())
}
