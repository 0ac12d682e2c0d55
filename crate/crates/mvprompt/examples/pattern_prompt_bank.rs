//! Walks through the missing-pattern prompt bank.
//!
//! Every combination of observed/missing views gets its own prompt vector,
//! but storing one dense prompt per pattern costs (2^n - 1) * d parameters.
//! The tensor-train bank instead keeps one small core per view with two
//! slices (observed / missing); chaining the slices selected by a pattern
//! yields k mixing coefficients over a shared d x k basis. Storage grows
//! linearly in the number of views while still giving every pattern a
//! distinct prompt.
//!
//! Run with: cargo run --example pattern_prompt_bank

use mvprompt::bank::{DenseBank, MissingPattern, TensorTrainBank};
use mvprompt::rng::Rng;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn main() -> mvprompt::Result<()> {
    let n = 3; // views
    let d = 16; // prompt length
    let k = 4; // mixing coefficients
    let r = 2; // tensor-train rank

    let mut rng = Rng::new(7);
    let tt = TensorTrainBank::with_uniform_rank(n, d, k, r, &mut rng)?;
    let dense = DenseBank::new(n, d, &mut rng)?;

    println!("bank over n={n} views, prompt length d={d}, k={k}, rank={r}");
    println!(
        "parameters: tensor-train {} vs dense {} ({} pattern columns x {} dims)\n",
        tt.param_count(),
        dense.param_count(),
        1 << n,
        d
    );

    // Core entries initialize near zero (prompt-tuning convention), so the
    // chained products are small; scientific notation keeps them readable.
    println!("pattern  ->  coefficients (k={k})                                  |prompt|");
    for pattern in MissingPattern::all_nonzero(n)? {
        let coeff = tt.tt_coefficients(&pattern)?;
        let prompt = tt.prompt_for_pattern(&pattern)?;
        let coeffs: Vec<String> = coeff.data().iter().map(|c| format!("{c:+.2e}")).collect();
        println!(
            "  {pattern}    ->  [{}]   {:.3e}",
            coeffs.join(", "),
            norm(&prompt)
        );
    }

    // Patterns are addressed by the base-2 index of their bits, so lookups
    // are exact: the same pattern always selects the same prompt.
    let a = MissingPattern::new(vec![true, false, true]);
    let b = MissingPattern::from_index(a.index(), n)?;
    assert_eq!(tt.prompt_for_pattern(&a)?, tt.prompt_for_pattern(&b)?);
    println!("\npattern {a} has bank index {}", a.index());

    // Changing one view's availability changes the selected core slices and
    // with them the prompt; no two patterns share a prompt by construction.
    let mut c = a.clone();
    c.set(1, true);
    let pa = tt.prompt_for_pattern(&a)?;
    let pc = tt.prompt_for_pattern(&c)?;
    let moved = norm(
        &pa.iter()
            .zip(&pc)
            .map(|(x, y)| x - y)
            .collect::<Vec<f64>>(),
    );
    println!("flipping view 1 ({a} -> {c}) moves the prompt by {moved:.3e}");

    Ok(())
}
