//! Validates every analytic gradient against central finite differences.
//!
//! The training step mixes three gradient routes: reverse-mode
//! differentiation through the frozen transformer (encoders, task prompt,
//! heads), the hand-derived chain rule through the tensor-train cores, and
//! the closed-form contrastive gradients (bank basis/cores and view
//! weights). The checker perturbs every trainable scalar in a pinned tiny
//! model and compares (loss(x+h) - loss(x-h)) / 2h against the analytic
//! value, reporting the worst relative error per parameter block.
//!
//! Run with: cargo run --example gradient_check

use mvprompt::gradcheck::{run_gradcheck, FD_STEP, TOLERANCE};

fn main() -> mvprompt::Result<()> {
    println!("central differences, step {FD_STEP:.0e}, tolerance {TOLERANCE:.0e}\n");

    for seed in [0u64, 1] {
        let report = run_gradcheck(seed, None)?;
        println!("seed {seed}:");
        for block in &report.blocks {
            println!(
                "  {:<22} max rel err {:>10.3e}   {}",
                block.name,
                block.max_rel_err,
                if block.pass { "ok" } else { "FAIL" }
            );
        }
        assert!(report.all_pass);
        println!();
    }

    // The checker is only trustworthy if it can catch a planted bug. Corrupt
    // the analytic gradient of one block and watch exactly that block fail.
    let corrupted = run_gradcheck(0, Some("encoder0.weight"))?;
    println!("with a deliberately corrupted encoder0.weight gradient:");
    for block in &corrupted.blocks {
        if !block.pass {
            println!(
                "  {:<22} max rel err {:>10.3e}   caught",
                block.name, block.max_rel_err
            );
        }
    }
    assert!(!corrupted.all_pass);
    let failing: Vec<&str> = corrupted
        .blocks
        .iter()
        .filter(|b| !b.pass)
        .map(|b| b.name.as_str())
        .collect();
    assert_eq!(failing, ["encoder0.weight"]);
    println!("\nall analytic gradients match finite differences");

    Ok(())
}
