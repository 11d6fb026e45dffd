//! Run the built-in verification suite, then again with a corrupted GELU
//! constant to show that the gradient check notices.
//!
//!     cargo run --release --example selfcheck

use deltagate::selfcheck::{run_selfcheck, Mutation};

fn main() -> deltagate::Result<()> {
    for mutation in [None, Some(Mutation::GeluConstant)] {
        let report = run_selfcheck(2026, mutation)?;
        println!("mutation {mutation:?}: {}", if report.passed() { "all checks pass" } else { "failures" });
        for c in report.checks.iter().filter(|c| mutation.is_none() || !c.passed) {
            println!("  {:<5} {:<44} {:.2e}", if c.passed { "pass" } else { "FAIL" }, c.name, c.value);
        }
    }
    Ok(())
}
