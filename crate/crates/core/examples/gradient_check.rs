//! Finite-difference gradient check of every layer kind under both losses.
//!
//!     cargo run --example gradient_check

use formscan::models::{gradient_suite, GRADCHECK_TOLERANCE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cases = gradient_suite()?;
    for c in &cases {
        println!("{:<20} {:<14} {:.3e}  {}", c.layer, c.loss, c.max_relative_error, if c.passed() { "ok" } else { "FAIL" });
    }
    let failed = cases.iter().filter(|c| !c.passed()).count();
    println!("{failed} of {} cases above {GRADCHECK_TOLERANCE:e}", cases.len());
    if failed > 0 {
        std::process::exit(1);
    }
    Ok(())
}
