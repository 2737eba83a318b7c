//! Finite-difference check of every layer's backward pass.
//!
//! ```text
//! cargo run --release --example gradcheck
//! ```

use plrlab::gradcheck::{run_gradcheck, GradCheckConfig};

fn main() -> plrlab::Result<()> {
    let report = run_gradcheck(&GradCheckConfig::default())?;
    for l in &report.layers {
        println!("{:<16} {:>3} instances  max rel error {:.3e}", l.kind.name(), l.instances, l.max_rel_error);
    }
    println!("all below {:e}: {}", report.tolerance, report.passed());
    Ok(())
}
