//! ReLU / maxout with and without batch norm on the toy task, sharing one
//! training budget.
//!
//! ```text
//! cargo run --release --example ablation
//! ```

use plrlab::experiments::{ablation, AblationConfig};

fn main() -> plrlab::Result<()> {
    let report = ablation(&AblationConfig::default())?;
    print!("{}", report.to_csv());
    println!("maxout+bn < relu+bn < relu: {}", report.ordering_holds());
    Ok(())
}
