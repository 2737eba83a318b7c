//! A slice of the toy-task architecture grid: maxout k=4 against ReLU, with
//! and without batch norm, at width 4.
//!
//! ```text
//! cargo run --release --example toy_sweep [runs]
//! ```
//!
//! The full grid is `plrlab toy-sweep`.

use plrlab::experiments::{toy_sweep_with_progress, SweepConfig};
use plrlab::layers::ActivationSpec;

fn main() -> plrlab::Result<()> {
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let cfg = SweepConfig {
        widths: vec![4],
        layers: vec![2, 5],
        activations: vec![ActivationSpec::Relu, ActivationSpec::Maxout { k: 4 }],
        dropout: vec![None],
        runs,
        ..Default::default()
    };
    let report = toy_sweep_with_progress(&cfg, |c| eprintln!("done {}", c.cell.csv_prefix()))?;
    print!("{}", report.to_csv());
    println!();
    print!("{}", report.census_csv());
    Ok(())
}
