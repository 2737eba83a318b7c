//! Learning-rate sweep on the toy maxout MLP with and without batch norm.
//!
//! ```text
//! cargo run --release --example illcond
//! ```

use plrlab::experiments::{illcond_sweep, IllCondConfig};

fn main() -> plrlab::Result<()> {
    let cfg = IllCondConfig {
        rates: vec![0.01, 0.1, 0.3, 1.0, 3.0],
        runs: 3,
        ..Default::default()
    };
    let report = illcond_sweep(&cfg)?;
    for row in &report.rows {
        println!(
            "lr {:>5} bn {:<5} diverged {}/{}  mean train error {:.3}",
            row.lr,
            row.bn,
            row.runs.diverged_runs(),
            row.runs.runs.len(),
            row.runs.mean_train_error
        );
    }
    println!("BN-off diverges, BN-on converges at: {:?}", report.separating_rates());
    Ok(())
}
