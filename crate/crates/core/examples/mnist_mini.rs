//! Quarter-width maxout-in-maxout network on an MNIST subset.
//!
//! ```text
//! cargo run --release --example mnist_mini [mnist-dir] [epochs]
//! ```
//!
//! The default directory is `data/mnist-subset` under the workspace root.

use std::path::PathBuf;

use plrlab::experiments::{mnist_mini_observed, MnistMiniConfig, MnistPaths};

fn main() -> plrlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset"));
    let mut cfg = MnistMiniConfig::new(MnistPaths::in_dir(&dir));
    if let Some(epochs) = args.next().and_then(|s| s.parse::<usize>().ok()) {
        cfg.train.schedule = vec![(0.1, epochs)];
    }
    let started = std::time::Instant::now();
    let r = mnist_mini_observed(&cfg, &mut |e| {
        println!(
            "epoch {:>2}  lr {:<6} loss {:.4}  test error {:.4}  ({:.0}s)",
            e.epoch,
            e.learning_rate,
            e.train_loss,
            e.test_error,
            started.elapsed().as_secs_f64()
        )
    })?;
    println!(
        "{} parameters, {} training / {} test images, final test error {:.4}",
        r.network.param_count(),
        r.train_examples,
        r.test_examples,
        r.report.final_test_error
    );
    Ok(())
}
