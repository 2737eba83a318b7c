//! Train a small toy network, save it, reload it and confirm the reloaded copy
//! predicts identically.
//!
//! ```text
//! cargo run --release --example snapshot [path]
//! ```

use plrlab::experiments::{gen_toy_dataset, ToyPartitionSpec};
use plrlab::layers::ActivationSpec;
use plrlab::network::{build_mlp, load_snapshot, save_snapshot, InitScheme};
use plrlab::numerics::SeededRng;
use plrlab::training::{classification_error, train, TrainConfig};

fn main() -> plrlab::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("plrlab-toy.plr"));
    let data = gen_toy_dataset(&ToyPartitionSpec::default(), 0)?.data;
    let mut net = build_mlp(2, 3, 4, ActivationSpec::Maxout { k: 2 }, true, None)?;
    net.init_params(&mut SeededRng::new(0), &InitScheme::toy())?;
    let cfg = TrainConfig {
        schedule: vec![(0.0005, 5)],
        ..TrainConfig::toy()
    };
    let report = train(&mut net, &data, &cfg)?;
    save_snapshot(&net, &path)?;
    let back = load_snapshot(&path)?;
    let same = back.logits(&data.test.x)? == net.logits(&data.test.x)?;
    println!("test error {:.4}, saved to {}", report.final_test_error, path.display());
    println!("reloaded network identical: {same}, test error {:.4}", classification_error(&back, &data.test)?);
    Ok(())
}
