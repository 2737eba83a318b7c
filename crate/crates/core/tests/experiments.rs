//! Experiment harnesses on real inputs: MNIST ingestion and the toy-task claims
//! that sit outside the acceptance list.

use std::path::{Path, PathBuf};

use plrlab::experiments::{
    ablation, load_mnist_idx, mnist_mini, AblationConfig, AblationVariant, MnistMiniConfig, MnistPaths,
};
use plrlab::network::{build_mim_with, MimOptions, MimVariant};
use plrlab::training::TrainConfig;
use plrlab::Error;

fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset")
}

#[test]
fn mnist_subset_shapes_and_scaling() {
    let p = MnistPaths::in_dir(&mnist_dir());
    let all = load_mnist_idx(&p.train_images, &p.train_labels, None).unwrap();
    assert_eq!(all.set.x.shape(), &[8000, 1, 28, 28]);
    assert!(all.set.y.iter().all(|&l| l < 10));
    let mean = all.set.x.data().iter().sum::<f64>() / all.set.x.len() as f64;
    assert!(mean.abs() < 1e-9);
    let lo = all.set.x.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = all.set.x.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!((lo + all.mean).abs() < 1e-12 && (hi + all.mean - 1.0).abs() < 1e-12);

    let head = load_mnist_idx(&p.train_images, &p.train_labels, Some(1000)).unwrap();
    assert_eq!(head.set.x.shape()[0], 1000);
    assert_eq!(head.set.y[..], all.set.y[..1000]);
    let per = 28 * 28;
    for (a, b) in head.set.x.data().iter().zip(&all.set.x.data()[..1000 * per]) {
        assert!(((a + head.mean) - (b + all.mean)).abs() < 1e-12);
    }
}

#[test]
fn image_file_passed_as_labels_is_a_format_error() {
    let p = MnistPaths::in_dir(&mnist_dir());
    match load_mnist_idx(&p.train_images, &p.train_images, Some(10)) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn mnist_network_widths_at_full_and_quarter_scale() {
    let net = build_mim_with(MimVariant::Mnist, &MimOptions::default()).unwrap();
    let units: Vec<usize> = net.nodes().iter().map(|n| n.units()).collect();
    assert_eq!(units, [128, 96, 48, 128, 96, 48, 128, 96, 10]);
    let quarter = build_mim_with(MimVariant::Mnist, &MimOptions { width_scale: 0.25, ..Default::default() }).unwrap();
    let units: Vec<usize> = quarter.nodes().iter().map(|n| n.units()).collect();
    assert_eq!(units, [32, 24, 12, 32, 24, 12, 32, 24, 10]);
}

#[test]
fn short_mnist_run_learns_and_is_deterministic() {
    let mut cfg = MnistMiniConfig::new(MnistPaths::in_dir(&mnist_dir()));
    cfg.train_limit = Some(1000);
    cfg.test_limit = Some(500);
    cfg.train = TrainConfig {
        schedule: vec![(0.1, 2)],
        ..cfg.train
    };
    let a = mnist_mini(&cfg).unwrap();
    let b = mnist_mini(&cfg).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!((a.train_examples, a.test_examples), (1000, 500));
    let initial = a.report.epochs[0].test_error;
    assert!(a.report.final_test_error < initial - 0.03, "{initial} -> {}", a.report.final_test_error);
}

#[test]
fn dropout_does_not_repair_divergence() {
    let r = ablation(&AblationConfig {
        dropout: Some(0.2),
        ..Default::default()
    })
    .unwrap();
    for v in [AblationVariant::Baseline, AblationVariant::MaxoutNoBn] {
        assert!(r.row(v).runs.all_diverged(), "{}", v.name());
    }
    for v in [AblationVariant::ReluBn, AblationVariant::MaxoutBn] {
        assert_eq!(r.row(v).runs.diverged_runs(), 0, "{}", v.name());
    }
}
