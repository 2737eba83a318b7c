//! Acceptance suite. Runs every criterion in sequence and prints one
//! PASS/FAIL line per criterion; exits nonzero if any fails.
//!
//! ```text
//! cargo test --release --test acceptance            # all nine
//! cargo test --release --test acceptance -- 3 5     # a selection
//! ```

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use plrlab::experiments::{
    ablation, gen_toy_dataset, illcond_sweep, mnist_mini, AblationConfig, IllCondConfig, MnistMiniConfig, MnistPaths,
    SweepConfig, ToyPartitionSpec,
};
use plrlab::gradcheck::{run_gradcheck, GradCheckConfig, LayerKind};
use plrlab::layers::{batchnorm_forward, ActivationSpec, BatchNormState, Mode};
use plrlab::network::{build_mlp, InitScheme};
use plrlab::numerics::{derive_seed, SeededRng, Tensor};
use plrlab::regions::{
    affinity_check, census, enumerate_regions, extract_pattern, grid_points, maxout_region_bound, Affinity, Bounds2,
};
use plrlab::training::{TrainConfig, STREAM_INIT};

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset")
}

fn c1_gradients() -> Check {
    let t = Instant::now();
    let cfg = GradCheckConfig::default();
    let r = run_gradcheck(&cfg).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let kinds: HashSet<&str> = r.layers.iter().map(|l| l.kind.name()).collect();
    let worst = r
        .layers
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .map(|l| format!("{} {:.2e}", l.kind.name(), l.max_rel_error))
        .unwrap_or_default();
    ensure(
        r.passed()
            && kinds.len() == LayerKind::ALL.len()
            && r.layers.iter().all(|l| l.instances >= 20)
            && cfg.tolerance <= 1e-4
            && secs < 60.0,
        format!("{} layer kinds, worst {worst}, {secs:.1}s", kinds.len()),
    )
}

fn c2_batchnorm_moments() -> Check {
    let (n, f) = (100, 64);
    let mut rng = SeededRng::new(2);
    let mut worst_mean = 0.0f64;
    let mut worst_std = 0.0f64;
    for _ in 0..10 {
        let scales: Vec<f64> = (0..f).map(|_| rng.uniform(0.2, 5.0)).collect();
        let shifts: Vec<f64> = (0..f).map(|_| rng.uniform(-10.0, 10.0)).collect();
        let data = (0..n * f).map(|i| shifts[i % f] + scales[i % f] * rng.normal()).collect();
        let x = Tensor::from_vec(&[n, f], data).unwrap();
        let mut s = BatchNormState::new(f);
        s.gamma = Tensor::from_vec(&[f], (0..f).map(|_| rng.uniform(-3.0, 3.0)).collect()).unwrap();
        s.beta = Tensor::from_vec(&[f], (0..f).map(|_| rng.uniform(-3.0, 3.0)).collect()).unwrap();
        let (y, _) = batchnorm_forward(&x, &mut s, Mode::Train).map_err(|e| e.to_string())?;
        for j in 0..f {
            let col: Vec<f64> = (0..n).map(|i| y.data()[i * f + j]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            let g = s.gamma.data()[j].abs();
            worst_mean = worst_mean.max((mean - s.beta.data()[j]).abs());
            worst_std = worst_std.max((std - g).abs() / g);
        }
    }
    ensure(
        worst_mean <= 1e-9 && worst_std <= 1e-3,
        format!("max |mean-beta| {worst_mean:.1e}, max relative std error {worst_std:.1e}"),
    )
}

fn c3_regions() -> Check {
    let points = grid_points(Bounds2::square(10.0), 200);
    let n = points.rows().0;
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..10u64 {
        // the bound describes maxout nets whose width equals the input dimension
        let k = if seed < 5 { 2 } else { 4 };
        let layers = 2 + (seed as usize % 5);
        let mut net = build_mlp(2, layers, 2, ActivationSpec::Maxout { k }, false, None).unwrap();
        net.init_params(&mut SeededRng::new(seed), &InitScheme::toy()).unwrap();
        let map = enumerate_regions(&net, &points).map_err(|e| e.to_string())?;

        let sizes_sum: usize = map.sizes().iter().sum();
        let mut seen = vec![false; n];
        let mut duplicate = false;
        for (id, members) in map.members.iter().enumerate() {
            for &i in members {
                duplicate |= std::mem::replace(&mut seen[i], true) || map.region_of[i] != id;
            }
        }
        let distinct: HashSet<_> = map.patterns.iter().collect();
        // independent grouping, one point at a time
        let mut oracle: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        for row in points.data().chunks_exact(2) {
            *oracle.entry(extract_pattern(&net, row).unwrap().0).or_default() += 1;
        }
        let partition_ok = sizes_sum == n
            && !duplicate
            && seen.iter().all(|&s| s)
            && distinct.len() == map.region_count()
            && oracle.len() == map.region_count()
            && map
                .patterns
                .iter()
                .zip(&map.members)
                .all(|(p, m)| oracle.get(&p.0) == Some(&m.len()));

        let mut affine_ok = true;
        let mut worst = 0.0f64;
        for (id, members) in map.members.iter().enumerate() {
            if members.len() < 3 {
                continue;
            }
            match affinity_check(&net, &points.select_rows(members), 8, derive_seed(seed, id as u64)).unwrap() {
                Affinity::Affine { worst: w, .. } => worst = worst.max(w),
                _ => affine_ok = false,
            }
        }
        let bound = maxout_region_bound(layers as u32, 2, k as u32).unwrap();
        let bound_ok = num_bigint::BigUint::from(map.region_count()) <= bound;
        ok &= partition_ok && affine_ok && bound_ok;
        lines.push(format!(
            "k={k} L={layers}: {} regions (bound {bound}){}{}{}, worst residual {worst:.0e}",
            map.region_count(),
            if partition_ok { "" } else { " PARTITION BROKEN" },
            if affine_ok { "" } else { " NOT AFFINE" },
            if bound_ok { "" } else { " OVER BOUND" },
        ));
    }
    ensure(ok, lines.join("; "))
}

fn c4_toy_study() -> Check {
    let t = Instant::now();
    let cfg = SweepConfig::default();
    let r = plrlab::experiments::toy_sweep(&cfg).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let maxout4 = ActivationSpec::Maxout { k: 4 };
    let deep_max = r.select(|c| c.activation == maxout4 && c.width == 4 && c.layers >= 5 && c.bn && c.dropout.is_none());
    let a_worst = deep_max.iter().map(|c| c.runs.mean_test_error).fold(0.0, f64::max);
    let a = !deep_max.is_empty() && a_worst <= 0.10;
    let relu_bn = r.best(|c| c.activation == ActivationSpec::Relu && c.bn).expect("relu cells");
    let b_err = relu_bn.runs.mean_test_error;
    let b = (0.12..=0.26).contains(&b_err);
    let off_deep = r.select(|c| !c.bn && c.layers >= 4);
    let c_bad: Vec<String> = off_deep
        .iter()
        .filter(|c| !c.runs.all_diverged())
        .map(|c| c.cell.csv_prefix())
        .collect();
    let c = c_bad.is_empty();
    let max_bn = r.best(|c| c.activation.is_maxout() && c.bn).expect("maxout cells");
    let d = max_bn.runs.mean_test_error < b_err;
    ensure(
        a && b && c && d && secs < 7200.0,
        format!(
            "(a) worst maxout4 w4 L>=5 BN {a_worst:.4} {}; (b) best relu+BN {b_err:.4} [{}] {}; \
             (c) {}/{} BN-off L>=4 cells fully diverged {}; (d) best maxout+BN {:.4} [{}] {}; {secs:.0}s",
            pf(a),
            relu_bn.cell.csv_prefix(),
            pf(b),
            off_deep.len() - c_bad.len(),
            off_deep.len(),
            if c { "ok".to_string() } else { format!("FAIL {c_bad:?}") },
            max_bn.runs.mean_test_error,
            max_bn.cell.csv_prefix(),
            pf(d),
        ),
    )
}

fn pf(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

fn c5_illconditioning() -> Check {
    let cfg = IllCondConfig::default();
    let r = illcond_sweep(&cfg).map_err(|e| e.to_string())?;
    let summary: Vec<String> = cfg
        .rates
        .iter()
        .map(|&lr| {
            let on = r.row(lr, true).unwrap();
            let off = r.row(lr, false).unwrap();
            format!("{lr}: on {}/{} off {}/{}", on.runs.diverged_runs(), cfg.runs, off.runs.diverged_runs(), cfg.runs)
        })
        .collect();
    let sep = r.separating_rates();
    ensure(
        !sep.is_empty() && cfg.runs == 5 && cfg.layers == 5 && cfg.width == 4,
        format!("separating rates {sep:?}; diverged runs per rate [{}]", summary.join(", ")),
    )
}

fn c6_degeneracy() -> Check {
    let partition = ToyPartitionSpec::default();
    let data = gen_toy_dataset(&partition, 0).map_err(|e| e.to_string())?.data;
    let (mut on_max, mut off_min) = (0.0f64, 1.0f64);
    let mut ok = true;
    for k in [2, 4] {
        for width in [2, 4] {
            for layers in 2..=6 {
                for bn in [true, false] {
                    let mut net = build_mlp(2, layers, width, ActivationSpec::Maxout { k }, bn, None).unwrap();
                    net.init_params(&mut SeededRng::new(derive_seed(0, STREAM_INIT)), &InitScheme::toy())
                        .unwrap();
                    if bn {
                        net.calibrate_batchnorm(&data.train.x).unwrap();
                    }
                    let frac = census(&net, &data.train.x).unwrap().degenerate_fraction();
                    if bn {
                        on_max = on_max.max(frac);
                        ok &= frac < 0.05;
                    } else if layers >= 4 {
                        off_min = off_min.min(frac);
                        ok &= frac > 0.5;
                    }
                }
            }
        }
    }
    ensure(
        ok,
        format!("BN-on max degenerate fraction {on_max:.3} (<0.05); BN-off L>=4 min {off_min:.3} (>0.5)"),
    )
}

fn c7_ablation() -> Check {
    let r = ablation(&AblationConfig::default()).map_err(|e| e.to_string())?;
    let errs: Vec<String> = r
        .rows
        .iter()
        .map(|row| format!("{} {:.4}", row.variant.name(), row.runs.mean_test_error))
        .collect();
    ensure(r.ordering_holds(), errs.join(", "))
}

fn c8_mnist() -> Check {
    let paths = MnistPaths::in_dir(&mnist_dir());
    let t = Instant::now();
    let cfg = MnistMiniConfig::new(paths.clone());
    let r = mnist_mini(&cfg).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let small = MnistMiniConfig {
        train_limit: Some(300),
        test_limit: Some(200),
        train: TrainConfig {
            schedule: vec![(0.1, 1)],
            ..cfg.train.clone()
        },
        ..MnistMiniConfig::new(paths)
    };
    let a = mnist_mini(&small).map_err(|e| e.to_string())?;
    let b = mnist_mini(&small).map_err(|e| e.to_string())?;
    let deterministic = a.report == b.report && a.network == b.network;
    let err = r.report.final_test_error;
    ensure(
        err <= 0.03 && r.report.epochs.len() <= 11 && deterministic && secs < 1800.0,
        format!(
            "test error {err:.4} after {} epochs on {} training images ({} test), {secs:.0}s, deterministic {deterministic}",
            cfg.train.epochs(),
            r.train_examples,
            r.test_examples
        ),
    )
}

fn cli_twice(args: &[&str], config: &str, extra: &[&str]) -> std::result::Result<Vec<(String, Vec<u8>)>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, config).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for attempt in ["a", "b"] {
        let out = dir.path().join(attempt);
        let mut argv: Vec<String> = vec!["plrlab".into()];
        argv.extend(args.iter().map(|s| s.to_string()));
        argv.extend([
            "--config".into(),
            cfg.display().to_string(),
            "--out".into(),
            out.display().to_string(),
        ]);
        argv.extend(extra.iter().map(|s| s.to_string()));
        let code = plrlab::cli::run_from(argv);
        if code != 0 {
            return Err(format!("{args:?} exited {code}"));
        }
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .map_err(|e| e.to_string())?
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    let (a, b) = (&outputs[0], &outputs[1]);
    if a != b {
        let differing: Vec<&str> = a
            .iter()
            .zip(b)
            .filter(|(x, y)| x != y)
            .map(|(x, _)| x.0.as_str())
            .collect();
        return Err(format!("{args:?} differs in {differing:?}"));
    }
    Ok(outputs.swap_remove(0))
}

fn c9_determinism() -> Check {
    let dir = mnist_dir();
    let mnist_flag = dir.display().to_string();
    let runs: Vec<(&[&str], &str, Vec<&str>)> = vec![
        (
            &["toy-sweep"],
            "seed = 3\n[train]\nschedule = 0.0005:2\n[sweep]\nwidths = 2\nlayers = 2, 4\nactivations = relu, maxout4\nruns = 2\ngrid_resolution = 64\n",
            vec![],
        ),
        (&["regions"], "seed = 5\n[regions]\nlayers = 3\nactivation = maxout2\nresolution = 80\n", vec![]),
        (
            &["illcond"],
            "[illcond]\nrates = 0.01, 1\nruns = 2\nepochs = 2\n",
            vec![],
        ),
        (&["ablation"], "[train]\nschedule = 0.0005:2\n[ablation]\nruns = 2\nlayers = 2\n", vec![]),
        (
            &["train-mim"],
            "[train]\nschedule = 0.1:1\n[mnist]\ntrain_limit = 200\ntest_limit = 100\n",
            vec!["--mnist-dir", mnist_flag.as_str()],
        ),
    ];
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    for (args, config, extra) in runs {
        match cli_twice(args, config, &extra) {
            Ok(files) => {
                let kinds: Vec<&str> = files.iter().map(|(n, _)| n.rsplit('.').next().unwrap()).collect();
                let csv = kinds.iter().filter(|k| **k == "csv").count();
                let ppm = kinds.iter().filter(|k| **k == "ppm").count();
                summary.push(format!("{} ({csv} csv, {ppm} ppm)", args[0]));
            }
            Err(e) => failures.push(e),
        }
    }
    ensure(
        failures.is_empty(),
        format!("identical: {}{}", summary.join(", "), if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("gradient oracle suite", c1_gradients),
        ("batch-norm moment invariant", c2_batchnorm_moments),
        ("region partition, affinity and bound", c3_regions),
        ("toy study", c4_toy_study),
        ("ill-conditioning sweep", c5_illconditioning),
        ("degeneracy at initialisation", c6_degeneracy),
        ("ablation ordering", c7_ablation),
        ("mini maxout-in-maxout on MNIST", c8_mnist),
        ("byte-identical re-runs", c9_determinism),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let verdict = check();
        let secs = t.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {id} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
