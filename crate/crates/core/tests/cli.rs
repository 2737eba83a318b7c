//! Exit-status taxonomy and declared outputs of the command-line front end.

use std::path::{Path, PathBuf};

use plrlab::cli::run_from;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["plrlab"];
    argv.extend_from_slice(args);
    run_from(argv)
}

fn write_cfg(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gradcheck_passes_and_writes_its_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&["gradcheck", "--out", s(&out)]), 0);
    let csv = std::fs::read_to_string(out.join("gradcheck.csv")).unwrap();
    assert!(csv.starts_with("layer,instances,max_rel_error,pass\n"));
    assert_eq!(csv.lines().count(), 13);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn impossible_tolerance_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[gradcheck]\ninstances = 2\ntolerance = 1e-30\n");
    assert_eq!(run(&["gradcheck", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]), 3);
}

#[test]
fn missing_config_file_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.cfg");
    assert_eq!(run(&["toy-sweep", "--config", s(&missing), "--out", s(dir.path())]), 2);
}

#[test]
fn unknown_keys_and_bad_values_are_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        "[sweep]\nwidth = 4\n",
        "[sweep]\nwidths = 4, x\n",
        "[sweep]\nactivations = tanh\n",
        "[sweep]\nwidths =\n",
        "[train]\nbatch_size = -1\n",
        "[nonsense]\na = 1\n",
    ] {
        let cfg = write_cfg(dir.path(), body);
        assert_eq!(run(&["toy-sweep", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]), 2, "{body}");
    }
    let cfg = write_cfg(dir.path(), "[sweep]\nlayers = 0\n");
    assert_eq!(run(&["toy-sweep", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]), 2);
    let cfg = write_cfg(dir.path(), "[illcond]\nrates = 1, 0.1\n");
    assert_eq!(run(&["illcond", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]), 2);
}

#[test]
fn bad_arguments_are_exit_2() {
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["gradcheck", "--seed", "minus-one"]), 2);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_cfg(dir.path(), "[regions]\nresolution = 20\n");
    let args = ["regions", "--config", s(&cfg), "--out", s(&out)];
    assert_eq!(run(&args), 0);
    let before = std::fs::read(out.join("regions.ppm")).unwrap();
    assert_eq!(run(&args), 2);
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(run(&forced), 0);
    assert_eq!(std::fs::read(out.join("regions.ppm")).unwrap(), before);
}

#[test]
fn regions_outputs_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "seed = 1\n[regions]\nlayers = 2\nactivation = maxout2\nresolution = 30\n");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(run(&["regions", "--config", s(&cfg), "--out", s(&a)]), 0);
    assert_eq!(run(&["regions", "--config", s(&cfg), "--out", s(&b), "--seed", "1"]), 0);
    assert_eq!(run(&["regions", "--config", s(&cfg), "--out", s(&c), "--seed", "2"]), 0);
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "regions.ppm"), read(&b, "regions.ppm"));
    assert_ne!(read(&a, "regions.csv"), read(&c, "regions.csv"));

    let ppm = read(&a, "regions.ppm");
    let header = b"P6\n30 30\n255\n";
    assert_eq!(&ppm[..header.len()], header);
    assert_eq!(ppm.len(), header.len() + 30 * 30 * 3);

    let table = String::from_utf8(read(&a, "regions.csv")).unwrap();
    let points: usize = table.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(points, 900);
    let summary = String::from_utf8(read(&a, "regions_summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[6], "0", "no region may fail the affinity check");
    assert_eq!(row[9], "8");
}

#[test]
fn regions_from_a_snapshot() {
    use plrlab::layers::ActivationSpec;
    use plrlab::network::{build_mlp, save_snapshot, InitScheme};
    use plrlab::numerics::SeededRng;
    let dir = tempfile::tempdir().unwrap();
    let mut net = build_mlp(2, 2, 3, ActivationSpec::Relu, false, None).unwrap();
    net.init_params(&mut SeededRng::new(4), &InitScheme::uniform(1.0)).unwrap();
    let snap = dir.path().join("net.plr");
    save_snapshot(&net, &snap).unwrap();
    let cfg = write_cfg(dir.path(), "[regions]\nresolution = 16\n");
    let out = dir.path().join("out");
    assert_eq!(run(&["regions", "--snapshot", s(&snap), "--config", s(&cfg), "--out", s(&out)]), 0);
    assert!(out.join("classes.ppm").exists());
    std::fs::write(&snap, b"garbage").unwrap();
    assert_eq!(run(&["regions", "--snapshot", s(&snap), "--out", s(&dir.path().join("o2"))]), 2);
}

#[test]
fn small_toy_sweep_writes_declared_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[train]\nschedule = 0.0005:1\n[sweep]\nwidths = 2\nlayers = 2\nactivations = relu, maxout2\nbn = on\ndropout = off\nruns = 2\ngrid_resolution = 24\n",
    );
    let out = dir.path().join("runs");
    assert_eq!(run(&["toy-sweep", "--config", s(&cfg), "--out", s(&out)]), 0);
    let csv = std::fs::read_to_string(out.join("toy_sweep.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "activation,k,layers,width,bn,dropout,run,train_err,test_err,regions,diverged"
    );
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
    for name in ["toy_sweep_census.csv", "best_relu_classes.ppm", "best_maxout2_regions.ppm", "best_maxout2_regions.csv", "best_relu.plr"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn missing_mnist_files_are_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(run(&["train-mim", "--mnist-dir", s(&empty), "--out", s(&dir.path().join("o"))]), 2);
}

#[test]
fn illcond_and_ablation_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[illcond]\nrates = 0.01, 10\nruns = 1\nepochs = 1\nlayers = 2\n");
    let out = dir.path().join("ill");
    assert_eq!(run(&["illcond", "--config", s(&cfg), "--out", s(&out)]), 0);
    let csv = std::fs::read_to_string(out.join("illcond.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "lr,bn,run,train_err,test_err,diverged");
    assert_eq!(csv.lines().count(), 5);

    let cfg = write_cfg(dir.path(), "[train]\nschedule = 0.0005:1\n[ablation]\nruns = 1\nlayers = 2\n");
    let out = dir.path().join("abl");
    assert_eq!(run(&["ablation", "--config", s(&cfg), "--out", s(&out)]), 0);
    assert_eq!(std::fs::read_to_string(out.join("ablation.csv")).unwrap().lines().count(), 5);
}
