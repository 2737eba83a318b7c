//! Command-line front end.
//!
//! Exit status: 0 on success, 2 for configuration, input-file and format
//! problems, 3 for runtime failures (numeric, dimension, generation, a failed
//! gradient check). Every file written is printed on standard output.
//!
//! Settings are resolved as flag > config file > built-in default.

pub mod config;
pub mod raster;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiments::{
    ablation, illcond_sweep, mnist_mini_observed, toy_sweep_with_progress, AblationConfig, IllCondConfig,
    MnistMiniConfig, MnistPaths, SweepConfig, ToyPartitionSpec, TOY_HALF_WIDTH,
};
use crate::gradcheck::{run_gradcheck, GradCheckConfig};
use crate::layers::ActivationSpec;
use crate::network::{build_mlp, load_snapshot, save_snapshot, InitScheme, NetworkSpec};
use crate::numerics::{derive_seed, SeededRng};
use crate::regions::{affinity_check, census_of_map, decision_raster, maxout_region_bound, Affinity, Bounds2};
use crate::training::{TrainConfig, STREAM_INIT};

use self::config::{parse_dropout, parse_stage, parse_switch, ConfigFile};
use self::raster::{emit_raster, region_table, IdGrid, PaletteMode};

pub use self::raster::{colour, encode_ppm};

/// Worker-count cap for parallel sweeps; 0 or unset means one per core.
pub const THREADS_ENV: &str = "PLRLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "plrlab", version, about = "Piecewise-linear network experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Config file (`key = value` lines with `[section]` headers).
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, short = 'o', default_value = "plrlab-out")]
    pub out: PathBuf,
    /// Overrides the config `seed` key.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Allow replacing existing output files.
    #[arg(long)]
    pub force: bool,
    /// Progress on standard error; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Args)]
pub struct MnistArgs {
    /// Directory holding the four standard IDX files (optionally gzipped).
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    #[arg(long)]
    pub train_images: Option<PathBuf>,
    #[arg(long)]
    pub train_labels: Option<PathBuf>,
    #[arg(long)]
    pub test_images: Option<PathBuf>,
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Architecture grid on the 2-D toy task.
    ToySweep(Common),
    /// Learning-rate sweep with and without batch norm.
    Illcond(Common),
    /// Activation / batch-norm ablation on the toy task.
    Ablation(Common),
    /// Reduced-width maxout-in-maxout network on MNIST.
    TrainMim {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        mnist: MnistArgs,
    },
    /// Linear-region census and rasters of a 2-D network.
    Regions {
        #[command(flatten)]
        common: Common,
        /// Analyse a saved network instead of a seeded random one.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Finite-difference check of every layer's backward pass.
    Gradcheck(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::ToySweep(c) | Command::Illcond(c) | Command::Ablation(c) | Command::Gradcheck(c) => c,
            Command::TrainMim { common, .. } | Command::Regions { common, .. } => common,
        }
    }
}

/// Collects outputs under one directory, refusing to clobber without `force`.
struct Outputs {
    dir: PathBuf,
    force: bool,
    written: Vec<PathBuf>,
}

impl Outputs {
    /// Creates the directory and checks every planned file up front.
    fn prepare(common: &Common, names: &[String]) -> Result<Self> {
        std::fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
        if !common.force {
            for n in names {
                let p = common.out.join(n);
                if p.exists() {
                    return Err(Error::Config(format!(
                        "{} exists; pass --force to overwrite",
                        p.display()
                    )));
                }
            }
        }
        Ok(Outputs {
            dir: common.out.clone(),
            force: common.force,
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        if !self.force && p.exists() {
            return Err(Error::Config(format!("{} exists; pass --force to overwrite", p.display())));
        }
        Ok(p)
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name)?;
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        self.written.push(p);
        Ok(())
    }

    fn raster(&mut self, name: &str, grid: IdGrid<'_>, mode: PaletteMode) -> Result<()> {
        let p = self.path(name)?;
        emit_raster(grid, mode, &p)?;
        self.written.push(p);
        Ok(())
    }

    fn snapshot(&mut self, name: &str, net: &NetworkSpec) -> Result<()> {
        let p = self.path(name)?;
        save_snapshot(net, &p)?;
        self.written.push(p);
        Ok(())
    }
}

/// Result of a successful command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    /// Exit status; nonzero only when the command ran but its check failed.
    pub status: i32,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status. Diagnostics go to standard error.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("plrlab: {e}");
        return e.exit_code();
    }
    match run(&cli.command) {
        Ok(out) => {
            for p in &out.written {
                println!("{}", p.display());
            }
            out.status
        }
        Err(e) => {
            eprintln!("plrlab: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
    if n > 0 {
        // a pool may already exist when several commands run in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs one command.
pub fn run(cmd: &Command) -> Result<Outcome> {
    let common = cmd.common();
    let file = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let seed = match common.seed {
        Some(s) => {
            // still consume the key so it is not reported as unknown
            file.get::<u64>("", "seed")?;
            s
        }
        None => file.get::<u64>("", "seed")?.unwrap_or(0),
    };
    match cmd {
        Command::ToySweep(c) => toy_sweep_cmd(c, &file, seed),
        Command::Illcond(c) => illcond_cmd(c, &file, seed),
        Command::Ablation(c) => ablation_cmd(c, &file, seed),
        Command::TrainMim { common, mnist } => train_mim_cmd(common, mnist, &file, seed),
        Command::Regions { common, snapshot } => regions_cmd(common, snapshot.as_deref(), &file, seed),
        Command::Gradcheck(c) => gradcheck_cmd(c, &file, seed),
    }
}

/// `relu`, `prelu`, `lrelu` / `lrelu:ALPHA`, `maxoutK` / `maxout:K`.
pub fn parse_activation(s: &str) -> Option<ActivationSpec> {
    let act = match s {
        "relu" => ActivationSpec::Relu,
        "prelu" => ActivationSpec::PRelu,
        "lrelu" => ActivationSpec::LeakyRelu { alpha: 0.01 },
        _ => {
            if let Some(a) = s.strip_prefix("lrelu:") {
                ActivationSpec::LeakyRelu { alpha: a.parse().ok()? }
            } else {
                let k = s.strip_prefix("maxout")?;
                ActivationSpec::Maxout {
                    k: k.strip_prefix(':').unwrap_or(k).parse().ok()?,
                }
            }
        }
    };
    act.validate().ok().map(|_| act)
}

fn activation_tag(a: &ActivationSpec) -> String {
    match a {
        ActivationSpec::Maxout { k } => format!("maxout{k}"),
        other => other.name().to_string(),
    }
}

fn read_train(file: &ConfigFile, mut t: TrainConfig, seed: u64, with_schedule: bool) -> Result<TrainConfig> {
    t.seed = seed;
    if let Some(v) = file.get("train", "batch_size")? {
        t.batch_size = v;
    }
    if with_schedule {
        if let Some(v) = file.list("train", "schedule", "a list of rate:epochs stages", parse_stage)? {
            t.schedule = v;
        }
    }
    if let Some(v) = file.get("train", "momentum")? {
        t.momentum = v;
    }
    if let Some(v) = file.get("train", "weight_decay")? {
        t.weight_decay = v;
    }
    if let Some(v) = file.with("train", "eval_train_each_epoch", "on or off", parse_switch)? {
        t.eval_train_each_epoch = v;
    }
    Ok(t)
}

fn read_init(file: &ConfigFile, mut init: InitScheme) -> Result<InitScheme> {
    if let Some(v) = file.list("init", "scales", "a list of numbers", |s| s.parse().ok())? {
        init.scales = v;
    }
    if let Some(v) = file.get("init", "bias_scale")? {
        init.bias_scale = v;
    }
    init.validate()?;
    Ok(init)
}

fn read_partition(file: &ConfigFile, seed: u64) -> Result<ToyPartitionSpec> {
    let d = ToyPartitionSpec::default();
    let p = ToyPartitionSpec {
        seed: file.get("partition", "seed")?.unwrap_or(seed),
        chords: file.get("partition", "chords")?.unwrap_or(d.chords),
        arcs: file.get("partition", "arcs")?.unwrap_or(d.arcs),
    };
    p.validate()?;
    Ok(p)
}

fn say(common: &Common, msg: impl FnOnce() -> String) {
    if common.verbose > 0 {
        eprintln!("{}", msg());
    }
}

fn toy_sweep_cmd(common: &Common, file: &ConfigFile, seed: u64) -> Result<Outcome> {
    let d = SweepConfig::default();
    let cfg = SweepConfig {
        widths: file.list("sweep", "widths", "a list of widths", |s| s.parse().ok())?.unwrap_or(d.widths),
        layers: file.list("sweep", "layers", "a list of depths", |s| s.parse().ok())?.unwrap_or(d.layers),
        activations: file
            .list("sweep", "activations", "a list of activations", parse_activation)?
            .unwrap_or(d.activations),
        bn: file.list("sweep", "bn", "a list of on/off", parse_switch)?.unwrap_or(d.bn),
        dropout: file
            .list("sweep", "dropout", "a list of rates or off", parse_dropout)?
            .unwrap_or(d.dropout),
        runs: file.get("sweep", "runs")?.unwrap_or(d.runs),
        grid_resolution: file.get("sweep", "grid_resolution")?.unwrap_or(d.grid_resolution),
        train: read_train(file, d.train, seed, true)?,
        init: read_init(file, d.init)?,
        partition: read_partition(file, seed)?,
    };
    file.finish()?;
    cfg.validate()?;
    if cfg.grid_resolution == 0 {
        return Err(Error::Config("grid_resolution must be positive".into()));
    }
    let mut names = vec!["toy_sweep.csv".to_string(), "toy_sweep_census.csv".to_string()];
    for a in &cfg.activations {
        let t = activation_tag(a);
        names.extend([
            format!("best_{t}_classes.ppm"),
            format!("best_{t}_regions.ppm"),
            format!("best_{t}_regions.csv"),
            format!("best_{t}.plr"),
        ]);
    }
    let mut out = Outputs::prepare(common, &names)?;
    let total = cfg.cells().len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let report = toy_sweep_with_progress(&cfg, |c| {
        let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        say(common, || {
            format!("[{n}/{total}] {} test_err={:.4}", c.cell.csv_prefix(), c.runs.mean_test_error)
        });
    })?;
    out.text("toy_sweep.csv", &report.to_csv())?;
    out.text("toy_sweep_census.csv", &report.census_csv())?;
    for a in &cfg.activations {
        let best = report.best(|c| c.activation == *a).expect("activation present in grid");
        let t = activation_tag(a);
        let r = best.raster(cfg.grid_resolution)?;
        let (w, h) = (r.width, r.height);
        out.raster(&format!("best_{t}_classes.ppm"), IdGrid { width: w, height: h, ids: &r.classes }, PaletteMode::Classes)?;
        out.raster(&format!("best_{t}_regions.ppm"), IdGrid { width: w, height: h, ids: r.region_ids() }, PaletteMode::Hashed)?;
        out.text(&format!("best_{t}_regions.csv"), &region_table(&r.regions))?;
        out.snapshot(&format!("best_{t}.plr"), &best.best_network)?;
    }
    Ok(Outcome {
        written: out.written,
        status: 0,
    })
}

fn illcond_cmd(common: &Common, file: &ConfigFile, seed: u64) -> Result<Outcome> {
    let d = IllCondConfig::default();
    let cfg = IllCondConfig {
        rates: file.list("illcond", "rates", "a list of rates", |s| s.parse().ok())?.unwrap_or(d.rates),
        runs: file.get("illcond", "runs")?.unwrap_or(d.runs),
        epochs: file.get("illcond", "epochs")?.unwrap_or(d.epochs),
        layers: file.get("illcond", "layers")?.unwrap_or(d.layers),
        width: file.get("illcond", "width")?.unwrap_or(d.width),
        activation: file
            .with("illcond", "activation", "an activation", parse_activation)?
            .unwrap_or(d.activation),
        base: read_train(file, d.base, seed, false)?,
        init: read_init(file, d.init)?,
        partition: read_partition(file, seed)?,
    };
    file.finish()?;
    cfg.validate()?;
    let mut out = Outputs::prepare(common, &["illcond.csv".to_string()])?;
    let report = illcond_sweep(&cfg)?;
    for row in &report.rows {
        say(common, || {
            format!(
                "lr={} bn={} diverged={}/{}",
                row.lr,
                row.bn,
                row.runs.diverged_runs(),
                row.runs.runs.len()
            )
        });
    }
    say(common, || format!("separating rates: {:?}", report.separating_rates()));
    out.text("illcond.csv", &report.to_csv())?;
    Ok(Outcome {
        written: out.written,
        status: 0,
    })
}

fn ablation_cmd(common: &Common, file: &ConfigFile, seed: u64) -> Result<Outcome> {
    let d = AblationConfig::default();
    let cfg = AblationConfig {
        layers: file.get("ablation", "layers")?.unwrap_or(d.layers),
        width: file.get("ablation", "width")?.unwrap_or(d.width),
        k: file.get("ablation", "k")?.unwrap_or(d.k),
        dropout: file
            .with("ablation", "dropout", "a rate or off", parse_dropout)?
            .unwrap_or(d.dropout),
        runs: file.get("ablation", "runs")?.unwrap_or(d.runs),
        train: read_train(file, d.train, seed, true)?,
        init: read_init(file, d.init)?,
        partition: read_partition(file, seed)?,
    };
    file.finish()?;
    let mut out = Outputs::prepare(common, &["ablation.csv".to_string()])?;
    let report = ablation(&cfg)?;
    say(common, || format!("ordering holds: {}", report.ordering_holds()));
    out.text("ablation.csv", &report.to_csv())?;
    Ok(Outcome {
        written: out.written,
        status: 0,
    })
}

fn mnist_paths(args: &MnistArgs, file: &ConfigFile) -> Result<MnistPaths> {
    let dir = match &args.mnist_dir {
        Some(d) => {
            file.get::<PathBuf>("mnist", "dir")?;
            d.clone()
        }
        None => file.get("mnist", "dir")?.unwrap_or_else(|| PathBuf::from("data/mnist-subset")),
    };
    let mut p = MnistPaths::in_dir(&dir);
    let slots: [(&Option<PathBuf>, &str, &mut PathBuf); 4] = [
        (&args.train_images, "train_images", &mut p.train_images),
        (&args.train_labels, "train_labels", &mut p.train_labels),
        (&args.test_images, "test_images", &mut p.test_images),
        (&args.test_labels, "test_labels", &mut p.test_labels),
    ];
    for (flag, key, slot) in slots {
        let from_file: Option<PathBuf> = file.get("mnist", key)?;
        if let Some(v) = flag.clone().or(from_file) {
            *slot = v;
        }
    }
    Ok(p)
}

fn train_mim_cmd(common: &Common, args: &MnistArgs, file: &ConfigFile, seed: u64) -> Result<Outcome> {
    let d = MnistMiniConfig::new(mnist_paths(args, file)?);
    let limit = |key: &str, default: Option<usize>| -> Result<Option<usize>> {
        Ok(match file.raw("mnist", key) {
            None => default,
            Some(("all", _)) => None,
            Some(_) => Some(file.get("mnist", key)?.expect("key present")),
        })
    };
    let cfg = MnistMiniConfig {
        train_limit: limit("train_limit", d.train_limit)?,
        test_limit: limit("test_limit", d.test_limit)?,
        width_scale: file.get("mnist", "width_scale")?.unwrap_or(d.width_scale),
        k: file.get("mnist", "k")?.unwrap_or(d.k),
        dropout: file.get("mnist", "dropout")?.unwrap_or(d.dropout),
        train: read_train(file, d.train.clone(), seed, true)?,
        init: read_init(file, d.init.clone())?,
        paths: d.paths,
    };
    file.finish()?;
    let mut out = Outputs::prepare(common, &["train_mim.csv".to_string(), "mim.plr".to_string()])?;
    let mut log = String::from("epoch,lr,train_loss,train_err,test_err\n");
    let result = mnist_mini_observed(&cfg, &mut |e| {
        let train_err = e.train_error.map_or(String::new(), |v| v.to_string());
        writeln!(log, "{},{},{},{train_err},{}", e.epoch, e.learning_rate, e.train_loss, e.test_error).unwrap();
        say(common, || {
            format!("epoch {} lr={} loss={:.4} test_err={:.4}", e.epoch, e.learning_rate, e.train_loss, e.test_error)
        });
    })?;
    say(common, || {
        format!(
            "{} train / {} test examples, final test error {:.4}",
            result.train_examples, result.test_examples, result.report.final_test_error
        )
    });
    out.text("train_mim.csv", &log)?;
    out.snapshot("mim.plr", &result.network)?;
    Ok(Outcome {
        written: out.written,
        status: if result.report.non_finite { 3 } else { 0 },
    })
}

fn regions_cmd(common: &Common, snapshot: Option<&Path>, file: &ConfigFile, seed: u64) -> Result<Outcome> {
    let resolution: usize = file.get("regions", "resolution")?.unwrap_or(200);
    let half: f64 = file.get("regions", "half_width")?.unwrap_or(TOY_HALF_WIDTH);
    let trials: usize = file.get("regions", "affinity_trials")?.unwrap_or(8);
    let net = match snapshot {
        Some(p) => load_snapshot(p)?,
        None => {
            let layers = file.get("regions", "layers")?.unwrap_or(4);
            let width = file.get("regions", "width")?.unwrap_or(4);
            let act = file
                .with("regions", "activation", "an activation", parse_activation)?
                .unwrap_or(ActivationSpec::Maxout { k: 4 });
            let bn = file.with("regions", "bn", "on or off", parse_switch)?.unwrap_or(false);
            let init = read_init(file, InitScheme::uniform(1.0))?;
            let mut net = build_mlp(2, layers, width, act, bn, None)?;
            net.init_params(&mut SeededRng::new(derive_seed(seed, STREAM_INIT)), &init)?;
            net
        }
    };
    file.finish()?;
    if resolution == 0 || !(half > 0.0) {
        return Err(Error::Config("resolution and half_width must be positive".into()));
    }
    let names = ["regions.csv", "regions.ppm", "classes.ppm", "regions_summary.csv"].map(String::from);
    let mut out = Outputs::prepare(common, &names)?;
    let r = decision_raster(&net, Bounds2::square(half), resolution)?;
    let points = crate::regions::grid_points(Bounds2::square(half), resolution);
    let census = census_of_map(&net, &r.regions)?;
    let (mut affine, mut not_affine, mut inconclusive) = (0usize, 0usize, 0usize);
    let mut worst = 0.0f64;
    for (id, members) in r.regions.members.iter().enumerate() {
        if members.len() < 3 {
            continue;
        }
        let rows = points.select_rows(members);
        match affinity_check(&net, &rows, trials, derive_seed(seed, id as u64))? {
            Affinity::Affine { worst: w, .. } => {
                affine += 1;
                worst = worst.max(w);
            }
            Affinity::NotAffine { worst: w } => {
                not_affine += 1;
                worst = worst.max(w);
            }
            Affinity::Inconclusive => inconclusive += 1,
        }
    }
    let bound = maxout_bound_of(&net)?;
    let mut summary = String::from(
        "points,regions,degenerate_units,units,degenerate_fraction,affine_regions,not_affine_regions,inconclusive_regions,worst_affinity_residual,maxout_bound\n",
    );
    writeln!(
        summary,
        "{},{},{},{},{},{affine},{not_affine},{inconclusive},{worst},{}",
        r.regions.point_count(),
        census.region_count,
        census.degenerate_unit_count,
        census.units.len(),
        census.degenerate_fraction(),
        bound.map_or(String::new(), |b| b.to_string())
    )
    .unwrap();
    say(common, || format!("{} regions over {} grid points", census.region_count, r.regions.point_count()));
    out.text("regions.csv", &region_table(&r.regions))?;
    out.raster("regions.ppm", IdGrid { width: r.width, height: r.height, ids: r.region_ids() }, PaletteMode::Hashed)?;
    out.raster("classes.ppm", IdGrid { width: r.width, height: r.height, ids: &r.classes }, PaletteMode::Classes)?;
    out.text("regions_summary.csv", &summary)?;
    Ok(Outcome {
        written: out.written,
        status: if not_affine > 0 { 3 } else { 0 },
    })
}

/// `k^(L-1) k^n0` when every hidden node is maxout with one shared `k`.
fn maxout_bound_of(net: &NetworkSpec) -> Result<Option<num_bigint::BigUint>> {
    let ks: Vec<usize> = net
        .nodes()
        .iter()
        .filter_map(|n| match n.act {
            ActivationSpec::Maxout { k } => Some(k),
            _ => None,
        })
        .collect();
    if ks.len() != net.nodes().len() || ks.windows(2).any(|w| w[0] != w[1]) || ks.is_empty() {
        return Ok(None);
    }
    maxout_region_bound(ks.len() as u32, net.input_dims()[0] as u32, ks[0] as u32).map(Some)
}

fn gradcheck_cmd(common: &Common, file: &ConfigFile, seed: u64) -> Result<Outcome> {
    let d = GradCheckConfig::default();
    let cfg = GradCheckConfig {
        instances: file.get("gradcheck", "instances")?.unwrap_or(d.instances),
        eps: file.get("gradcheck", "eps")?.unwrap_or(d.eps),
        tolerance: file.get("gradcheck", "tolerance")?.unwrap_or(d.tolerance),
        floor: file.get("gradcheck", "floor")?.unwrap_or(d.floor),
        seed,
    };
    file.finish()?;
    let mut out = Outputs::prepare(common, &["gradcheck.csv".to_string()])?;
    let report = run_gradcheck(&cfg)?;
    let mut csv = String::from("layer,instances,max_rel_error,pass\n");
    for l in &report.layers {
        let pass = l.max_rel_error < report.tolerance;
        println!(
            "{:<16} {:>3} instances  max rel error {:.3e}  {}",
            l.kind.name(),
            l.instances,
            l.max_rel_error,
            if pass { "ok" } else { "FAIL" }
        );
        writeln!(csv, "{},{},{},{pass}", l.kind.name(), l.instances, l.max_rel_error).unwrap();
    }
    out.text("gradcheck.csv", &csv)?;
    Ok(Outcome {
        written: out.written,
        status: if report.passed() { 0 } else { 3 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_names() {
        assert_eq!(parse_activation("relu"), Some(ActivationSpec::Relu));
        assert_eq!(parse_activation("maxout4"), Some(ActivationSpec::Maxout { k: 4 }));
        assert_eq!(parse_activation("maxout:3"), Some(ActivationSpec::Maxout { k: 3 }));
        assert_eq!(parse_activation("lrelu:0.2"), Some(ActivationSpec::LeakyRelu { alpha: 0.2 }));
        assert_eq!(parse_activation("maxout1"), None);
        assert_eq!(parse_activation("tanh"), None);
        for a in [ActivationSpec::Relu, ActivationSpec::Maxout { k: 2 }, ActivationSpec::PRelu] {
            assert_eq!(parse_activation(&activation_tag(&a)), Some(a));
        }
    }
}
