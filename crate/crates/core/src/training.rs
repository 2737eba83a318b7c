//! SGD with momentum and weight decay, epoch loops, and multi-run aggregation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::layers::{softmax_xent, DropoutSpec};
use crate::network::{InitScheme, NetworkSpec, ParamKind};
use crate::numerics::{derive_seed, SeededRng, Tensor};

/// Seed streams derived from a run seed with [`derive_seed`].
pub const STREAM_INIT: u64 = 1;
pub const STREAM_TRAIN: u64 = 2;

/// Inputs with integer class labels; the first axis indexes examples.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub x: Tensor,
    pub y: Vec<usize>,
}

impl LabeledSet {
    pub fn new(x: Tensor, y: Vec<usize>) -> Result<Self> {
        if x.rank() < 2 || x.shape()[0] != y.len() {
            return Err(Error::dim(format!(
                "{} labels for inputs of shape {:?}",
                y.len(),
                x.shape()
            )));
        }
        Ok(LabeledSet { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledSet {
        LabeledSet {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Fraction of examples carrying each class label.
    pub fn class_fractions(&self, classes: usize) -> Vec<f64> {
        let mut counts = vec![0usize; classes];
        for &l in &self.y {
            if l < classes {
                counts[l] += 1;
            }
        }
        counts.iter().map(|&c| c as f64 / self.len().max(1) as f64).collect()
    }

    /// Error of always predicting the most frequent class.
    pub fn chance_error(&self, classes: usize) -> f64 {
        1.0 - self.class_fractions(classes).into_iter().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: LabeledSet,
    pub test: LabeledSet,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Piecewise-constant learning rate: `(rate, epochs)` segments in order.
    pub schedule: Vec<(f64, usize)>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Replaces the rate of every dropout layer in the network when set.
    pub dropout: Option<f64>,
    /// Evaluate the full training set after every epoch; otherwise only
    /// before the first and after the last.
    pub eval_train_each_epoch: bool,
}

impl TrainConfig {
    /// Toy-study recipe: batches of 100, 0.0005 for 20 epochs then 0.0001
    /// for 20, momentum 0.9, weight decay 0.0001.
    pub fn toy() -> Self {
        TrainConfig {
            batch_size: 100,
            schedule: vec![(0.0005, 20), (0.0001, 20)],
            momentum: 0.9,
            weight_decay: 0.0001,
            seed: 0,
            dropout: None,
            eval_train_each_epoch: true,
        }
    }

    pub fn epochs(&self) -> usize {
        self.schedule.iter().map(|&(_, e)| e).sum()
    }

    /// Learning rate of a 0-based epoch.
    pub fn rate_at(&self, epoch: usize) -> f64 {
        let mut seen = 0;
        for &(lr, n) in &self.schedule {
            seen += n;
            if epoch < seen {
                return lr;
            }
        }
        0.0
    }

    pub fn validate(&self, net: &NetworkSpec, train_len: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > train_len {
            return Err(Error::Config(format!(
                "batch size {} for a training set of {train_len}",
                self.batch_size
            )));
        }
        if net.has_batchnorm() && self.batch_size < 2 {
            return Err(Error::Config("batch norm needs batches of at least 2".into()));
        }
        if self
            .schedule
            .iter()
            .any(|&(lr, _)| !(lr >= 0.0) || !lr.is_finite())
            || !(self.momentum >= 0.0)
            || !(self.weight_decay >= 0.0)
        {
            return Err(Error::Config("rates must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, Default)]
pub struct SgdState {
    velocity: Vec<Tensor>,
}

impl SgdState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }
}

/// `v <- momentum * v - lr * (g + wd * p)`, then `p <- p + v`.
///
/// Weight decay applies to [`ParamKind::Weight`] tensors only.
pub fn sgd_step(
    params: Vec<(ParamKind, &mut Tensor)>,
    grads: &[Tensor],
    state: &mut SgdState,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dim(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    if state.velocity.is_empty() {
        state.velocity = params.iter().map(|(_, p)| Tensor::zeros(p.shape())).collect();
    }
    for (((kind, p), g), v) in params.into_iter().zip(grads).zip(&mut state.velocity) {
        if p.shape() != g.shape() || v.shape() != p.shape() {
            return Err(Error::dim(format!(
                "parameter {:?}, gradient {:?}, velocity {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            )));
        }
        let wd = if kind == ParamKind::Weight { weight_decay } else { 0.0 };
        for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = momentum * *vv - lr * (gv + wd * *pv);
            *pv += *vv;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 0 is the evaluation before any update.
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean minibatch loss over the epoch (0 for the initial record).
    pub train_loss: f64,
    /// `None` when the training set was not evaluated after this epoch.
    pub train_error: Option<f64>,
    pub test_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub epochs: Vec<EpochRecord>,
    pub initial_train_error: f64,
    pub final_train_error: f64,
    pub final_test_error: f64,
    /// Error of the constant majority-class predictor on the training set.
    pub chance_error: f64,
    /// A loss or logit became non-finite; training stopped there.
    pub non_finite: bool,
    pub diverged: bool,
}

/// Absolute margin below the starting error that a run must reach to count as converged.
pub const DIVERGENCE_MARGIN: f64 = 0.02;

impl RunReport {
    /// The error a run has to beat: the measured initial error, or the
    /// majority-class error when that is lower. A network at initialisation
    /// that predicts the minority class and then collapses onto the majority
    /// class has made no progress.
    pub fn reference_error(&self) -> f64 {
        self.initial_train_error.min(self.chance_error)
    }

    /// Drop in training error from the first to the last evaluation.
    pub fn train_error_drop(&self) -> f64 {
        self.initial_train_error - self.final_train_error
    }
}

/// 0-1 error of argmax predictions; ties go to the lowest class, non-finite rows count as wrong.
pub fn classification_error(net: &NetworkSpec, set: &LabeledSet) -> Result<f64> {
    const CHUNK: usize = 1000;
    let n = set.len();
    if n == 0 {
        return Err(Error::domain("error of an empty set"));
    }
    let mut wrong = 0usize;
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(CHUNK) {
        let x = if chunk.len() == n { set.x.clone() } else { set.x.select_rows(chunk) };
        let logits = net.logits(&x)?;
        for (row, &i) in logits.data().chunks_exact(net.classes()).zip(chunk) {
            if argmax(row).is_none_or(|p| p != set.y[i]) {
                wrong += 1;
            }
        }
    }
    Ok(wrong as f64 / n as f64)
}

/// Index of the largest value, lowest index on ties; `None` if any value is not finite.
pub fn argmax(row: &[f64]) -> Option<usize> {
    if row.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    Some(best)
}

fn apply_dropout_override(net: &mut NetworkSpec, p: Option<f64>) -> Result<()> {
    if let Some(p) = p {
        let d = DropoutSpec::new(p)?;
        for node in net.nodes_mut() {
            if node.dropout.is_some() {
                node.dropout = Some(d);
            }
        }
    }
    Ok(())
}

/// Trains `net` in place; see [`RunReport`] for what is recorded.
///
/// Minibatches are drawn from a per-epoch shuffle seeded by `cfg.seed`. A
/// non-finite loss stops training and marks the run diverged instead of
/// failing.
pub fn train(net: &mut NetworkSpec, data: &Dataset, cfg: &TrainConfig) -> Result<RunReport> {
    train_observed(net, data, cfg, &mut |_| {})
}

/// [`train`], handing every epoch record to `observer` as it is produced.
pub fn train_observed(
    net: &mut NetworkSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<RunReport> {
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::Config("training and test sets must be nonempty".into()));
    }
    cfg.validate(net, data.train.len())?;
    apply_dropout_override(net, cfg.dropout)?;
    let mut rng = SeededRng::new(derive_seed(cfg.seed, STREAM_TRAIN));
    let mut sgd = SgdState::new();
    let initial_train_error = classification_error(net, &data.train)?;
    let mut epochs = vec![EpochRecord {
        epoch: 0,
        learning_rate: 0.0,
        train_loss: 0.0,
        train_error: Some(initial_train_error),
        test_error: classification_error(net, &data.test)?,
    }];
    observer(&epochs[0]);
    let mut non_finite = false;
    let n = data.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    'epochs: for epoch in 0..cfg.epochs() {
        let lr = cfg.rate_at(epoch);
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < 2 && net.has_batchnorm() {
                continue;
            }
            let b = data.train.subset(batch);
            let (logits, cache) = net.forward_train(&b.x, &mut rng)?;
            let (loss, dlogits) = softmax_xent(&logits, &b.y)?;
            if !loss.is_finite() {
                non_finite = true;
                break 'epochs;
            }
            let grads = net.backward(&cache, &dlogits)?;
            sgd_step(net.params_mut(), &grads.params, &mut sgd, lr, cfg.momentum, cfg.weight_decay)?;
            loss_sum += loss;
            batches += 1;
        }
        let last_epoch = epoch + 1 == cfg.epochs();
        let train_error = if cfg.eval_train_each_epoch || last_epoch {
            Some(classification_error(net, &data.train)?)
        } else {
            None
        };
        let test_error = classification_error(net, &data.test)?;
        epochs.push(EpochRecord {
            epoch: epoch + 1,
            learning_rate: lr,
            train_loss: loss_sum / batches.max(1) as f64,
            train_error,
            test_error,
        });
        observer(epochs.last().expect("just pushed"));
        if !net.params().iter().all(|(_, t)| t.is_finite()) {
            non_finite = true;
            break;
        }
    }
    let last = epochs.last().expect("initial record");
    let final_train_error = match last.train_error {
        Some(e) => e,
        None => classification_error(net, &data.train)?,
    };
    let mut report = RunReport {
        initial_train_error,
        final_train_error,
        final_test_error: last.test_error,
        chance_error: data.train.chance_error(data.classes),
        non_finite,
        diverged: false,
        epochs,
    };
    report.diverged =
        non_finite || report.final_train_error >= report.reference_error() - DIVERGENCE_MARGIN;
    Ok(report)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiRunReport {
    pub runs: Vec<RunReport>,
    pub mean_train_error: f64,
    pub std_train_error: f64,
    pub mean_test_error: f64,
    pub std_test_error: f64,
}

impl MultiRunReport {
    pub fn from_runs(runs: Vec<RunReport>) -> Self {
        let train: Vec<f64> = runs.iter().map(|r| r.final_train_error).collect();
        let test: Vec<f64> = runs.iter().map(|r| r.final_test_error).collect();
        let (mean_train_error, std_train_error) = mean_std(&train);
        let (mean_test_error, std_test_error) = mean_std(&test);
        MultiRunReport {
            runs,
            mean_train_error,
            std_train_error,
            mean_test_error,
            std_test_error,
        }
    }

    pub fn diverged_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.diverged).count()
    }

    pub fn all_diverged(&self) -> bool {
        self.diverged_runs() == self.runs.len()
    }
}

/// One finished run together with its trained network.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub network: NetworkSpec,
    pub data: Dataset,
}

/// Runs `n_runs` independent trainings; run `i` uses seed `cfg.seed + i` for
/// initialisation, data sampling and minibatch order. Runs execute on the
/// rayon pool and are returned in run order.
pub fn multi_run_outcomes<S, D>(
    spec_builder: S,
    dataset_builder: D,
    init: &InitScheme,
    cfg: &TrainConfig,
    n_runs: usize,
) -> Result<Vec<RunOutcome>>
where
    S: Fn() -> Result<NetworkSpec> + Sync,
    D: Fn(u64) -> Result<Dataset> + Sync,
{
    if n_runs == 0 {
        return Err(Error::Config("need at least one run".into()));
    }
    (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i as u64);
            let data = dataset_builder(seed)?;
            let mut net = spec_builder()?;
            net.init_params(&mut SeededRng::new(derive_seed(seed, STREAM_INIT)), init)?;
            let run_cfg = TrainConfig {
                seed,
                ..cfg.clone()
            };
            let report = train(&mut net, &data, &run_cfg)?;
            Ok(RunOutcome {
                report,
                network: net,
                data,
            })
        })
        .collect()
}

pub fn multi_run<S, D>(
    spec_builder: S,
    dataset_builder: D,
    init: &InitScheme,
    cfg: &TrainConfig,
    n_runs: usize,
) -> Result<MultiRunReport>
where
    S: Fn() -> Result<NetworkSpec> + Sync,
    D: Fn(u64) -> Result<Dataset> + Sync,
{
    let outcomes = multi_run_outcomes(spec_builder, dataset_builder, init, cfg, n_runs)?;
    Ok(MultiRunReport::from_runs(
        outcomes.into_iter().map(|o| o.report).collect(),
    ))
}
