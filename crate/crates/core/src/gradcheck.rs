//! Central-difference verification of every layer's backward pass.
//!
//! Each instance draws a random layer, input and upstream weighting `r`, and
//! compares the analytic gradients of `sum(r * layer(x))` (or the loss itself
//! for softmax cross-entropy) against central differences, for the input and
//! every parameter tensor. Inputs to piecewise layers are drawn from a shuffled
//! lattice so no coordinate sits within a probe step of a kink or tie.

use crate::error::Result;
use crate::layers::{
    activation_backward, activation_forward, batchnorm_backward, batchnorm_forward,
    conv2d_backward, conv2d_forward, dropout_backward, dropout_forward, linear_backward,
    linear_forward, pool_backward, pool_forward, softmax_xent, ActivationSpec, BatchNormState,
    ConvParams, DropoutSpec, LinearParams, Mode, PoolKind, Pooling,
};
use crate::numerics::{finite_diff_grad, max_relative_error, normal_sample, SeededRng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Linear,
    Conv,
    BatchNorm,
    Maxout,
    Relu,
    LeakyRelu,
    PRelu,
    Dropout,
    MaxPool,
    AvgPool,
    GlobalAvgPool,
    SoftmaxXent,
}

impl LayerKind {
    pub const ALL: [LayerKind; 12] = [
        LayerKind::Linear,
        LayerKind::Conv,
        LayerKind::BatchNorm,
        LayerKind::Maxout,
        LayerKind::Relu,
        LayerKind::LeakyRelu,
        LayerKind::PRelu,
        LayerKind::Dropout,
        LayerKind::MaxPool,
        LayerKind::AvgPool,
        LayerKind::GlobalAvgPool,
        LayerKind::SoftmaxXent,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Linear => "linear",
            LayerKind::Conv => "conv",
            LayerKind::BatchNorm => "batchnorm-train",
            LayerKind::Maxout => "maxout",
            LayerKind::Relu => "relu",
            LayerKind::LeakyRelu => "lrelu",
            LayerKind::PRelu => "prelu",
            LayerKind::Dropout => "dropout",
            LayerKind::MaxPool => "maxpool",
            LayerKind::AvgPool => "avgpool",
            LayerKind::GlobalAvgPool => "global-avgpool",
            LayerKind::SoftmaxXent => "softmax-xent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub instances: usize,
    pub eps: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            instances: 20,
            eps: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub kind: LayerKind,
    pub instances: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub layers: Vec<LayerCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.layers.iter().all(|l| l.max_rel_error < self.tolerance)
    }
}

/// Runs every layer kind in [`LayerKind::ALL`].
pub fn run_gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut layers = Vec::new();
    for (i, kind) in LayerKind::ALL.iter().enumerate() {
        let mut rng = SeededRng::new(cfg.seed.wrapping_mul(1000).wrapping_add(i as u64));
        let mut worst: f64 = 0.0;
        for _ in 0..cfg.instances {
            worst = worst.max(check_instance(*kind, &mut rng, cfg)?);
        }
        layers.push(LayerCheck {
            kind: *kind,
            instances: cfg.instances,
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport {
        tolerance: cfg.tolerance,
        layers,
    })
}

fn range(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

/// Distinct values `±(j + 0.5) * 0.05` in random order: pairwise gaps and
/// distance from zero are at least 0.025.
fn lattice(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let half = n.div_ceil(2) as f64;
    let mut vals: Vec<f64> = (0..n).map(|j| (j as f64 - half + 0.5) * 0.05).collect();
    rng.shuffle(&mut vals);
    Tensor::from_vec(shape, vals).expect("lattice shape")
}

fn dense_or_maps(rng: &mut SeededRng, features: usize) -> Vec<usize> {
    let n = range(rng, 2, 4);
    if rng.bernoulli(0.5) {
        vec![n, features]
    } else {
        vec![n, features, range(rng, 1, 3), range(rng, 1, 3)]
    }
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Relative error of analytic against numeric gradients over several tensors.
struct Probe<'a> {
    cfg: &'a GradCheckConfig,
    worst: f64,
}

impl Probe<'_> {
    fn compare<F: FnMut(&Tensor) -> f64>(&mut self, f: F, at: &Tensor, analytic: &Tensor) -> Result<()> {
        let numeric = finite_diff_grad(f, at, self.cfg.eps)?;
        self.worst = self.worst.max(max_relative_error(analytic, &numeric, self.cfg.floor));
        Ok(())
    }
}

fn check_instance(kind: LayerKind, rng: &mut SeededRng, cfg: &GradCheckConfig) -> Result<f64> {
    let mut probe = Probe { cfg, worst: 0.0 };
    match kind {
        LayerKind::Linear => {
            let (n, i, o) = (range(rng, 2, 5), range(rng, 1, 6), range(rng, 1, 6));
            let x = normal_sample(rng, &[n, i], 1.0);
            let p = LinearParams::new(normal_sample(rng, &[o, i], 1.0), normal_sample(rng, &[o], 1.0))?;
            let r = normal_sample(rng, &[n, o], 1.0);
            let g = linear_backward(&x, &p, &r)?;
            probe.compare(|t| dot(&r, &linear_forward(t, &p).unwrap()), &x, &g.dx)?;
            probe.compare(
                |w| dot(&r, &linear_forward(&x, &LinearParams { weight: w.clone(), ..p.clone() }).unwrap()),
                &p.weight,
                &g.dweight,
            )?;
            probe.compare(
                |b| dot(&r, &linear_forward(&x, &LinearParams { bias: b.clone(), ..p.clone() }).unwrap()),
                &p.bias,
                &g.dbias,
            )?;
        }
        LayerKind::Conv => {
            let (cin, cout) = (range(rng, 1, 3), range(rng, 1, 4));
            let k = range(rng, 1, 3);
            let (stride, pad) = (range(rng, 1, 2), rng.below(2));
            let (h, w) = (range(rng, k.max(3), 6), range(rng, k.max(3), 6));
            let x = normal_sample(rng, &[2, cin, h, w], 1.0);
            let mut p = ConvParams::zeros(cin, cout, k, k, stride, pad);
            p.kernels = normal_sample(rng, p.kernels.shape(), 1.0);
            p.bias = normal_sample(rng, &[cout], 1.0);
            let y = conv2d_forward(&x, &p)?;
            let r = normal_sample(rng, y.shape(), 1.0);
            let g = conv2d_backward(&x, &p, &r)?;
            probe.compare(|t| dot(&r, &conv2d_forward(t, &p).unwrap()), &x, &g.dx)?;
            probe.compare(
                |kt| dot(&r, &conv2d_forward(&x, &ConvParams { kernels: kt.clone(), ..p.clone() }).unwrap()),
                &p.kernels,
                &g.dkernels,
            )?;
            probe.compare(
                |b| dot(&r, &conv2d_forward(&x, &ConvParams { bias: b.clone(), ..p.clone() }).unwrap()),
                &p.bias,
                &g.dbias,
            )?;
        }
        LayerKind::BatchNorm => {
            let features = range(rng, 1, 4);
            let mut shape = dense_or_maps(rng, features);
            shape[0] = range(rng, 3, 6);
            let x = normal_sample(rng, &shape, 2.0);
            let mut s = BatchNormState::new(features);
            s.gamma = normal_sample(rng, &[features], 1.0);
            s.beta = normal_sample(rng, &[features], 1.0);
            let (y, cache) = batchnorm_forward(&x, &mut s.clone(), Mode::Train)?;
            let r = normal_sample(rng, y.shape(), 1.0);
            let g = batchnorm_backward(&s, &cache, &r)?;
            let run = |t: &Tensor, st: &BatchNormState| {
                dot(&r, &batchnorm_forward(t, &mut st.clone(), Mode::Train).unwrap().0)
            };
            probe.compare(|t| run(t, &s), &x, &g.dx)?;
            probe.compare(|t| run(&x, &BatchNormState { gamma: t.clone(), ..s.clone() }), &s.gamma, &g.dgamma)?;
            probe.compare(|t| run(&x, &BatchNormState { beta: t.clone(), ..s.clone() }), &s.beta, &g.dbeta)?;
        }
        LayerKind::Maxout | LayerKind::Relu | LayerKind::LeakyRelu | LayerKind::PRelu => {
            let spec = match kind {
                LayerKind::Maxout => ActivationSpec::Maxout { k: range(rng, 2, 4) },
                LayerKind::Relu => ActivationSpec::Relu,
                LayerKind::LeakyRelu => ActivationSpec::LeakyRelu { alpha: rng.uniform(0.01, 0.5) },
                _ => ActivationSpec::PRelu,
            };
            let units = range(rng, 1, 3);
            let shape = dense_or_maps(rng, units * spec.lanes());
            let h = lattice(rng, &shape);
            let alpha = (kind == LayerKind::PRelu)
                .then(|| Tensor::from_vec(&[units], (0..units).map(|_| rng.uniform(0.0, 0.5)).collect()).unwrap());
            let (y, pattern) = activation_forward(&h, &spec, alpha.as_ref())?;
            let r = normal_sample(rng, y.shape(), 1.0);
            let g = activation_backward(&h, &spec, alpha.as_ref(), &pattern, &r)?;
            probe.compare(|t| dot(&r, &activation_forward(t, &spec, alpha.as_ref()).unwrap().0), &h, &g.dh)?;
            if let (Some(a), Some(da)) = (&alpha, &g.dalpha) {
                probe.compare(|t| dot(&r, &activation_forward(&h, &spec, Some(t)).unwrap().0), a, da)?;
            }
        }
        LayerKind::Dropout => {
            let spec = DropoutSpec::new(rng.uniform(0.0, 0.8))?;
            let features = range(rng, 1, 5);
            let shape = dense_or_maps(rng, features);
            let x = normal_sample(rng, &shape, 1.0);
            let mask_rng = rng.fork();
            let (y, mask) = dropout_forward(&x, &spec, Mode::Train, &mut mask_rng.clone());
            let r = normal_sample(rng, y.shape(), 1.0);
            let dx = dropout_backward(&mask, &r)?;
            probe.compare(
                |t| dot(&r, &dropout_forward(t, &spec, Mode::Train, &mut mask_rng.clone()).0),
                &x,
                &dx,
            )?;
            let (_, off) = dropout_forward(&x, &spec, Mode::Infer, &mut mask_rng.clone());
            let dx = dropout_backward(&off, &r)?;
            probe.compare(|t| dot(&r, &dropout_forward(t, &spec, Mode::Infer, &mut mask_rng.clone()).0), &x, &dx)?;
        }
        LayerKind::MaxPool | LayerKind::AvgPool | LayerKind::GlobalAvgPool => {
            let pooling = if kind == LayerKind::GlobalAvgPool {
                Pooling::GlobalAvg
            } else {
                let window = range(rng, 2, 3);
                Pooling::Window {
                    kind: if kind == LayerKind::MaxPool { PoolKind::Max } else { PoolKind::Avg },
                    window,
                    stride: range(rng, 1, 2),
                    pad: rng.below(window.min(2)),
                }
            };
            let shape = [2, range(rng, 1, 3), range(rng, 3, 6), range(rng, 3, 6)];
            let x = lattice(rng, &shape);
            let (y, cache) = pool_forward(&x, &pooling)?;
            let r = normal_sample(rng, y.shape(), 1.0);
            let dx = pool_backward(&pooling, &cache, &r)?;
            probe.compare(|t| dot(&r, &pool_forward(t, &pooling).unwrap().0), &x, &dx)?;
        }
        LayerKind::SoftmaxXent => {
            let (n, c) = (range(rng, 1, 6), range(rng, 2, 6));
            let logits = normal_sample(rng, &[n, c], 3.0);
            let labels: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
            let (_, g) = softmax_xent(&logits, &labels)?;
            probe.compare(|t| softmax_xent(t, &labels).unwrap().0, &logits, &g)?;
        }
    }
    Ok(probe.worst)
}
