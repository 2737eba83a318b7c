//! Batch normalisation: per-feature standardisation by mini-batch moments,
//! then a learned scale and shift.
//!
//! Dense inputs `[n, f]` normalise each of the `f` features over the batch.
//! Feature maps `[n, c, h, w]` normalise each channel over batch and space.
//! `gamma`/`beta` are per preactivation feature, so every maxout lane has its own pair.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::{spatial_extent, Mode};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BatchNormState {
    /// `gamma = 1`, `beta = 0`, running moments `(0, 1)`.
    pub fn new(features: usize) -> Self {
        BatchNormState {
            gamma: Tensor::filled(&[features], 1.0),
            beta: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], 1.0),
            epsilon: DEFAULT_EPSILON,
            momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.features();
        if [&self.beta, &self.running_mean, &self.running_var]
            .iter()
            .any(|t| t.len() != f)
        {
            return Err(Error::Spec("batch-norm tensors disagree in length".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Spec(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.momentum > 0.0 && self.momentum <= 1.0) {
            return Err(Error::Spec(format!("momentum must be in (0, 1], got {}", self.momentum)));
        }
        if self.running_var.data().iter().any(|&v| v < 0.0) {
            return Err(Error::Spec("running variance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// What the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub mode: Mode,
    /// Standardised input.
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    /// Batch moments (train mode) or the running moments used (infer mode).
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub dx: Tensor,
    pub dgamma: Tensor,
    pub dbeta: Tensor,
}

fn layout(f: &Tensor, s: &BatchNormState) -> Result<(usize, usize, usize)> {
    if f.rank() < 2 || f.shape()[1] != s.features() {
        return Err(Error::dim(format!(
            "batch norm over {} features got input {:?}",
            s.features(),
            f.shape()
        )));
    }
    Ok((f.shape()[0], s.features(), spatial_extent(f.shape())))
}

/// Per-channel moments over batch and spatial positions.
fn moments(f: &Tensor, n: usize, c: usize, area: usize) -> (Vec<f64>, Vec<f64>) {
    let count = (n * area) as f64;
    let x = f.data();
    let mut mean = vec![0.0; c];
    for b in 0..n {
        for (ch, m) in mean.iter_mut().enumerate() {
            let start = (b * c + ch) * area;
            *m += x[start..start + area].iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; c];
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * area;
            var[ch] += x[start..start + area]
                .iter()
                .map(|v| (v - mean[ch]) * (v - mean[ch]))
                .sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= count);
    (mean, var)
}

/// Train mode standardises with batch moments and folds them into the running
/// moments; Infer mode uses the running moments and leaves `s` untouched.
pub fn batchnorm_forward(
    f: &Tensor,
    s: &mut BatchNormState,
    mode: Mode,
) -> Result<(Tensor, BatchNormCache)> {
    let (n, c, area) = layout(f, s)?;
    let (mean, var) = match mode {
        Mode::Train => {
            if n < 2 {
                return Err(Error::domain("train-mode batch norm needs a batch of at least 2"));
            }
            let (mean, var) = moments(f, n, c, area);
            let m = s.momentum;
            for ch in 0..c {
                let rm = &mut s.running_mean.data_mut()[ch];
                *rm = (1.0 - m) * *rm + m * mean[ch];
                let rv = &mut s.running_var.data_mut()[ch];
                *rv = (1.0 - m) * *rv + m * var[ch];
            }
            (mean, var)
        }
        Mode::Infer => (s.running_mean.data().to_vec(), s.running_var.data().to_vec()),
    };
    Ok(normalise(f, s, mode, mean, var, n, c, area))
}

/// Forward without any state update; used where the caller owns moment bookkeeping.
pub(crate) fn batchnorm_forward_pure(
    f: &Tensor,
    s: &BatchNormState,
    mode: Mode,
) -> Result<(Tensor, BatchNormCache)> {
    let (n, c, area) = layout(f, s)?;
    let (mean, var) = match mode {
        Mode::Train => {
            if n < 2 {
                return Err(Error::domain("train-mode batch norm needs a batch of at least 2"));
            }
            moments(f, n, c, area)
        }
        Mode::Infer => (s.running_mean.data().to_vec(), s.running_var.data().to_vec()),
    };
    Ok(normalise(f, s, mode, mean, var, n, c, area))
}

/// Running-moment update for a batch whose moments were computed by a pure forward.
pub(crate) fn update_running(s: &mut BatchNormState, cache: &BatchNormCache) {
    let m = s.momentum;
    for (rm, bm) in s.running_mean.data_mut().iter_mut().zip(&cache.mean) {
        *rm = (1.0 - m) * *rm + m * bm;
    }
    for (rv, bv) in s.running_var.data_mut().iter_mut().zip(&cache.var) {
        *rv = (1.0 - m) * *rv + m * bv;
    }
}

#[allow(clippy::too_many_arguments)]
fn normalise(
    f: &Tensor,
    s: &BatchNormState,
    mode: Mode,
    mean: Vec<f64>,
    var: Vec<f64>,
    n: usize,
    c: usize,
    area: usize,
) -> (Tensor, BatchNormCache) {
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + s.epsilon).sqrt()).collect();
    let mut xhat = f.clone();
    let mut y = f.clone();
    let (g, bt) = (s.gamma.data(), s.beta.data());
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * area;
            for i in start..start + area {
                let z = (f.data()[i] - mean[ch]) * inv_std[ch];
                xhat.data_mut()[i] = z;
                y.data_mut()[i] = g[ch] * z + bt[ch];
            }
        }
    }
    (
        y,
        BatchNormCache {
            mode,
            xhat,
            inv_std,
            mean,
            var,
        },
    )
}

pub fn batchnorm_backward(
    s: &BatchNormState,
    cache: &BatchNormCache,
    dy: &Tensor,
) -> Result<BatchNormGrads> {
    let (n, c, area) = layout(dy, s)?;
    if dy.shape() != cache.xhat.shape() {
        return Err(Error::dim("batch norm upstream gradient does not match cached input"));
    }
    let count = (n * area) as f64;
    let (g, xh) = (dy.data(), cache.xhat.data());
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * area;
            for i in start..start + area {
                dgamma[ch] += g[i] * xh[i];
                dbeta[ch] += g[i];
            }
        }
    }
    let gamma = s.gamma.data();
    let mut dx = Tensor::zeros(dy.shape());
    let out = dx.data_mut();
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * area;
            let scale = gamma[ch] * cache.inv_std[ch];
            for i in start..start + area {
                out[i] = match cache.mode {
                    // d/dx of gamma * (x - mu_B) / sigma_B, with mu_B and sigma_B depending on x
                    Mode::Train => {
                        scale * (g[i] - dbeta[ch] / count - xh[i] * dgamma[ch] / count)
                    }
                    Mode::Infer => scale * g[i],
                };
            }
        }
    }
    Ok(BatchNormGrads {
        dx,
        dgamma: Tensor::from_vec(&[c], dgamma)?,
        dbeta: Tensor::from_vec(&[c], dbeta)?,
    })
}
