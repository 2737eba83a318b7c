//! Spatial max and average pooling over `[n, c, h, w]` maps.
//!
//! Padded positions never win a max and are excluded from averages.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::conv::out_extent;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Window {
        kind: PoolKind,
        window: usize,
        stride: usize,
        pad: usize,
    },
    /// Average over the whole remaining map, producing `[n, c, 1, 1]`.
    GlobalAvg,
}

impl Pooling {
    pub fn max(window: usize, stride: usize, pad: usize) -> Self {
        Pooling::Window {
            kind: PoolKind::Max,
            window,
            stride,
            pad,
        }
    }

    /// Output spatial size for an `h x w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        match *self {
            Pooling::GlobalAvg => Ok((1, 1)),
            Pooling::Window {
                window, stride, pad, ..
            } => match (out_extent(h, window, stride, pad), out_extent(w, window, stride, pad)) {
                (Some(a), Some(b)) if pad < window => Ok((a, b)),
                _ => Err(Error::dim(format!(
                    "pool window {window} (stride {stride}, pad {pad}) does not fit {h}x{w}"
                ))),
            },
        }
    }

    fn resolve(&self, h: usize, w: usize) -> (PoolKind, usize, usize, usize, usize) {
        match *self {
            Pooling::GlobalAvg => (PoolKind::Avg, h, w, 1, 0),
            Pooling::Window {
                kind,
                window,
                stride,
                pad,
            } => (kind, window, window, stride, pad),
        }
    }
}

/// Routing information for the backward pass.
#[derive(Debug, Clone)]
pub struct PoolCache {
    input_shape: Vec<usize>,
    /// Max pooling: flat input index of every output's winner.
    argmax: Vec<usize>,
}

pub fn pool_forward(x: &Tensor, pooling: &Pooling) -> Result<(Tensor, PoolCache)> {
    if x.rank() != 4 {
        return Err(Error::dim(format!("pooling expects [n, c, h, w], got {:?}", x.shape())));
    }
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oh, ow) = pooling.output_hw(h, w)?;
    let (kind, wh, ww, stride, pad) = pooling.resolve(h, w);
    let src = x.data();
    let mut y = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::new();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oi in 0..oh {
            let i0 = (oi * stride) as isize - pad as isize;
            let (ilo, ihi) = (i0.max(0) as usize, ((i0 + wh as isize) as usize).min(h));
            for oj in 0..ow {
                let j0 = (oj * stride) as isize - pad as isize;
                let (jlo, jhi) = (j0.max(0) as usize, ((j0 + ww as isize) as usize).min(w));
                match kind {
                    PoolKind::Max => {
                        let mut best = f64::NEG_INFINITY;
                        let mut at = base + ilo * w + jlo;
                        for i in ilo..ihi {
                            for j in jlo..jhi {
                                let v = src[base + i * w + j];
                                if v > best {
                                    best = v;
                                    at = base + i * w + j;
                                }
                            }
                        }
                        y.push(best);
                        argmax.push(at);
                    }
                    PoolKind::Avg => {
                        let mut s = 0.0;
                        for i in ilo..ihi {
                            s += src[base + i * w + jlo..base + i * w + jhi].iter().sum::<f64>();
                        }
                        y.push(s / ((ihi - ilo) * (jhi - jlo)) as f64);
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(&[n, c, oh, ow], y)?,
        PoolCache {
            input_shape: x.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn pool_backward(pooling: &Pooling, cache: &PoolCache, dy: &Tensor) -> Result<Tensor> {
    let shape = &cache.input_shape;
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (oh, ow) = pooling.output_hw(h, w)?;
    if dy.shape() != [n, c, oh, ow] {
        return Err(Error::dim(format!(
            "pool backward: upstream {:?}, expected [{n}, {c}, {oh}, {ow}]",
            dy.shape()
        )));
    }
    let (kind, wh, ww, stride, pad) = pooling.resolve(h, w);
    let mut dx = Tensor::zeros(shape);
    let out = dx.data_mut();
    match kind {
        PoolKind::Max => {
            for (g, &at) in dy.data().iter().zip(&cache.argmax) {
                out[at] += g;
            }
        }
        PoolKind::Avg => {
            let g = dy.data();
            for plane in 0..n * c {
                let base = plane * h * w;
                for oi in 0..oh {
                    let i0 = (oi * stride) as isize - pad as isize;
                    let (ilo, ihi) = (i0.max(0) as usize, ((i0 + wh as isize) as usize).min(h));
                    for oj in 0..ow {
                        let j0 = (oj * stride) as isize - pad as isize;
                        let (jlo, jhi) = (j0.max(0) as usize, ((j0 + ww as isize) as usize).min(w));
                        let share = g[(plane * oh + oi) * ow + oj] / ((ihi - ilo) * (jhi - jlo)) as f64;
                        for i in ilo..ihi {
                            for v in &mut out[base + i * w + jlo..base + i * w + jhi] {
                                *v += share;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(dx)
}
