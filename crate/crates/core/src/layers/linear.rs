use crate::error::{Error, Result};
use crate::numerics::{gemm, Layout, Tensor};

/// Dense preactivation `f = W x + b`.
///
/// `weight` is `(units * k) x in`: every unit owns `k` consecutive rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub dx: Tensor,
    pub dweight: Tensor,
    pub dbias: Tensor,
}

impl LinearParams {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LinearParams {
            weight: Tensor::zeros(&[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::dim(format!(
                "linear weight {:?} with bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(LinearParams { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// `x` is `batch x in` (trailing axes are flattened); the result is `batch x out`.
pub fn linear_forward(x: &Tensor, p: &LinearParams) -> Result<Tensor> {
    let (n, in_dim) = x.rows();
    if in_dim != p.in_dim() || x.rank() < 2 {
        return Err(Error::dim(format!(
            "linear layer expects {} inputs, got shape {:?}",
            p.in_dim(),
            x.shape()
        )));
    }
    let out = p.out_dim();
    let mut y = Vec::with_capacity(n * out);
    for _ in 0..n {
        y.extend_from_slice(p.bias.data());
    }
    gemm(n, in_dim, out, 1.0, x.data(), Layout::N, p.weight.data(), Layout::T, 1.0, &mut y);
    Tensor::from_vec(&[n, out], y)
}

pub fn linear_backward(x: &Tensor, p: &LinearParams, dy: &Tensor) -> Result<LinearGrads> {
    let (n, in_dim) = x.rows();
    let out = p.out_dim();
    if dy.shape() != [n, out] || in_dim != p.in_dim() {
        return Err(Error::dim(format!(
            "linear backward: x {:?}, dy {:?}, weight {:?}",
            x.shape(),
            dy.shape(),
            p.weight.shape()
        )));
    }
    let mut dx = vec![0.0; n * in_dim];
    gemm(n, out, in_dim, 1.0, dy.data(), Layout::N, p.weight.data(), Layout::N, 0.0, &mut dx);
    let mut dw = vec![0.0; out * in_dim];
    gemm(out, n, in_dim, 1.0, dy.data(), Layout::T, x.data(), Layout::N, 0.0, &mut dw);
    let mut db = vec![0.0; out];
    for row in dy.data().chunks_exact(out) {
        for (d, g) in db.iter_mut().zip(row) {
            *d += g;
        }
    }
    Ok(LinearGrads {
        dx: Tensor::from_vec(x.shape(), dx)?,
        dweight: Tensor::from_vec(&[out, in_dim], dw)?,
        dbias: Tensor::from_vec(&[out], db)?,
    })
}
