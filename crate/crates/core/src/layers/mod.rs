//! Forward and backward kernels for every layer type a network node can hold.
//!
//! Feature layout is `[batch, features]` for dense layers and
//! `[batch, channels, height, width]` for convolutional ones. A piecewise-linear
//! unit owns `k` consecutive features (or channels): unit `u` reads lanes
//! `u*k .. u*k + k`.

mod activation;
pub(crate) mod batchnorm;
mod conv;
mod dropout;
mod linear;
mod pool;
mod softmax;

pub use activation::{activation_backward, activation_forward, ActivationGrads, ActivationSpec, PRELU_INIT};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormGrads, BatchNormState};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvParams};
pub use dropout::{dropout_backward, dropout_forward, DropoutMask, DropoutSpec};
pub use linear::{linear_backward, linear_forward, LinearGrads, LinearParams};
pub use pool::{pool_backward, pool_forward, PoolCache, PoolKind, Pooling};
pub use softmax::softmax_xent;

/// Whether a forward pass uses batch statistics and stochastic layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Number of feature positions per channel: 1 for dense layers, `h*w` for maps.
pub(crate) fn spatial_extent(shape: &[usize]) -> usize {
    shape.iter().skip(2).product()
}
