//! A laboratory for deep networks built from piecewise-linear units.
//!
//! The crate provides a small trainable network stack (dense and
//! convolutional preactivations, batch normalisation, ReLU / leaky / parametric
//! ReLU and maxout activations, pooling, dropout, softmax), a linear-region
//! analysis engine that groups inputs by activation pattern, and experiment
//! harnesses for the 2-D toy study, learning-rate (ill-conditioning) sweeps,
//! ablations and a reduced-width maxout-network-in-maxout-network on MNIST.
//!
//! All arithmetic is `f64` and every random draw flows from an explicit seed,
//! so any report can be reproduced bit for bit.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod numerics;
pub mod regions;
pub mod training;

pub use error::{Error, Result};
