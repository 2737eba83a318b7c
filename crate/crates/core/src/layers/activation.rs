//! Piecewise-linear activations and the region index each unit selects.
//!
//! * ReLU: `max(0, h)`, region 1 iff `h > 0`.
//! * LReLU / PReLU: `h` for `h > 0`, `alpha * h` otherwise, region 1 iff `h > 0`.
//!   For `alpha <= 1` this is `max(alpha * h, h)`.
//! * Maxout: maximum over `k` lanes, region = winning lane, ties to the lowest lane.
//!
//! At `h == 0` the rectifier family takes the negative-side slope.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::spatial_extent;

/// Default `alpha` for PReLU parameters.
pub const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationSpec {
    Relu,
    LeakyRelu { alpha: f64 },
    /// Slope is a learnable per-unit parameter held by the owning node.
    PRelu,
    Maxout { k: usize },
}

impl ActivationSpec {
    pub fn maxout(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Spec(format!("maxout needs k >= 2, got {k}")));
        }
        Ok(ActivationSpec::Maxout { k })
    }

    /// Preactivation lanes per unit.
    pub fn lanes(&self) -> usize {
        match *self {
            ActivationSpec::Maxout { k } => k,
            _ => 1,
        }
    }

    /// Number of distinct region indices a unit can report.
    pub fn regions(&self) -> usize {
        match *self {
            ActivationSpec::Maxout { k } => k,
            _ => 2,
        }
    }

    pub fn is_maxout(&self) -> bool {
        matches!(self, ActivationSpec::Maxout { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ActivationSpec::Maxout { k } if k < 2 => {
                Err(Error::Spec(format!("maxout needs k >= 2, got {k}")))
            }
            ActivationSpec::LeakyRelu { alpha } if !alpha.is_finite() => {
                Err(Error::Spec("leaky slope must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationSpec::Relu => "relu",
            ActivationSpec::LeakyRelu { .. } => "lrelu",
            ActivationSpec::PRelu => "prelu",
            ActivationSpec::Maxout { .. } => "maxout",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActivationGrads {
    pub dh: Tensor,
    /// Per-unit slope gradient, PReLU only.
    pub dalpha: Option<Tensor>,
}

/// Slope for unit `u` on the negative side.
fn negative_slope(spec: &ActivationSpec, alpha: Option<&Tensor>, unit: usize) -> f64 {
    match *spec {
        ActivationSpec::Relu => 0.0,
        ActivationSpec::LeakyRelu { alpha } => alpha,
        ActivationSpec::PRelu => alpha.map_or(PRELU_INIT, |a| a.data()[unit]),
        ActivationSpec::Maxout { .. } => unreachable!("maxout has no slope"),
    }
}

fn units_of(h: &Tensor, lanes: usize) -> Result<(usize, usize, usize)> {
    if h.rank() < 2 || lanes == 0 || h.shape()[1] % lanes != 0 {
        return Err(Error::dim(format!(
            "activation input {:?} is not grouped into {lanes}-lane units",
            h.shape()
        )));
    }
    Ok((h.shape()[0], h.shape()[1] / lanes, spatial_extent(h.shape())))
}

fn check_alpha(spec: &ActivationSpec, alpha: Option<&Tensor>, units: usize) -> Result<()> {
    if let (ActivationSpec::PRelu, Some(a)) = (spec, alpha) {
        if a.len() != units {
            return Err(Error::dim(format!("PReLU has {} slopes for {units} units", a.len())));
        }
    }
    Ok(())
}

/// Maxout over `lanes` consecutive channels; `lanes == 1` is the identity.
///
/// Returns the per-position winner index alongside the values.
pub(crate) fn maxout_lanes(h: &Tensor, lanes: usize) -> Result<(Tensor, Vec<u8>)> {
    let (n, units, area) = units_of(h, lanes)?;
    let mut y = Vec::with_capacity(n * units * area);
    let mut pattern = Vec::with_capacity(n * units * area);
    let src = h.data();
    for b in 0..n {
        for u in 0..units {
            let base = (b * units + u) * lanes * area;
            for s in 0..area {
                let mut best = src[base + s];
                let mut arg = 0u8;
                for l in 1..lanes {
                    let v = src[base + l * area + s];
                    if v > best {
                        best = v;
                        arg = l as u8;
                    }
                }
                y.push(best);
                pattern.push(arg);
            }
        }
    }
    let mut shape = h.shape().to_vec();
    shape[1] = units;
    Ok((Tensor::from_vec(&shape, y)?, pattern))
}

/// Applies the activation. `alpha` supplies per-unit PReLU slopes.
///
/// The pattern has one entry per output element, in output order.
pub fn activation_forward(
    h: &Tensor,
    spec: &ActivationSpec,
    alpha: Option<&Tensor>,
) -> Result<(Tensor, Vec<u8>)> {
    if let ActivationSpec::Maxout { k } = *spec {
        return maxout_lanes(h, k);
    }
    let (_, units, area) = units_of(h, 1)?;
    check_alpha(spec, alpha, units)?;
    let mut y = h.clone();
    let mut pattern = vec![0u8; h.len()];
    for (i, (v, p)) in y.data_mut().iter_mut().zip(pattern.iter_mut()).enumerate() {
        if *v > 0.0 {
            *p = 1;
        } else {
            *v *= negative_slope(spec, alpha, (i / area) % units);
        }
    }
    Ok((y, pattern))
}

/// Backward pass given the forward input, its pattern and the upstream gradient.
pub fn activation_backward(
    h: &Tensor,
    spec: &ActivationSpec,
    alpha: Option<&Tensor>,
    pattern: &[u8],
    dy: &Tensor,
) -> Result<ActivationGrads> {
    let lanes = spec.lanes();
    let (n, units, area) = units_of(h, lanes)?;
    if dy.len() != n * units * area || pattern.len() != dy.len() {
        return Err(Error::dim(format!(
            "activation backward: upstream {:?} for input {:?}",
            dy.shape(),
            h.shape()
        )));
    }
    check_alpha(spec, alpha, units)?;
    let mut dh = Tensor::zeros(h.shape());
    let mut dalpha = matches!(spec, ActivationSpec::PRelu).then(|| vec![0.0; units]);
    let g = dy.data();
    let out = dh.data_mut();
    if spec.is_maxout() {
        for b in 0..n {
            for u in 0..units {
                let base = (b * units + u) * lanes * area;
                let row = (b * units + u) * area;
                for s in 0..area {
                    let lane = pattern[row + s] as usize;
                    out[base + lane * area + s] = g[row + s];
                }
            }
        }
    } else {
        for i in 0..g.len() {
            let unit = (i / area) % units;
            if pattern[i] == 1 {
                out[i] = g[i];
            } else {
                out[i] = g[i] * negative_slope(spec, alpha, unit);
                if let Some(da) = dalpha.as_mut() {
                    da[unit] += g[i] * h.data()[i];
                }
            }
        }
    }
    let dalpha = match dalpha {
        Some(d) => Some(Tensor::from_vec(&[units], d)?),
        None => None,
    };
    Ok(ActivationGrads { dh, dalpha })
}
