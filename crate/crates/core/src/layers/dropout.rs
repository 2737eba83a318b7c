use crate::error::{Error, Result};
use crate::numerics::{SeededRng, Tensor};

use super::Mode;

/// Inverted dropout: survivors are scaled by `1 / (1 - p)` so inference is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    p: f64,
}

impl DropoutSpec {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Spec(format!("dropout probability must be in [0, 1), got {p}")));
        }
        Ok(DropoutSpec { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// Per-element multiplier applied in the forward pass; `None` means identity.
#[derive(Debug, Clone)]
pub struct DropoutMask(Option<Vec<f64>>);

impl DropoutMask {
    pub fn identity() -> Self {
        DropoutMask(None)
    }

    pub fn scales(&self) -> Option<&[f64]> {
        self.0.as_deref()
    }
}

pub fn dropout_forward(
    x: &Tensor,
    spec: &DropoutSpec,
    mode: Mode,
    rng: &mut SeededRng,
) -> (Tensor, DropoutMask) {
    if mode == Mode::Infer || spec.p == 0.0 {
        return (x.clone(), DropoutMask::identity());
    }
    let keep = 1.0 / (1.0 - spec.p);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.bernoulli(spec.p) { 0.0 } else { keep })
        .collect();
    let mut y = x.clone();
    for (v, m) in y.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    (y, DropoutMask(Some(mask)))
}

pub fn dropout_backward(mask: &DropoutMask, dy: &Tensor) -> Result<Tensor> {
    match &mask.0 {
        None => Ok(dy.clone()),
        Some(m) if m.len() == dy.len() => {
            let mut dx = dy.clone();
            for (v, s) in dx.data_mut().iter_mut().zip(m) {
                *v *= s;
            }
            Ok(dx)
        }
        Some(m) => Err(Error::dim(format!(
            "dropout mask of {} elements for gradient of {}",
            m.len(),
            dy.len()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal_sample;

    #[test]
    fn zero_rate_is_identity_in_both_modes() {
        let mut rng = SeededRng::new(0);
        let x = normal_sample(&mut rng, &[4, 6], 1.0);
        let spec = DropoutSpec::new(0.0).unwrap();
        for mode in [Mode::Train, Mode::Infer] {
            assert_eq!(dropout_forward(&x, &spec, mode, &mut rng).0, x);
        }
    }

    #[test]
    fn infer_is_identity() {
        let mut rng = SeededRng::new(0);
        let x = normal_sample(&mut rng, &[4, 6], 1.0);
        let spec = DropoutSpec::new(0.2).unwrap();
        assert_eq!(dropout_forward(&x, &spec, Mode::Infer, &mut rng).0, x);
    }

    #[test]
    fn drop_rate_and_expectation() {
        let mut rng = SeededRng::new(99);
        let x = Tensor::filled(&[100_000, 1], 1.0);
        let (y, _) = dropout_forward(&x, &DropoutSpec::new(0.2).unwrap(), Mode::Train, &mut rng);
        let dropped = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
        assert!((dropped - 0.2).abs() < 0.01, "drop rate {dropped}");
        let mean = y.sum() / 1e5;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn rejects_certain_drop() {
        assert!(DropoutSpec::new(1.0).is_err());
        assert!(DropoutSpec::new(-0.1).is_err());
    }
}
