//! 2-D cross-correlation via im2col and a single GEMM per image.

use crate::error::{Error, Result};
use crate::numerics::{gemm, Layout, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    /// `(units * k) x cin x kh x kw`
    pub kernels: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub dx: Tensor,
    pub dkernels: Tensor,
    pub dbias: Tensor,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn out_area(&self) -> usize {
        self.oh * self.ow
    }

    /// 1x1, stride 1, no padding: the image already is its own column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output extent of a sliding window; `None` when the window does not fit.
pub(crate) fn out_extent(input: usize, window: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || window == 0 || padded < window {
        None
    } else {
        Some((padded - window) / stride + 1)
    }
}

impl ConvParams {
    pub fn zeros(cin: usize, cout: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Self {
        ConvParams {
            kernels: Tensor::zeros(&[cout, cin, kh, kw]),
            bias: Tensor::zeros(&[cout]),
            stride,
            pad,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernels.shape()[2], self.kernels.shape()[3])
    }

    /// Spatial output size for an `h x w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel_size();
        match (
            out_extent(h, kh, self.stride, self.pad),
            out_extent(w, kw, self.stride, self.pad),
        ) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(Error::dim(format!(
                "{kh}x{kw} kernel (stride {}, pad {}) does not fit a {h}x{w} input",
                self.stride, self.pad
            ))),
        }
    }

    fn geometry(&self, x: &Tensor) -> Result<Geometry> {
        if x.rank() != 4 || x.shape()[1] != self.in_channels() || self.kernels.rank() != 4 {
            return Err(Error::dim(format!(
                "conv expects [n, {}, h, w], got {:?}",
                self.in_channels(),
                x.shape()
            )));
        }
        if self.bias.shape() != [self.out_channels()] {
            return Err(Error::dim("conv bias must have one entry per output channel"));
        }
        let (h, w) = (x.shape()[2], x.shape()[3]);
        let (oh, ow) = self.output_hw(h, w)?;
        let (kh, kw) = self.kernel_size();
        Ok(Geometry {
            cin: self.in_channels(),
            h,
            w,
            kh,
            kw,
            oh,
            ow,
            stride: self.stride,
            pad: self.pad,
        })
    }
}

fn im2col(img: &[f64], g: &Geometry, cols: &mut [f64]) {
    let area = g.out_area();
    for c in 0..g.cin {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * area..(row + 1) * area];
                for oi in 0..g.oh {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oi * g.ow..(oi + 1) * g.ow];
                    if ii < 0 || ii >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &img[(c * g.h + ii as usize) * g.w..(c * g.h + ii as usize + 1) * g.w];
                    for (oj, v) in line.iter_mut().enumerate() {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        *v = if jj < 0 || jj >= g.w as isize { 0.0 } else { src[jj as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &Geometry, img: &mut [f64]) {
    let area = g.out_area();
    for c in 0..g.cin {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * area..(row + 1) * area];
                for oi in 0..g.oh {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let base = (c * g.h + ii as usize) * g.w;
                    for oj in 0..g.ow {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if jj >= 0 && jj < g.w as isize {
                            img[base + jj as usize] += src[oi * g.ow + oj];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let g = p.geometry(x)?;
    let n = x.shape()[0];
    let cout = p.out_channels();
    let (in_size, out_size) = (g.cin * g.h * g.w, cout * g.out_area());
    let mut y = vec![0.0; n * out_size];
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![0.0; g.patch() * g.out_area()] };
    for b in 0..n {
        let img = &x.data()[b * in_size..(b + 1) * in_size];
        let out = &mut y[b * out_size..(b + 1) * out_size];
        for (o, chunk) in out.chunks_exact_mut(g.out_area()).enumerate() {
            chunk.fill(p.bias.data()[o]);
        }
        let src = if g.is_pointwise() {
            img
        } else {
            im2col(img, &g, &mut cols);
            &cols
        };
        gemm(cout, g.patch(), g.out_area(), 1.0, p.kernels.data(), Layout::N, src, Layout::N, 1.0, out);
    }
    Tensor::from_vec(&[n, cout, g.oh, g.ow], y)
}

pub fn conv2d_backward(x: &Tensor, p: &ConvParams, dy: &Tensor) -> Result<ConvGrads> {
    let g = p.geometry(x)?;
    let n = x.shape()[0];
    let cout = p.out_channels();
    if dy.shape() != [n, cout, g.oh, g.ow] {
        return Err(Error::dim(format!(
            "conv backward: upstream {:?} does not match output [{n}, {cout}, {}, {}]",
            dy.shape(),
            g.oh,
            g.ow
        )));
    }
    let (in_size, out_size) = (g.cin * g.h * g.w, cout * g.out_area());
    let mut dx = vec![0.0; n * in_size];
    let mut dk = vec![0.0; p.kernels.len()];
    let mut db = vec![0.0; cout];
    let mut cols = vec![0.0; g.patch() * g.out_area()];
    let mut dcols = if g.is_pointwise() { Vec::new() } else { vec![0.0; g.patch() * g.out_area()] };
    for b in 0..n {
        let img = &x.data()[b * in_size..(b + 1) * in_size];
        let grad = &dy.data()[b * out_size..(b + 1) * out_size];
        for (o, chunk) in grad.chunks_exact(g.out_area()).enumerate() {
            db[o] += chunk.iter().sum::<f64>();
        }
        let src: &[f64] = if g.is_pointwise() {
            img
        } else {
            im2col(img, &g, &mut cols);
            &cols
        };
        // dK += dY * cols^T
        gemm(cout, g.out_area(), g.patch(), 1.0, grad, Layout::N, src, Layout::T, 1.0, &mut dk);
        // dcols = K^T * dY
        let dimg = &mut dx[b * in_size..(b + 1) * in_size];
        if g.is_pointwise() {
            gemm(g.patch(), cout, g.out_area(), 1.0, p.kernels.data(), Layout::T, grad, Layout::N, 0.0, dimg);
        } else {
            gemm(g.patch(), cout, g.out_area(), 1.0, p.kernels.data(), Layout::T, grad, Layout::N, 0.0, &mut dcols);
            col2im(&dcols, &g, dimg);
        }
    }
    Ok(ConvGrads {
        dx: Tensor::from_vec(x.shape(), dx)?,
        dkernels: Tensor::from_vec(p.kernels.shape(), dk)?,
        dbias: Tensor::from_vec(&[cout], db)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{normal_sample, SeededRng};

    fn loop_oracle(x: &Tensor, p: &ConvParams) -> Tensor {
        let (n, cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (cout, kh, kw) = (p.out_channels(), p.kernel_size().0, p.kernel_size().1);
        let (oh, ow) = p.output_hw(h, w).unwrap();
        let mut y = Tensor::zeros(&[n, cout, oh, ow]);
        for b in 0..n {
            for o in 0..cout {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut s = p.bias.data()[o];
                        for c in 0..cin {
                            for a in 0..kh {
                                for e in 0..kw {
                                    let ii = (i * p.stride + a) as isize - p.pad as isize;
                                    let jj = (j * p.stride + e) as isize - p.pad as isize;
                                    if ii >= 0 && jj >= 0 && (ii as usize) < h && (jj as usize) < w {
                                        s += p.kernels.at(&[o, c, a, e]) * x.at(&[b, c, ii as usize, jj as usize]);
                                    }
                                }
                            }
                        }
                        y.set(&[b, o, i, j], s);
                    }
                }
            }
        }
        y
    }

    #[test]
    fn pointwise_unit_kernel_is_identity() {
        let mut p = ConvParams::zeros(1, 1, 1, 1, 1, 0);
        p.kernels.data_mut()[0] = 1.0;
        let x = normal_sample(&mut SeededRng::new(1), &[2, 1, 4, 5], 1.0);
        assert_eq!(conv2d_forward(&x, &p).unwrap(), x);
    }

    #[test]
    fn ones_kernel_sums_neighbourhood() {
        let mut p = ConvParams::zeros(1, 1, 3, 3, 1, 1);
        p.kernels.data_mut().fill(1.0);
        let x = Tensor::filled(&[1, 1, 5, 5], 1.0);
        let y = conv2d_forward(&x, &p).unwrap();
        assert_eq!(y.at(&[0, 0, 2, 2]), 9.0);
        assert_eq!(y.at(&[0, 0, 0, 0]), 4.0);
    }

    #[test]
    fn random_case_matches_nested_loops() {
        let mut rng = SeededRng::new(17);
        let x = normal_sample(&mut rng, &[2, 3, 8, 8], 1.0);
        for (k, stride, pad) in [(3, 1, 1), (5, 1, 2), (3, 2, 0), (1, 1, 0), (2, 3, 1)] {
            let p = ConvParams {
                kernels: normal_sample(&mut rng, &[4, 3, k, k], 1.0),
                bias: normal_sample(&mut rng, &[4], 1.0),
                stride,
                pad,
            };
            let got = conv2d_forward(&x, &p).unwrap();
            assert!(got.max_abs_diff(&loop_oracle(&x, &p)) < 1e-10, "k={k} s={stride} p={pad}");
        }
    }

    #[test]
    fn invalid_geometry_is_dimension_error() {
        let p = ConvParams::zeros(1, 1, 5, 5, 1, 0);
        let r = conv2d_forward(&Tensor::zeros(&[1, 1, 3, 3]), &p);
        assert!(matches!(r, Err(Error::Dimension(_))));
        let r = conv2d_forward(&Tensor::zeros(&[1, 2, 8, 8]), &p);
        assert!(matches!(r, Err(Error::Dimension(_))));
    }
}
