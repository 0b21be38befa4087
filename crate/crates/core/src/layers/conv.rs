//! 3×3×3 "same" convolution, stride 1, zero padding 1.
//!
//! The kernels iterate tap-by-tap and accumulate whole contiguous rows, so the
//! innermost loop is an axpy the compiler can vectorize. Work is split across
//! independent output planes; each plane is summed serially, which keeps results
//! bit-identical regardless of thread count.

use rayon::prelude::*;

use crate::error::{ensure, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

use super::init::he_normal_init;

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL * KERNEL;

/// L2 factor applied to every convolution bias.
pub const CONV_BIAS_L2: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct Conv3dLayer<T = f32> {
    /// `(C_out, C_in, 3, 3, 3)`
    pub weights: Tensor<T>,
    /// `(C_out)`
    pub biases: Tensor<T>,
    pub l2_weight_factor: f64,
    pub l2_bias_factor: f64,
}

#[derive(Debug)]
pub struct Conv3dState<T> {
    input: Tensor<T>,
}

#[derive(Debug)]
pub struct Conv3dGrads<T> {
    pub grad_x: Tensor<T>,
    pub grad_w: Tensor<T>,
    pub grad_b: Tensor<T>,
}

/// Output positions `o` along an axis of length `n` for which `o + k - 1` is in bounds.
#[inline]
fn valid(k: usize, n: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { 0 };
    let hi = if k == KERNEL - 1 { n.saturating_sub(1) } else { n };
    (lo.min(hi), hi)
}

#[inline]
fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = *yv + a * xv;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

impl<T: Scalar> Conv3dLayer<T> {
    pub fn new(weights: Tensor<T>, biases: Tensor<T>, l2_weight_factor: f64) -> Result<Self> {
        let [co, _, kd, kh, kw] = weights.dims5()?;
        ensure!(
            kd == KERNEL && kh == KERNEL && kw == KERNEL,
            Shape,
            "kernel must be 3x3x3, got {:?}",
            weights.shape()
        );
        ensure!(
            biases.shape() == [co],
            Shape,
            "bias shape {:?} does not match {co} output channels",
            biases.shape()
        );
        ensure!(
            l2_weight_factor >= 0.0,
            InvalidArgument,
            "negative L2 weight factor"
        );
        Ok(Self {
            weights,
            biases,
            l2_weight_factor,
            l2_bias_factor: CONV_BIAS_L2,
        })
    }

    /// He-normal weights, zero biases.
    pub fn init(rng: &mut Rng, c_in: usize, c_out: usize, l2_weight_factor: f64) -> Result<Self> {
        let weights = he_normal_init(rng, &[c_out, c_in, KERNEL, KERNEL, KERNEL], c_in * TAPS)?;
        Self::new(weights, Tensor::zeros(&[c_out])?, l2_weight_factor)
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    /// `λ_w‖W‖² + λ_b‖b‖²`
    pub fn l2_penalty(&self) -> f64 {
        self.l2_weight_factor * self.weights.sum_squares()
            + self.l2_bias_factor * self.biases.sum_squares()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Conv3dState<T>)> {
        let [n, ci, d, h, w] = x.dims5()?;
        ensure!(
            ci == self.in_channels(),
            Shape,
            "conv expects {} input channels, got {ci}",
            self.in_channels()
        );
        let co = self.out_channels();
        let vol = d * h * w;
        let xs = x.data();
        let ws = self.weights.data();
        let bs = self.biases.data();
        let mut out = vec![T::zero(); n * co * vol];
        out.par_chunks_mut(vol).enumerate().for_each(|(plane, out)| {
            let (b, o) = (plane / co, plane % co);
            out.fill(bs[o]);
            for c in 0..ci {
                let xin = &xs[(b * ci + c) * vol..][..vol];
                let k = &ws[(o * ci + c) * TAPS..][..TAPS];
                for kd in 0..KERNEL {
                    let (d0, d1) = valid(kd, d);
                    for kh in 0..KERNEL {
                        let (h0, h1) = valid(kh, h);
                        for kw in 0..KERNEL {
                            let (w0, w1) = valid(kw, w);
                            if w0 >= w1 {
                                continue;
                            }
                            let wv = k[(kd * KERNEL + kh) * KERNEL + kw];
                            for od in d0..d1 {
                                let id = od + kd - 1;
                                for oh in h0..h1 {
                                    let ih = oh + kh - 1;
                                    let orow = &mut out[(od * h + oh) * w..][w0..w1];
                                    let irow = &xin[(id * h + ih) * w + w0 + kw - 1..][..w1 - w0];
                                    axpy(wv, irow, orow);
                                }
                            }
                        }
                    }
                }
            }
        });
        let y = Tensor::from_vec(&[n, co, d, h, w], out)?;
        Ok((y, Conv3dState { input: x.clone() }))
    }

    /// Gradients of the upstream loss plus the layer's own L2 penalty.
    pub fn backward(&self, grad_y: &Tensor<T>, state: Conv3dState<T>) -> Result<Conv3dGrads<T>> {
        let x = state.input;
        let [n, ci, d, h, w] = x.dims5()?;
        let co = self.out_channels();
        ensure!(
            grad_y.shape() == [n, co, d, h, w],
            Shape,
            "conv grad shape {:?} does not match output {:?}",
            grad_y.shape(),
            [n, co, d, h, w]
        );
        let vol = d * h * w;
        let xs = x.data();
        let gs = grad_y.data();
        let ws = self.weights.data();

        let mut gx = vec![T::zero(); n * ci * vol];
        gx.par_chunks_mut(vol).enumerate().for_each(|(plane, gx)| {
            let (b, c) = (plane / ci, plane % ci);
            for o in 0..co {
                let gy = &gs[(b * co + o) * vol..][..vol];
                let k = &ws[(o * ci + c) * TAPS..][..TAPS];
                for kd in 0..KERNEL {
                    let (d0, d1) = valid(kd, d);
                    for kh in 0..KERNEL {
                        let (h0, h1) = valid(kh, h);
                        for kw in 0..KERNEL {
                            let (w0, w1) = valid(kw, w);
                            if w0 >= w1 {
                                continue;
                            }
                            let wv = k[(kd * KERNEL + kh) * KERNEL + kw];
                            for od in d0..d1 {
                                let id = od + kd - 1;
                                for oh in h0..h1 {
                                    let ih = oh + kh - 1;
                                    let grow = &gy[(od * h + oh) * w..][w0..w1];
                                    let xrow =
                                        &mut gx[(id * h + ih) * w + w0 + kw - 1..][..w1 - w0];
                                    axpy(wv, grow, xrow);
                                }
                            }
                        }
                    }
                }
            }
        });

        let mut gw = vec![T::zero(); co * ci * TAPS];
        gw.par_chunks_mut(ci * TAPS).enumerate().for_each(|(o, gw)| {
            for c in 0..ci {
                for kd in 0..KERNEL {
                    let (d0, d1) = valid(kd, d);
                    for kh in 0..KERNEL {
                        let (h0, h1) = valid(kh, h);
                        for kw in 0..KERNEL {
                            let (w0, w1) = valid(kw, w);
                            let mut acc = 0.0f64;
                            if w0 < w1 {
                                for b in 0..n {
                                    let gy = &gs[(b * co + o) * vol..][..vol];
                                    let xin = &xs[(b * ci + c) * vol..][..vol];
                                    for od in d0..d1 {
                                        let id = od + kd - 1;
                                        for oh in h0..h1 {
                                            let ih = oh + kh - 1;
                                            let grow = &gy[(od * h + oh) * w..][w0..w1];
                                            let xrow =
                                                &xin[(id * h + ih) * w + w0 + kw - 1..][..w1 - w0];
                                            acc += dot(grow, xrow).f64();
                                        }
                                    }
                                }
                            }
                            gw[c * TAPS + (kd * KERNEL + kh) * KERNEL + kw] = T::of(acc);
                        }
                    }
                }
            }
        });

        let mut gb = vec![T::zero(); co];
        for (o, g) in gb.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for b in 0..n {
                acc += gs[(b * co + o) * vol..][..vol]
                    .iter()
                    .map(|v| v.f64())
                    .sum::<f64>();
            }
            *g = T::of(acc);
        }

        let lw = T::of(2.0 * self.l2_weight_factor);
        let lb = T::of(2.0 * self.l2_bias_factor);
        for (g, &wv) in gw.iter_mut().zip(ws) {
            *g = *g + lw * wv;
        }
        for (g, &bv) in gb.iter_mut().zip(self.biases.data()) {
            *g = *g + lb * bv;
        }

        Ok(Conv3dGrads {
            grad_x: Tensor::from_vec(&[n, ci, d, h, w], gx)?,
            grad_w: Tensor::from_vec(self.weights.shape(), gw)?,
            grad_b: Tensor::from_vec(&[co], gb)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(co: usize, ci: usize, w: f64, b: f64, l2: f64) -> Conv3dLayer<f64> {
        Conv3dLayer::new(
            Tensor::full(&[co, ci, 3, 3, 3], w).unwrap(),
            Tensor::full(&[co], b).unwrap(),
            l2,
        )
        .unwrap()
    }

    #[test]
    fn single_voxel_center_tap() {
        let mut l = layer(1, 1, 1.0, 1.0, 0.0);
        l.l2_bias_factor = 0.0;
        let x = Tensor::full(&[1, 1, 1, 1, 1], 2.0).unwrap();
        let (y, st) = l.forward(&x).unwrap();
        assert_eq!(y.data(), &[3.0]);
        let g = l.backward(&Tensor::full(&[1, 1, 1, 1, 1], 1.0).unwrap(), st).unwrap();
        assert_eq!(g.grad_b.data(), &[1.0]);
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let l = layer(2, 1, 0.0, 0.75, 0.0);
        let x = Tensor::full(&[1, 1, 3, 4, 5], 9.0).unwrap();
        let (y, _) = l.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 2, 3, 4, 5]);
        assert!(y.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn zero_upstream_zero_l2_gives_zero_grads() {
        let mut rng = Rng::new(3);
        let l: Conv3dLayer<f64> = Conv3dLayer::init(&mut rng, 2, 3, 0.0).unwrap();
        let x = he_normal_init(&mut rng, &[1, 2, 3, 3, 3], 1).unwrap();
        let (y, st) = l.forward(&x).unwrap();
        let g = l.backward(&Tensor::zeros(y.shape()).unwrap(), st).unwrap();
        assert!(g.grad_x.data().iter().all(|&v| v == 0.0));
        assert!(g.grad_w.data().iter().all(|&v| v == 0.0));
        assert!(g.grad_b.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l2_only_gradient() {
        let mut rng = Rng::new(4);
        let mut l: Conv3dLayer<f64> = Conv3dLayer::init(&mut rng, 1, 2, 0.05).unwrap();
        l.biases = Tensor::from_vec(&[2], vec![0.5, -1.0]).unwrap();
        let x = Tensor::full(&[1, 1, 2, 2, 2], 1.0).unwrap();
        let (y, st) = l.forward(&x).unwrap();
        let g = l.backward(&Tensor::zeros(y.shape()).unwrap(), st).unwrap();
        for (gw, w) in g.grad_w.data().iter().zip(l.weights.data()) {
            assert!((gw - 0.1 * w).abs() < 1e-15);
        }
        assert_eq!(g.grad_b.data(), &[0.01, -0.02]);
    }

    #[test]
    fn same_padding_preserves_spatial_shape() {
        let mut rng = Rng::new(5);
        let l: Conv3dLayer<f32> = Conv3dLayer::init(&mut rng, 1, 2, 0.0).unwrap();
        for dims in [[1, 1, 1], [2, 3, 4], [5, 1, 2], [4, 4, 4]] {
            let x = Tensor::zeros(&[1, 1, dims[0], dims[1], dims[2]]).unwrap();
            let (y, _) = l.forward(&x).unwrap();
            assert_eq!(&y.shape()[2..], &dims);
        }
    }

    #[test]
    fn channel_mismatch_rejected() {
        let l = layer(1, 2, 1.0, 0.0, 0.0);
        assert!(l.forward(&Tensor::zeros(&[1, 1, 2, 2, 2]).unwrap()).is_err());
    }

    #[test]
    fn penalty_value() {
        let mut l = layer(1, 1, 0.0, 0.0, 0.05);
        l.weights.data_mut()[0] = 2.0;
        assert!((l.l2_penalty() - 0.2).abs() < 1e-15);
    }
}
