use crate::error::{ensure, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

use super::init::he_normal_init;

/// Fully connected layer, `y = x·W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T = f32> {
    /// `(fan_in, fan_out)`
    pub weights: Tensor<T>,
    /// `(fan_out)`
    pub biases: Tensor<T>,
}

#[derive(Debug)]
pub struct DenseState<T> {
    input: Tensor<T>,
}

#[derive(Debug)]
pub struct DenseGrads<T> {
    pub grad_x: Tensor<T>,
    pub grad_w: Tensor<T>,
    pub grad_b: Tensor<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weights: Tensor<T>, biases: Tensor<T>) -> Result<Self> {
        let [_, out] = weights.dims2()?;
        ensure!(
            biases.shape() == [out],
            Shape,
            "dense bias {:?} does not match {out} outputs",
            biases.shape()
        );
        Ok(Self { weights, biases })
    }

    pub fn init(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Result<Self> {
        Self::new(
            he_normal_init(rng, &[fan_in, fan_out], fan_in)?,
            Tensor::zeros(&[fan_out])?,
        )
    }

    pub fn fan_in(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, DenseState<T>)> {
        let [n, fi] = x.dims2()?;
        ensure!(
            fi == self.fan_in(),
            Shape,
            "dense expects {} inputs, got {fi}",
            self.fan_in()
        );
        let fo = self.fan_out();
        let w = self.weights.data();
        let mut out = Vec::with_capacity(n * fo);
        for row in x.data().chunks(fi) {
            let mut acc = self.biases.data().to_vec();
            for (i, &xv) in row.iter().enumerate() {
                for (a, &wv) in acc.iter_mut().zip(&w[i * fo..(i + 1) * fo]) {
                    *a = *a + xv * wv;
                }
            }
            out.extend(acc);
        }
        Ok((Tensor::from_vec(&[n, fo], out)?, DenseState { input: x.clone() }))
    }

    pub fn backward(&self, grad_y: &Tensor<T>, state: DenseState<T>) -> Result<DenseGrads<T>> {
        let x = state.input;
        let [n, fi] = x.dims2()?;
        let fo = self.fan_out();
        ensure!(
            grad_y.shape() == [n, fo],
            Shape,
            "dense grad shape {:?} does not match ({n}, {fo})",
            grad_y.shape()
        );
        let w = self.weights.data();
        let gs = grad_y.data();
        let xs = x.data();

        let mut gx = Vec::with_capacity(n * fi);
        for g in gs.chunks(fo) {
            for i in 0..fi {
                let wr = &w[i * fo..(i + 1) * fo];
                gx.push(wr.iter().zip(g).fold(T::zero(), |a, (&wv, &gv)| a + wv * gv));
            }
        }
        let mut gw = vec![T::zero(); fi * fo];
        for (xr, g) in xs.chunks(fi).zip(gs.chunks(fo)) {
            for (i, &xv) in xr.iter().enumerate() {
                for (a, &gv) in gw[i * fo..(i + 1) * fo].iter_mut().zip(g) {
                    *a = *a + xv * gv;
                }
            }
        }
        let mut gb = vec![T::zero(); fo];
        for g in gs.chunks(fo) {
            for (a, &gv) in gb.iter_mut().zip(g) {
                *a = *a + gv;
            }
        }
        Ok(DenseGrads {
            grad_x: Tensor::from_vec(&[n, fi], gx)?,
            grad_w: Tensor::from_vec(&[fi, fo], gw)?,
            grad_b: Tensor::from_vec(&[fo], gb)?,
        })
    }
}
