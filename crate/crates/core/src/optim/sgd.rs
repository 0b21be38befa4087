use crate::error::{ensure, Result};
use crate::model::Gradients;
use crate::tensor::{Scalar, Tensor};

use super::{check_grads, Slots};

pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// Classical momentum: `v <- mu*v - lr*g`, `p <- p + v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    pub(super) velocity: Slots,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        ensure!(lr > 0.0 && lr.is_finite(), InvalidArgument, "learning rate must be positive");
        ensure!((0.0..1.0).contains(&momentum), InvalidArgument, "momentum must be in [0, 1)");
        Ok(Self {
            lr,
            momentum,
            velocity: Slots::default(),
        })
    }

    pub fn velocity(&self, index: usize) -> Option<&[f64]> {
        self.velocity.bufs.get(index).map(Vec::as_slice)
    }

    pub fn step<T: Scalar>(&mut self, mut params: Vec<(String, &mut Tensor<T>)>, grads: &Gradients<T>) -> Result<()> {
        let gs = check_grads(&params, grads)?;
        self.velocity.bind(&params)?;
        for (((_, p), g), v) in params.iter_mut().zip(gs).zip(&mut self.velocity.bufs) {
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
                *vv = self.momentum * *vv - self.lr * gv.f64();
                *pv = T::of(pv.f64() + *vv);
            }
        }
        Ok(())
    }
}
