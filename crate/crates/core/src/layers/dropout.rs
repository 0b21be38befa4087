use crate::error::{ensure, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Element-wise inverted dropout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    rate: f64,
}

#[derive(Debug)]
pub struct DropoutState<T> {
    /// `None` when the forward pass was an identity.
    mask: Option<Vec<T>>,
    len: usize,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        ensure!(
            (0.0..1.0).contains(&rate),
            InvalidArgument,
            "dropout rate must be in [0, 1), got {rate}"
        );
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Training: zero each element with probability `rate` and scale survivors by
    /// `1 / (1 - rate)`. Inference: identity, no draws.
    pub fn forward<T: Scalar>(
        &self,
        x: &Tensor<T>,
        rng: &mut Rng,
        training: bool,
    ) -> (Tensor<T>, DropoutState<T>) {
        if !training || self.rate == 0.0 {
            return (
                x.clone(),
                DropoutState {
                    mask: None,
                    len: x.len(),
                },
            );
        }
        let keep = T::of(1.0 / (1.0 - self.rate));
        let mask: Vec<T> = (0..x.len())
            .map(|_| if rng.unit() < self.rate { T::zero() } else { keep })
            .collect();
        let mut y = x.clone();
        for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
            *v = *v * m;
        }
        (
            y,
            DropoutState {
                mask: Some(mask),
                len: x.len(),
            },
        )
    }

    pub fn backward<T: Scalar>(&self, grad_y: &Tensor<T>, state: DropoutState<T>) -> Result<Tensor<T>> {
        ensure!(
            grad_y.len() == state.len,
            Shape,
            "dropout grad has {} elements, forward had {}",
            grad_y.len(),
            state.len
        );
        let mut g = grad_y.clone();
        if let Some(mask) = state.mask {
            for (v, m) in g.data_mut().iter_mut().zip(mask) {
                *v = *v * m;
            }
        }
        Ok(g)
    }
}
