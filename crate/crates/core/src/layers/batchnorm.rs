use crate::error::{ensure, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Running statistics update: `running <- m * running + (1 - m) * batch`.
pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-5;

/// Per-channel batch normalization over every axis except axis 1.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormLayer<T = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub epsilon: f64,
}

#[derive(Debug)]
pub enum BatchNormState<T> {
    /// Normalized with batch statistics.
    Batch {
        shape: Vec<usize>,
        x_hat: Vec<T>,
        inv_std: Vec<f64>,
    },
    /// Training-mode call with a single element per channel; running statistics
    /// were used and are treated as constants by backward.
    Running {
        shape: Vec<usize>,
        x_hat: Vec<T>,
        inv_std: Vec<f64>,
    },
    Inference,
}

impl<T: Scalar> BatchNormLayer<T> {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: Tensor::full(&[channels], T::one())?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], T::one())?,
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn layout(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        ensure!(x.rank() >= 2, Shape, "batch norm needs (N, C, ...) input");
        let (n, c) = (x.shape()[0], x.shape()[1]);
        ensure!(
            c == self.channels(),
            Shape,
            "batch norm has {} channels, input has {c}",
            self.channels()
        );
        let inner = x.shape()[2..].iter().product::<usize>();
        Ok((n, c, inner))
    }

    fn normalize_with(&self, x: &Tensor<T>, mean: &[f64], inv_std: &[f64]) -> Result<Tensor<T>> {
        let (n, c, inner) = self.layout(x)?;
        let mut out = x.clone();
        let g = self.gamma.data();
        let b = self.beta.data();
        for (p, chunk) in out.data_mut().chunks_mut(inner).enumerate().take(n * c) {
            let ch = p % c;
            let scale = g[ch].f64() * inv_std[ch];
            for v in chunk {
                *v = T::of((v.f64() - mean[ch]) * scale + b[ch].f64());
            }
        }
        Ok(out)
    }

    fn running(&self) -> (Vec<f64>, Vec<f64>) {
        let mean = self.running_mean.data().iter().map(|v| v.f64()).collect();
        let inv = self
            .running_var
            .data()
            .iter()
            .map(|v| 1.0 / (v.f64() + self.epsilon).sqrt())
            .collect();
        (mean, inv)
    }

    /// Normalizes with the running statistics.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (mean, inv) = self.running();
        self.normalize_with(x, &mean, &inv)
    }

    pub fn forward(&mut self, x: &Tensor<T>, training: bool) -> Result<(Tensor<T>, BatchNormState<T>)> {
        let (n, c, inner) = self.layout(x)?;
        let count = n * inner;
        if !training {
            return Ok((self.infer(x)?, BatchNormState::Inference));
        }
        if count < 2 {
            let (mean, inv) = self.running();
            let y = self.normalize_with(x, &mean, &inv)?;
            let x_hat = x
                .data()
                .chunks(inner)
                .enumerate()
                .flat_map(|(p, chunk)| {
                    let ch = p % c;
                    let (m, s) = (mean[ch], inv[ch]);
                    chunk.iter().map(move |v| T::of((v.f64() - m) * s))
                })
                .collect();
            return Ok((
                y,
                BatchNormState::Running {
                    shape: x.shape().to_vec(),
                    x_hat,
                    inv_std: inv,
                },
            ));
        }

        let xs = x.data();
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        for (p, chunk) in xs.chunks(inner).enumerate() {
            mean[p % c] += chunk.iter().map(|v| v.f64()).sum::<f64>();
        }
        for m in &mut mean {
            *m /= count as f64;
        }
        for (p, chunk) in xs.chunks(inner).enumerate() {
            let m = mean[p % c];
            var[p % c] += chunk.iter().map(|v| (v.f64() - m).powi(2)).sum::<f64>();
        }
        for v in &mut var {
            *v /= count as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();

        let mut x_hat = Vec::with_capacity(xs.len());
        for (p, chunk) in xs.chunks(inner).enumerate() {
            let ch = p % c;
            x_hat.extend(chunk.iter().map(|v| T::of((v.f64() - mean[ch]) * inv_std[ch])));
        }
        let g = self.gamma.data();
        let b = self.beta.data();
        let mut out = Vec::with_capacity(xs.len());
        for (p, chunk) in x_hat.chunks(inner).enumerate() {
            let ch = p % c;
            out.extend(chunk.iter().map(|&v| v * g[ch] + b[ch]));
        }

        let m = T::of(self.momentum);
        let one_m = T::of(1.0 - self.momentum);
        for ch in 0..c {
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = m * *rm + one_m * T::of(mean[ch]);
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = m * *rv + one_m * T::of(var[ch]);
        }

        let y = Tensor::from_vec(x.shape(), out)?;
        Ok((
            y,
            BatchNormState::Batch {
                shape: x.shape().to_vec(),
                x_hat,
                inv_std,
            },
        ))
    }

    /// Returns `(grad_x, grad_gamma, grad_beta)`.
    pub fn backward(
        &self,
        grad_y: &Tensor<T>,
        state: BatchNormState<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let (shape, x_hat, inv_std, batch_stats) = match state {
            BatchNormState::Inference => {
                return Err(Error::MissingState(
                    "batch norm backward requires a training-mode forward".into(),
                ))
            }
            BatchNormState::Batch {
                shape,
                x_hat,
                inv_std,
            } => (shape, x_hat, inv_std, true),
            BatchNormState::Running {
                shape,
                x_hat,
                inv_std,
            } => (shape, x_hat, inv_std, false),
        };
        ensure!(
            grad_y.shape() == &shape[..],
            Shape,
            "batch norm grad shape {:?} does not match {:?}",
            grad_y.shape(),
            shape
        );
        let (n, c, inner) = self.layout(grad_y)?;
        let count = (n * inner) as f64;
        let gs = grad_y.data();
        let gamma = self.gamma.data();

        let mut sum_g = vec![0.0f64; c];
        let mut sum_gx = vec![0.0f64; c];
        for (p, (chunk, xh)) in gs.chunks(inner).zip(x_hat.chunks(inner)).enumerate() {
            let ch = p % c;
            sum_g[ch] += chunk.iter().map(|v| v.f64()).sum::<f64>();
            sum_gx[ch] += chunk
                .iter()
                .zip(xh)
                .map(|(g, x)| g.f64() * x.f64())
                .sum::<f64>();
        }

        let mut gx = Vec::with_capacity(gs.len());
        for (p, (chunk, xh)) in gs.chunks(inner).zip(x_hat.chunks(inner)).enumerate() {
            let ch = p % c;
            let k = gamma[ch].f64() * inv_std[ch];
            if batch_stats {
                gx.extend(chunk.iter().zip(xh).map(|(g, x)| {
                    T::of(k / count * (count * g.f64() - sum_g[ch] - x.f64() * sum_gx[ch]))
                }));
            } else {
                gx.extend(chunk.iter().map(|g| T::of(k * g.f64())));
            }
        }
        Ok((
            Tensor::from_vec(&shape, gx)?,
            Tensor::from_vec(&[c], sum_gx.iter().map(|&v| T::of(v)).collect())?,
            Tensor::from_vec(&[c], sum_g.iter().map(|&v| T::of(v)).collect())?,
        ))
    }
}
