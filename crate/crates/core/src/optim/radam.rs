use crate::error::{ensure, Result};
use crate::model::Gradients;
use crate::tensor::{Scalar, Tensor};

use super::{check_grads, Slots};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;
/// The adaptive step is used only once the SMA length exceeds this.
pub const RHO_THRESHOLD: f64 = 4.0;

/// Length of the approximated simple moving average at step `t`.
pub fn rho(t: u64, beta2: f64) -> f64 {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let b = beta2.powf(t as f64);
    rho_inf - 2.0 * t as f64 * b / (1.0 - b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rectification {
    /// Momentum-only steps while `rho_t <= 4`, rectified adaptive steps after.
    Gated,
    /// Unrectified adaptive step at every `t` (plain Adam).
    AlwaysAdaptive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RAdam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub rectification: Rectification,
    pub(super) t: u64,
    pub(super) m: Slots,
    pub(super) v: Slots,
}

impl RAdam {
    pub fn new(lr: f64) -> Result<Self> {
        ensure!(lr > 0.0 && lr.is_finite(), InvalidArgument, "learning rate must be positive");
        Ok(Self {
            lr,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
            rectification: Rectification::Gated,
            t: 0,
            m: Slots::default(),
            v: Slots::default(),
        })
    }

    pub fn with_rectification(mut self, r: Rectification) -> Self {
        self.rectification = r;
        self
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn step<T: Scalar>(&mut self, mut params: Vec<(String, &mut Tensor<T>)>, grads: &Gradients<T>) -> Result<()> {
        let gs = check_grads(&params, grads)?;
        self.m.bind(&params)?;
        self.v.bind(&params)?;
        self.t += 1;
        let t = self.t as f64;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powf(t);
        let bc2 = 1.0 - b2.powf(t);
        let rho_inf = 2.0 / (1.0 - b2) - 1.0;
        let rho_t = rho(self.t, b2);
        // None selects the un-adapted momentum step.
        let adapt = match self.rectification {
            Rectification::AlwaysAdaptive => Some(1.0),
            Rectification::Gated if rho_t > RHO_THRESHOLD => Some(
                ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt(),
            ),
            Rectification::Gated => None,
        };
        for (i, ((_, p), g)) in params.iter_mut().zip(gs).enumerate() {
            let (m, v) = (&mut self.m.bufs[i], &mut self.v.bufs[i]);
            for (j, (pv, gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gv = gv.f64();
                m[j] = b1 * m[j] + (1.0 - b1) * gv;
                v[j] = b2 * v[j] + (1.0 - b2) * gv * gv;
                let m_hat = m[j] / bc1;
                let delta = match adapt {
                    Some(r) => r * m_hat / ((v[j] / bc2).sqrt() + self.epsilon),
                    None => m_hat,
                };
                *pv = T::of(pv.f64() - self.lr * delta);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grads(name: &str, g: Vec<f64>) -> Gradients<f64> {
        let n = g.len();
        [(name.to_string(), Tensor::from_vec(&[n], g).unwrap())].into_iter().collect()
    }

    #[test]
    fn rho_values() {
        // independently evaluated: 1.0, 1.9995, 2.99867, 3.9975, 4.99600
        let expect = [1.0, 1.9995, 2.99867, 3.9975, 4.996];
        for (t, e) in (1..=5).zip(expect) {
            assert!((rho(t, BETA2) - e).abs() < 1e-4, "t={t}");
        }
        assert!(rho(4, BETA2) <= RHO_THRESHOLD && rho(5, BETA2) > RHO_THRESHOLD);
    }

    #[test]
    fn first_steps_skip_second_moment() {
        let mut o = RAdam::new(0.1).unwrap();
        let mut w = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        // m_hat equals g on step 1, so the step is exactly lr*g even for tiny g
        o.step(vec![("w".into(), &mut w)], &grads("w", vec![1e-3])).unwrap();
        assert!((w.data()[0] - (1.0 - 0.1 * 1e-3)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut o = RAdam::new(0.1).unwrap();
        let mut w = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        for _ in 0..20 {
            o.step(vec![("w".into(), &mut w)], &grads("w", vec![0.0; 3])).unwrap();
        }
        assert_eq!(w.data(), [1.0, -2.0, 0.5]);
    }

    #[test]
    fn always_adaptive_converges_on_quadratic() {
        let c = [0.3, -1.2, 2.0];
        let a = [1.0, 4.0, 0.5];
        let mut o = RAdam::new(0.05).unwrap().with_rectification(Rectification::AlwaysAdaptive);
        let mut w = Tensor::from_vec(&[3], vec![0.0; 3]).unwrap();
        for _ in 0..1000 {
            let g: Vec<f64> = (0..3).map(|i| 2.0 * a[i] * (w.data()[i] - c[i])).collect();
            o.step(vec![("w".into(), &mut w)], &grads("w", g)).unwrap();
        }
        for i in 0..3 {
            assert!((w.data()[i] - c[i]).abs() < 1e-6, "{:?}", w.data());
        }
    }

    #[test]
    fn rebinding_to_other_parameters_fails() {
        let mut o = RAdam::new(0.1).unwrap();
        let mut w = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        o.step(vec![("w".into(), &mut w)], &grads("w", vec![1.0])).unwrap();
        assert!(o.step(vec![("u".into(), &mut w)], &grads("u", vec![1.0])).is_err());
    }
}
