use crate::error::{ensure, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// He-normal initialization: samples from `Normal(0, sqrt(2 / fan_in))`.
pub fn he_normal_init<T: Scalar>(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Result<Tensor<T>> {
    ensure!(fan_in >= 1, InvalidArgument, "fan_in must be >= 1");
    let std = (2.0 / fan_in as f64).sqrt();
    let mut t = Tensor::zeros(shape)?;
    for v in t.data_mut() {
        *v = T::of(std * rng.standard_normal());
    }
    Ok(t)
}
