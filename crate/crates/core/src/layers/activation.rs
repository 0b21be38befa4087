use crate::error::{ensure, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug)]
pub struct ReluState {
    active: Vec<bool>,
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, ReluState) {
    let active: Vec<bool> = x.data().iter().map(|&v| v > T::zero()).collect();
    let y = x.map(|v| if v > T::zero() { v } else { T::zero() });
    (y, ReluState { active })
}

/// Passes the gradient where the input was strictly positive; zero at 0.
pub fn relu_backward<T: Scalar>(grad_y: &Tensor<T>, state: ReluState) -> Result<Tensor<T>> {
    ensure!(
        grad_y.len() == state.active.len(),
        Shape,
        "relu grad has {} elements, forward had {}",
        grad_y.len(),
        state.active.len()
    );
    let mut g = grad_y.clone();
    for (v, on) in g.data_mut().iter_mut().zip(state.active) {
        if !on {
            *v = T::zero();
        }
    }
    Ok(g)
}

/// Row-wise softmax over `(N, K)` logits with max subtraction.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, k] = x.dims2()?;
    ensure!(k >= 2, Shape, "softmax needs at least 2 classes, got {k}");
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks(k) {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.f64()));
        let e: Vec<f64> = row.iter().map(|v| (v.f64() - m).exp()).collect();
        let s: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| T::of(v / s)));
    }
    Tensor::from_vec(x.shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let x = Tensor::from_vec(&[3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        let (y, st) = relu(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&Tensor::full(&[3], 1.0).unwrap(), st).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_dead_region() {
        let x = Tensor::from_vec(&[3], vec![-1.0f64, -5.0, -0.1]).unwrap();
        let (y, st) = relu(&x);
        assert!(y.data().iter().all(|&v| v == 0.0));
        let g = relu_backward(&Tensor::full(&[3], 3.0).unwrap(), st).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_cases() {
        let y = softmax(&Tensor::from_vec(&[1, 2], vec![0.0f64, 0.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
        let y = softmax(&Tensor::from_vec(&[1, 2], vec![1000.0f32, 0.0]).unwrap()).unwrap();
        assert!(y.data().iter().all(|v| v.is_finite()));
        assert!((y.data()[0] - 1.0).abs() < 1e-6 && y.data()[1] < 1e-6);
        let y = softmax(&Tensor::from_vec(&[1, 2], vec![0.0f64, 3f64.ln()]).unwrap()).unwrap();
        assert!((y.data()[0] - 0.25).abs() < 1e-12);
        assert!((y.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_single_class() {
        assert!(softmax(&Tensor::from_vec(&[2, 1], vec![0.0f32, 1.0]).unwrap()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn softmax_rows_sum_to_one(v in proptest::collection::vec(-1e4f64..1e4, 12)) {
            let y = softmax(&Tensor::from_vec(&[3, 4], v).unwrap()).unwrap();
            for row in y.data().chunks(4) {
                proptest::prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn softmax_is_monotone(a in -50f64..50.0, b in -50f64..50.0) {
            let y = softmax(&Tensor::from_vec(&[1, 2], vec![a, b]).unwrap()).unwrap();
            if a > b {
                proptest::prop_assert!(y.data()[0] >= y.data()[1]);
            }
        }
    }
}
