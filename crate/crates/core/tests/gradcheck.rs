mod common;

use common::grad::{self, tolerance, worst};

const INSTANCES: u64 = 20;

macro_rules! grad_tests {
    ($($name:ident: $check:ident,)*) => {
        mod f32_checks {
            use super::*;
            $(#[test]
            fn $name() {
                let e = worst(grad::$check::<f32>, INSTANCES);
                assert!(e < tolerance::<f32>(), "relative error {e:e}");
            })*
        }
        mod f64_checks {
            use super::*;
            $(#[test]
            fn $name() {
                let e = worst(grad::$check::<f64>, INSTANCES);
                // Single layers are held to a tighter bound than the whole network.
                let tol = if stringify!($check) == "end_to_end" { tolerance::<f64>() } else { 1e-6 };
                assert!(e < tol, "relative error {e:e}");
            })*
        }
    };
}

grad_tests! {
    conv3d: conv3d,
    relu: relu_layer,
    maxpool3d: maxpool,
    global_avg_pool3d: gap,
    batchnorm: batchnorm,
    dropout: dropout,
    dense: dense,
    softmax_cce: softmax_cce,
    end_to_end: end_to_end,
}
