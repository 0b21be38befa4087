//! Layer kernels with hand-written backward passes.
//!
//! Every layer follows the same protocol: `forward` returns the output plus a
//! state value that owns whatever the backward pass needs, and `backward`
//! consumes that state. A state can therefore be used at most once.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod init;
mod pool;

pub use activation::{relu, relu_backward, softmax, ReluState};
pub use batchnorm::{BatchNormLayer, BatchNormState, BN_EPSILON, BN_MOMENTUM};
pub use conv::{Conv3dGrads, Conv3dLayer, Conv3dState, CONV_BIAS_L2, KERNEL};
pub use dense::{DenseGrads, DenseLayer, DenseState};
pub use dropout::{Dropout, DropoutState};
pub use init::he_normal_init;
pub use pool::{
    global_avg_pool3d, global_avg_pool3d_backward, maxpool3d_backward, maxpool3d_forward,
    pooled_extent, GapState, MaxPoolState, POOL,
};
