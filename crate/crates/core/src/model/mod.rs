//! The detection and severity networks.

mod checkpoint;
mod network;
mod spec;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{
    build_detection_model, build_severity_model, Architecture, ConvBlock, Gradients, Mode, Model,
};
pub use spec::{ConvBlockSpec, ModelSpec, Variant, DEFAULT_INPUT_DIMS, DROPOUT_RATE};
