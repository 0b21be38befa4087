use crate::error::{ensure, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntensityScale {
    Raw255,
    Normalized01,
}

impl IntensityScale {
    pub fn max(self) -> f32 {
        match self {
            IntensityScale::Raw255 => 255.0,
            IntensityScale::Normalized01 => 1.0,
        }
    }
}

/// A `(D, H, W)` grayscale volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub voxels: Tensor<f32>,
    pub scale: IntensityScale,
    pub source: String,
}

impl Volume {
    pub fn new(voxels: Tensor<f32>, scale: IntensityScale, source: impl Into<String>) -> Result<Self> {
        voxels.dims3()?;
        let max = scale.max();
        ensure!(
            voxels.data().iter().all(|v| (0.0..=max).contains(v)),
            InvalidArgument,
            "voxels must lie in [0, {max}]"
        );
        Ok(Self {
            voxels,
            scale,
            source: source.into(),
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.voxels.dims3().expect("volume is rank 3")
    }

    /// Maps a raw volume to `[0, 1]`; already-normalized volumes are returned as-is.
    pub fn normalized(&self) -> Volume {
        match self.scale {
            IntensityScale::Normalized01 => self.clone(),
            IntensityScale::Raw255 => Volume {
                voxels: self.voxels.map(|v| v / 255.0),
                scale: IntensityScale::Normalized01,
                source: self.source.clone(),
            },
        }
    }

    /// Wraps the voxels as a `(1, 1, D, H, W)` network input.
    pub fn to_batch(&self) -> Tensor<f32> {
        let [d, h, w] = self.dims();
        self.voxels.clone().reshape(&[1, 1, d, h, w]).expect("same element count")
    }
}
