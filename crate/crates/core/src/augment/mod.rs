//! Seeded, slice-consistent augmentation of raw 0..=255 volumes.
//!
//! A pipeline is first planned (which ops run, their parameters, their order)
//! and then applied. Noise, blur, both flips and gamma are each gated
//! independently; rotation and cutout follow [`OpPolicy`].

mod ops;

pub use ops::{
    add_gaussian_noise, cutout, draw_cutout_rects, flip, gamma_contrast, gaussian_blur, gaussian_kernel,
    rotate_inplane, FlipAxis, Rect, BLUR_STD_LIMITS, CUTOUT_FILL, GAMMA_LIMITS, NOISE_STD_LIMITS,
};

use crate::error::{ensure, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpPolicy {
    Always,
    Gated,
    Disabled,
}

impl std::str::FromStr for OpPolicy {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "always" => Ok(OpPolicy::Always),
            "gated" => Ok(OpPolicy::Gated),
            "disabled" => Ok(OpPolicy::Disabled),
            other => Err(crate::Error::Config(format!("unknown op policy {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub noise_std_range: (f64, f64),
    pub blur_std_range: (f64, f64),
    pub rotation_deg_range: (f64, f64),
    pub cutout_max_count: usize,
    pub cutout_frac: f64,
    pub gamma_range: (f64, f64),
    pub gate_rate: f64,
    pub rotation: OpPolicy,
    pub cutout: OpPolicy,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_std_range: (0.0, 20.0),
            blur_std_range: (0.0, 2.0),
            rotation_deg_range: (-30.0, 30.0),
            cutout_max_count: 4,
            cutout_frac: 0.2,
            gamma_range: (0.5, 2.0),
            gate_rate: 0.5,
            rotation: OpPolicy::Always,
            cutout: OpPolicy::Always,
        }
    }
}

impl AugmentConfig {
    /// Every op off: applying the pipeline is the identity.
    pub fn disabled() -> Self {
        Self {
            gate_rate: 0.0,
            rotation: OpPolicy::Disabled,
            cutout: OpPolicy::Disabled,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let within = |(lo, hi): (f64, f64), (min, max): (f64, f64)| lo <= hi && lo >= min && hi <= max;
        ensure!(
            within(self.noise_std_range, NOISE_STD_LIMITS),
            Config,
            "noise std range {:?} must be ordered within {NOISE_STD_LIMITS:?}",
            self.noise_std_range
        );
        ensure!(
            within(self.blur_std_range, BLUR_STD_LIMITS),
            Config,
            "blur std range {:?} must be ordered within {BLUR_STD_LIMITS:?}",
            self.blur_std_range
        );
        ensure!(
            within(self.gamma_range, GAMMA_LIMITS),
            Config,
            "gamma range {:?} must be ordered within {GAMMA_LIMITS:?}",
            self.gamma_range
        );
        ensure!(
            self.rotation_deg_range.0 <= self.rotation_deg_range.1,
            Config,
            "rotation range is not ordered"
        );
        ensure!((0.0..=1.0).contains(&self.gate_rate), Config, "gate rate must be in [0, 1]");
        ensure!((0.0..=1.0).contains(&self.cutout_frac), Config, "cutout fraction must be in [0, 1]");
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Noise,
    Blur,
    FlipVertical,
    FlipHorizontal,
    Gamma,
    Rotation,
    Cutout,
}

impl OpKind {
    pub const GATED: [OpKind; 5] = [
        OpKind::Noise,
        OpKind::Blur,
        OpKind::FlipVertical,
        OpKind::FlipHorizontal,
        OpKind::Gamma,
    ];
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Noise { std: f64 },
    Blur { std: f64 },
    Flip(FlipAxis),
    Gamma { gamma: f64 },
    Rotation { degrees: f64 },
    Cutout { rects: Vec<Rect> },
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Noise { .. } => OpKind::Noise,
            Op::Blur { .. } => OpKind::Blur,
            Op::Flip(FlipAxis::Vertical) => OpKind::FlipVertical,
            Op::Flip(FlipAxis::Horizontal) => OpKind::FlipHorizontal,
            Op::Gamma { .. } => OpKind::Gamma,
            Op::Rotation { .. } => OpKind::Rotation,
            Op::Cutout { .. } => OpKind::Cutout,
        }
    }

    /// Noise draws its per-voxel samples from `rng`; the other ops are deterministic.
    pub fn apply(&self, vol: &Tensor<f32>, rng: &mut Rng) -> Result<Tensor<f32>> {
        match self {
            Op::Noise { std } => add_gaussian_noise(vol, rng, *std),
            Op::Blur { std } => gaussian_blur(vol, *std),
            Op::Flip(axis) => flip(vol, *axis),
            Op::Gamma { gamma } => gamma_contrast(vol, *gamma),
            Op::Rotation { degrees } => rotate_inplane(vol, *degrees),
            Op::Cutout { rects } => cutout(vol, rects),
        }
    }
}

/// Ordered list of ops with their parameters.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Plan {
    pub ops: Vec<Op>,
}

impl Plan {
    pub fn contains(&self, kind: OpKind) -> bool {
        self.ops.iter().any(|o| o.kind() == kind)
    }

    pub fn apply(&self, vol: &Tensor<f32>, rng: &mut Rng) -> Result<Tensor<f32>> {
        let mut v = vol.clone();
        for op in &self.ops {
            v = op.apply(&v, rng)?;
        }
        Ok(v)
    }
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> Result<f64> {
    if lo == hi {
        Ok(lo)
    } else {
        rng.uniform(lo, hi)
    }
}

/// Draws which ops run on a volume with slices of `h x w`, their parameters and their order.
pub fn plan(rng: &mut Rng, cfg: &AugmentConfig, h: usize, w: usize) -> Result<Plan> {
    cfg.validate()?;
    let mut ops = Vec::new();
    let gate = |rng: &mut Rng| rng.bernoulli(cfg.gate_rate);
    if gate(rng) {
        ops.push(Op::Noise {
            std: uniform(rng, cfg.noise_std_range)?,
        });
    }
    if gate(rng) {
        ops.push(Op::Blur {
            std: uniform(rng, cfg.blur_std_range)?,
        });
    }
    if gate(rng) {
        ops.push(Op::Flip(FlipAxis::Vertical));
    }
    if gate(rng) {
        ops.push(Op::Flip(FlipAxis::Horizontal));
    }
    if gate(rng) {
        ops.push(Op::Gamma {
            gamma: uniform(rng, cfg.gamma_range)?,
        });
    }
    let included = |policy: OpPolicy, rng: &mut Rng| match policy {
        OpPolicy::Always => true,
        OpPolicy::Gated => rng.bernoulli(cfg.gate_rate),
        OpPolicy::Disabled => false,
    };
    if included(cfg.rotation, rng) {
        ops.push(Op::Rotation {
            degrees: uniform(rng, cfg.rotation_deg_range)?,
        });
    }
    if included(cfg.cutout, rng) {
        let n = rng.int_inclusive(0, cfg.cutout_max_count);
        ops.push(Op::Cutout {
            rects: draw_cutout_rects(rng, n, cfg.cutout_frac, h, w),
        });
    }
    rng.shuffle(&mut ops);
    Ok(Plan { ops })
}

/// Plans and applies a pipeline to a `(D, H, W)` volume.
pub fn apply_pipeline(vol: &Tensor<f32>, rng: &mut Rng, cfg: &AugmentConfig) -> Result<Tensor<f32>> {
    let [_, h, w] = vol.dims3()?;
    plan(rng, cfg, h, w)?.apply(vol, rng)
}
