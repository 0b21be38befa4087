//! Seeded synthetic CT-like volumes for desk-scale experiments.
//!
//! Negatives are a smooth low-frequency background; positives add bright
//! ellipsoidal blobs. For the severity task the blob count and size grow
//! with the class index.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::model::Variant;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::index::{class_names, DatasetIndex, Sample, Split};
use super::miav::write_miav;
use super::volume::{IntensityScale, Volume};

pub const DEFAULT_SYNTH_DIMS: [usize; 3] = [16, 32, 32];

struct Blob {
    center: [f64; 3],
    radius: [f64; 3],
    amplitude: f64,
}

fn background(rng: &mut Rng, dims: [usize; 3]) -> Result<Vec<f64>> {
    let [d, h, w] = dims;
    let base = rng.uniform(50.0, 70.0)?;
    let waves: Vec<([f64; 3], f64, f64)> = (0..3)
        .map(|_| -> Result<_> {
            let f = [rng.below(2) as f64, rng.below(3) as f64, rng.below(3) as f64];
            Ok((f, rng.uniform(0.0, TAU)?, rng.uniform(4.0, 10.0)?))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(d * h * w);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let mut v = base;
                for (f, phase, amp) in &waves {
                    let arg = f[0] * z as f64 / d as f64 + f[1] * y as f64 / h as f64 + f[2] * x as f64 / w as f64;
                    v += amp * (TAU * arg + phase).cos();
                }
                out.push(v);
            }
        }
    }
    Ok(out)
}

fn paint(vals: &mut [f64], dims: [usize; 3], blob: &Blob) {
    let [d, h, w] = dims;
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let p = [z as f64, y as f64, x as f64];
                let q: f64 = (0..3).map(|a| ((p[a] - blob.center[a]) / blob.radius[a]).powi(2)).sum();
                if q < 1.0 {
                    vals[(z * h + y) * w + x] += blob.amplitude * (1.0 - q).powi(2);
                }
            }
        }
    }
}

fn draw_blob(rng: &mut Rng, dims: [usize; 3], size_frac: (f64, f64)) -> Result<Blob> {
    let mut center = [0.0; 3];
    let mut radius = [0.0; 3];
    for a in 0..3 {
        let n = dims[a] as f64;
        radius[a] = (rng.uniform(size_frac.0, size_frac.1)? * n).max(1.0);
        center[a] = rng.uniform(0.2 * n, 0.8 * n)?;
    }
    Ok(Blob {
        center,
        radius,
        amplitude: rng.uniform(100.0, 140.0)?,
    })
}

/// One volume of class `label`, fully determined by `rng`.
pub fn synthetic_volume(variant: Variant, label: usize, dims: [usize; 3], rng: &mut Rng) -> Result<Volume> {
    ensure!(label < variant.num_classes(), LabelSpace, "label {label} outside the {} task", variant.name());
    ensure!(dims.iter().all(|&e| e >= 1), Shape, "dims must be >= 1, got {dims:?}");
    let mut vals = background(rng, dims)?;
    let (count, size) = match (variant, label) {
        (Variant::Detection, 0) => (rng.int_inclusive(1, 5), (0.12, 0.22)),
        (Variant::Detection, _) => (0, (0.0, 0.0)),
        (Variant::Severity, c) => {
            let s = 0.10 + 0.04 * c as f64;
            (c + 1, (s, s + 0.02))
        }
    };
    for _ in 0..count {
        let b = draw_blob(rng, dims, size)?;
        paint(&mut vals, dims, &b);
    }
    let data = vals.into_iter().map(|v| v.clamp(0.0, 255.0) as f32).collect();
    Volume::new(Tensor::from_vec(&dims, data)?, IntensityScale::Raw255, format!("synthetic/{label}"))
}

/// `n_per_class` volumes per class, interleaved by class; each sample gets its own rng stream.
pub fn generate_synthetic(variant: Variant, n_per_class: usize, dims: [usize; 3], seed: u64) -> Result<Vec<(Volume, usize)>> {
    let root = Rng::new(seed);
    let k = variant.num_classes();
    let mut out = Vec::with_capacity(n_per_class * k);
    for i in 0..n_per_class {
        for c in 0..k {
            let mut rng = root.child((c * n_per_class + i) as u64);
            out.push((synthetic_volume(variant, c, dims, &mut rng)?, c));
        }
    }
    Ok(out)
}

fn write_split(
    out: &Path,
    variant: Variant,
    split: Split,
    n_per_class: usize,
    dims: [usize; 3],
    seed: u64,
) -> Result<DatasetIndex> {
    let names = class_names(variant);
    let mut samples = Vec::new();
    let mut per_class = vec![0usize; names.len()];
    for (vol, c) in generate_synthetic(variant, n_per_class, dims, seed)? {
        let dir = out.join(split.name()).join(names[c]);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(format!("{:04}.miav", per_class[c]));
        per_class[c] += 1;
        write_miav(&vol, &path)?;
        samples.push(Sample { path, label: c });
    }
    let idx = DatasetIndex::new(variant, split, samples)?;
    idx.save(out.join(split.file_name()))?;
    Ok(idx)
}

/// Writes `<out>/{train,validation}/<class>/NNNN.miav` plus `train.tsv` and
/// `validation.tsv`. The two splits use independent streams of `seed`.
pub fn write_synthetic_dataset(
    out: impl AsRef<Path>,
    variant: Variant,
    n_per_class: usize,
    val_per_class: usize,
    dims: [usize; 3],
    seed: u64,
) -> Result<(DatasetIndex, DatasetIndex)> {
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let root = Rng::new(seed);
    let train = write_split(out, variant, Split::Train, n_per_class, dims, root.child(0).next_u64())?;
    let val = write_split(out, variant, Split::Validation, val_per_class, dims, root.child(1).next_u64())?;
    Ok((train, val))
}
