//! Separable natural cubic spline resampling.

use crate::error::{ensure, Result};
use crate::tensor::Tensor;

use super::volume::Volume;

/// Second derivatives of the natural cubic spline through unit-spaced samples `y`.
fn spline_moments(y: &[f64], scratch: &mut Vec<f64>) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on rows 1..n-1 of [1 4 1] m = 6 * second differences
    scratch.clear();
    scratch.resize(n, 0.0);
    let c = scratch;
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let rhs = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
        let denom = 4.0 - if i > 1 { c[i - 1] } else { 0.0 };
        c[i] = 1.0 / denom;
        d[i] = (rhs - if i > 1 { d[i - 1] } else { 0.0 }) / denom;
    }
    m[n - 2] = d[n - 2];
    for i in (1..n - 2).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}

/// Interval index and offset for each destination sample, using
/// `src = (dst + 0.5) * n / m - 0.5` clamped to the source range.
fn positions(n: usize, m: usize) -> Vec<(usize, f64)> {
    let ratio = n as f64 / m as f64;
    (0..m)
        .map(|j| {
            let s = ((j as f64 + 0.5) * ratio - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            (i, s - i as f64)
        })
        .collect()
}

/// Resamples one line.
pub fn resample_line(y: &[f64], m: usize) -> Vec<f64> {
    let n = y.len();
    if n == m {
        return y.to_vec();
    }
    let mut scratch = Vec::new();
    let mm = spline_moments(y, &mut scratch);
    positions(n, m)
        .into_iter()
        .map(|(i, t)| {
            let u = 1.0 - t;
            y[i] + t * (y[i + 1] - y[i]) + ((u * u * u - u) * mm[i] + (t * t * t - t) * mm[i + 1]) / 6.0
        })
        .collect()
}

fn resample_axis(src: &[f32], dims: [usize; 3], axis: usize, m: usize) -> (Vec<f32>, [usize; 3]) {
    let n = dims[axis];
    let mut out_dims = dims;
    out_dims[axis] = m;
    if n == m {
        return (src.to_vec(), dims);
    }
    let strides = [dims[1] * dims[2], dims[2], 1];
    let out_strides = [out_dims[1] * out_dims[2], out_dims[2], 1];
    let mut out = vec![0.0f32; out_dims.iter().product()];
    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let mut line = vec![0.0f64; n];
    for a in 0..dims[others[0]] {
        for b in 0..dims[others[1]] {
            let base = a * strides[others[0]] + b * strides[others[1]];
            for (k, v) in line.iter_mut().enumerate() {
                *v = src[base + k * strides[axis]] as f64;
            }
            let obase = a * out_strides[others[0]] + b * out_strides[others[1]];
            for (k, v) in resample_line(&line, m).into_iter().enumerate() {
                out[obase + k * out_strides[axis]] = v as f32;
            }
        }
    }
    (out, out_dims)
}

/// Resamples to `target = (D, H, W)` along W, then H, then D; output is clamped
/// to the volume's intensity range.
pub fn resample_volume(vol: &Volume, target: [usize; 3]) -> Result<Volume> {
    let dims = vol.dims();
    for (axis, (&n, &m)) in dims.iter().zip(&target).enumerate() {
        ensure!(m >= 1, Shape, "target extent on axis {axis} must be >= 1");
        ensure!(
            n >= 2 || n == m,
            Shape,
            "source axis {axis} has extent {n}; resampling needs at least 2 samples"
        );
    }
    let mut data = vol.voxels.data().to_vec();
    let mut cur = dims;
    for axis in [2, 1, 0] {
        (data, cur) = resample_axis(&data, cur, axis, target[axis]);
    }
    let max = vol.scale.max();
    for v in &mut data {
        *v = v.clamp(0.0, max);
    }
    Volume::new(Tensor::from_vec(&target, data)?, vol.scale, vol.source.clone())
}
