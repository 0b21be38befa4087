//! Single augmentation operations on `(D, H, W)` volumes on the 0..=255 scale.
//!
//! Every op returns a new tensor of the input shape, clamped to `[0, 255]`.

use crate::error::{ensure, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const INTENSITY_MAX: f32 = 255.0;
pub const NOISE_STD_LIMITS: (f64, f64) = (0.0, 20.0);
pub const BLUR_STD_LIMITS: (f64, f64) = (0.0, 2.0);
pub const GAMMA_LIMITS: (f64, f64) = (0.5, 2.0);
pub const CUTOUT_FILL: f32 = 128.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlipAxis {
    /// Reverses rows (H).
    Vertical,
    /// Reverses columns (W).
    Horizontal,
}

fn clamp255(v: f64) -> f32 {
    v.clamp(0.0, INTENSITY_MAX as f64) as f32
}

fn check_range(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    ensure!(
        v >= lo && v <= hi,
        InvalidArgument,
        "{name} {v} outside [{lo}, {hi}]"
    );
    Ok(())
}

pub fn add_gaussian_noise(vol: &Tensor<f32>, rng: &mut Rng, std: f64) -> Result<Tensor<f32>> {
    vol.dims3()?;
    check_range("noise std", std, NOISE_STD_LIMITS)?;
    let mut out = vol.clone();
    for v in out.data_mut() {
        *v = clamp255(*v as f64 + std * rng.standard_normal());
    }
    Ok(out)
}

/// Normalized 1D Gaussian taps for offsets `-r..=r`, `r = ceil(3*std)`.
pub fn gaussian_kernel(std: f64) -> Vec<f64> {
    if std == 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * std).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|x| (-(x * x) as f64 / (2.0 * std * std)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Half-sample symmetric reflection: `-1 -> 0`, `n -> n-1`.
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let m = i.rem_euclid(2 * n);
    (if m >= n { 2 * n - 1 - m } else { m }) as usize
}

/// Separable 2D blur over H and W of every slice.
pub fn gaussian_blur(vol: &Tensor<f32>, std: f64) -> Result<Tensor<f32>> {
    let [d, h, w] = vol.dims3()?;
    check_range("blur std", std, BLUR_STD_LIMITS)?;
    if std == 0.0 {
        return Ok(vol.clone());
    }
    let k = gaussian_kernel(std);
    let r = (k.len() / 2) as i64;
    let mut out = vol.clone();
    let mut tmp = vec![0.0f64; h * w];
    for z in 0..d {
        let src = &vol.data()[z * h * w..(z + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = k
                    .iter()
                    .enumerate()
                    .map(|(t, &kt)| kt * src[y * w + reflect(x as i64 + t as i64 - r, w)] as f64)
                    .sum();
            }
        }
        let dst = &mut out.data_mut()[z * h * w..(z + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let v: f64 = k
                    .iter()
                    .enumerate()
                    .map(|(t, &kt)| kt * tmp[reflect(y as i64 + t as i64 - r, h) * w + x])
                    .sum();
                dst[y * w + x] = clamp255(v);
            }
        }
    }
    Ok(out)
}

/// Rotates every slice by `angle_deg` about `((H-1)/2, (W-1)/2)` with
/// bilinear sampling; samples falling outside the slice are 0.
pub fn rotate_inplane(vol: &Tensor<f32>, angle_deg: f64) -> Result<Tensor<f32>> {
    let [d, h, w] = vol.dims3()?;
    if angle_deg == 0.0 {
        return Ok(vol.clone());
    }
    const TOL: f64 = 1e-9;
    let (s, c) = angle_deg.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut out = Tensor::zeros(&[d, h, w])?;
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let xs = cx + c * dx + s * dy;
            let ys = cy - s * dx + c * dy;
            if xs < -TOL || ys < -TOL || xs > w as f64 - 1.0 + TOL || ys > h as f64 - 1.0 + TOL {
                continue;
            }
            let xs = xs.clamp(0.0, w as f64 - 1.0);
            let ys = ys.clamp(0.0, h as f64 - 1.0);
            let (x0, y0) = (xs.floor() as usize, ys.floor() as usize);
            let (fx, fy) = (xs - x0 as f64, ys - y0 as f64);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            for z in 0..d {
                let p = &vol.data()[z * h * w..(z + 1) * h * w];
                let v = (1.0 - fy) * ((1.0 - fx) * p[y0 * w + x0] as f64 + fx * p[y0 * w + x1] as f64)
                    + fy * ((1.0 - fx) * p[y1 * w + x0] as f64 + fx * p[y1 * w + x1] as f64);
                out.data_mut()[z * h * w + y * w + x] = clamp255(v);
            }
        }
    }
    Ok(out)
}

pub fn flip(vol: &Tensor<f32>, axis: FlipAxis) -> Result<Tensor<f32>> {
    let [d, h, w] = vol.dims3()?;
    let mut out = vol.clone();
    let src = vol.data();
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = match axis {
                    FlipAxis::Vertical => (h - 1 - y, x),
                    FlipAxis::Horizontal => (y, w - 1 - x),
                };
                out.data_mut()[(z * h + y) * w + x] = src[(z * h + sy) * w + sx];
            }
        }
    }
    Ok(out)
}

/// Axis-aligned rectangle on a slice: top-left corner and extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub y: usize,
    pub x: usize,
    pub h: usize,
    pub w: usize,
}

/// Draws `count` rectangles of `round(frac*H) x round(frac*W)` lying fully inside the slice.
pub fn draw_cutout_rects(rng: &mut Rng, count: usize, frac: f64, h: usize, w: usize) -> Vec<Rect> {
    let rh = ((frac * h as f64).round() as usize).min(h);
    let rw = ((frac * w as f64).round() as usize).min(w);
    (0..count)
        .map(|_| Rect {
            y: rng.int_inclusive(0, h - rh),
            x: rng.int_inclusive(0, w - rw),
            h: rh,
            w: rw,
        })
        .collect()
}

/// Fills the rectangles with mid-gray on every slice.
pub fn cutout(vol: &Tensor<f32>, rects: &[Rect]) -> Result<Tensor<f32>> {
    let [d, h, w] = vol.dims3()?;
    let mut out = vol.clone();
    for r in rects {
        ensure!(
            r.y + r.h <= h && r.x + r.w <= w,
            InvalidArgument,
            "cutout rectangle {r:?} exceeds {h}x{w} slice"
        );
        for z in 0..d {
            for y in r.y..r.y + r.h {
                let row = (z * h + y) * w;
                out.data_mut()[row + r.x..row + r.x + r.w].fill(CUTOUT_FILL);
            }
        }
    }
    Ok(out)
}

pub fn gamma_contrast(vol: &Tensor<f32>, gamma: f64) -> Result<Tensor<f32>> {
    vol.dims3()?;
    check_range("gamma", gamma, GAMMA_LIMITS)?;
    Ok(vol.map(|v| clamp255(255.0 * (v as f64 / 255.0).powf(gamma))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_volume(seed: u64, d: usize, h: usize, w: usize) -> Tensor<f32> {
        let mut rng = Rng::new(seed);
        let data = (0..d * h * w).map(|_| (rng.unit() * 255.0) as f32).collect();
        Tensor::from_vec(&[d, h, w], data).unwrap()
    }

    #[test]
    fn identities_are_exact() {
        let v = random_volume(1, 3, 7, 9);
        assert_eq!(add_gaussian_noise(&v, &mut Rng::new(2), 0.0).unwrap(), v);
        assert_eq!(gaussian_blur(&v, 0.0).unwrap(), v);
        assert_eq!(rotate_inplane(&v, 0.0).unwrap(), v);
        assert_eq!(gamma_contrast(&v, 1.0).unwrap(), v);
        assert_eq!(cutout(&v, &[]).unwrap(), v);
    }

    #[test]
    fn range_checks() {
        let v = random_volume(1, 1, 4, 4);
        assert!(add_gaussian_noise(&v, &mut Rng::new(2), 20.5).is_err());
        assert!(add_gaussian_noise(&v, &mut Rng::new(2), -1.0).is_err());
        assert!(gaussian_blur(&v, 2.1).is_err());
        assert!(gamma_contrast(&v, 0.4).is_err());
        assert!(gamma_contrast(&v, 2.5).is_err());
    }

    #[test]
    fn noise_statistics() {
        let v = Tensor::full(&[16, 256, 256], 128.0f32).unwrap();
        let out = add_gaussian_noise(&v, &mut Rng::new(7), 10.0).unwrap();
        let n = out.len() as f64;
        let mean = out.data().iter().map(|&x| x as f64 - 128.0).sum::<f64>() / n;
        let var = out.data().iter().map(|&x| (x as f64 - 128.0 - mean).powi(2)).sum::<f64>() / n;
        assert!(n >= 1e6);
        assert!((9.8..=10.2).contains(&var.sqrt()), "{}", var.sqrt());
        let extreme = add_gaussian_noise(&v, &mut Rng::new(7), 20.0).unwrap();
        assert!(extreme.data().iter().all(|&x| (0.0..=255.0).contains(&x)));
    }

    #[test]
    fn blur_peak_matches_kernel() {
        let mut v = Tensor::zeros(&[1, 21, 21]).unwrap();
        v.set(&[0, 10, 10], 255.0).unwrap();
        let out = gaussian_blur(&v, 1.0).unwrap();
        // independent evaluation of the normalized 7-tap kernel's center weight
        let taps: Vec<f64> = (-3..=3).map(|x: i32| (-(x * x) as f64 / 2.0).exp()).collect();
        let k0 = 1.0 / taps.iter().sum::<f64>();
        let expect = 255.0 * k0 * k0;
        assert!((out.get(&[0, 10, 10]).unwrap() as f64 - expect).abs() < 1e-4);
        let c = Tensor::full(&[2, 5, 6], 77.0f32).unwrap();
        let bc = gaussian_blur(&c, 1.7).unwrap();
        assert!(bc.max_abs_diff(&c) < 1e-4);
    }

    #[test]
    fn reflection_indices() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(-3, 1), 0);
    }

    #[test]
    fn rotate_quarter_turn_permutes_pixels() {
        let v = random_volume(3, 2, 6, 6);
        let r = rotate_inplane(&v, 90.0).unwrap();
        for z in 0..2 {
            for y in 0..6 {
                for x in 0..6 {
                    // source x = cx + (y - cy), source y = cy - (x - cx)
                    let want = v.get(&[z, 5 - x, y]).unwrap();
                    assert!((r.get(&[z, y, x]).unwrap() - want).abs() < 1e-3);
                }
            }
        }
    }

    #[test]
    fn rotate_round_trip_interior() {
        let v = gaussian_blur(&random_volume(4, 1, 48, 48), 2.0).unwrap();
        let back = rotate_inplane(&rotate_inplane(&v, 15.0).unwrap(), -15.0).unwrap();
        let mut err = 0.0;
        let mut n = 0;
        for y in 12..36 {
            for x in 12..36 {
                err += (back.get(&[0, y, x]).unwrap() - v.get(&[0, y, x]).unwrap()).abs() as f64;
                n += 1;
            }
        }
        assert!(err / (n as f64) < 2.0, "{}", err / n as f64);
    }

    #[test]
    fn flips() {
        let v = random_volume(5, 3, 4, 5);
        for a in [FlipAxis::Vertical, FlipAxis::Horizontal] {
            assert_eq!(flip(&flip(&v, a).unwrap(), a).unwrap(), v);
            assert_eq!(
                flip(&gamma_contrast(&v, 1.7).unwrap(), a).unwrap(),
                gamma_contrast(&flip(&v, a).unwrap(), 1.7).unwrap()
            );
        }
        let h = flip(&v, FlipAxis::Horizontal).unwrap();
        assert_eq!(h.get(&[1, 2, 4]).unwrap(), v.get(&[1, 2, 0]).unwrap());
        let vv = flip(&v, FlipAxis::Vertical).unwrap();
        assert_eq!(vv.get(&[2, 0, 1]).unwrap(), v.get(&[2, 3, 1]).unwrap());
    }

    #[test]
    fn cutout_area_bound() {
        let v = Tensor::zeros(&[2, 50, 40]).unwrap();
        let mut rng = Rng::new(8);
        for n in 0..=4 {
            let rects = draw_cutout_rects(&mut rng, n, 0.2, 50, 40);
            assert!(rects.iter().all(|r| r.h == 10 && r.w == 8 && r.y + 10 <= 50 && r.x + 8 <= 40));
            let out = cutout(&v, &rects).unwrap();
            for z in 0..2 {
                let filled = out.data()[z * 2000..(z + 1) * 2000].iter().filter(|&&x| x == CUTOUT_FILL).count();
                assert!(filled as f64 <= n as f64 * 0.04 * 2000.0 + 1e-9);
                if n > 0 {
                    assert!(filled >= 80);
                }
            }
            assert_eq!(out.data()[..2000], out.data()[2000..]);
        }
    }

    #[test]
    fn gamma_values() {
        let v = Tensor::from_vec(&[1, 1, 3], vec![0.0f32, 64.0, 255.0]).unwrap();
        let out = gamma_contrast(&v, 2.0).unwrap();
        assert_eq!(out.data()[0], 0.0);
        assert_eq!(out.data()[2], 255.0);
        assert!((out.data()[1] - 16.0627).abs() < 1e-3);
        assert_eq!(gamma_contrast(&v, 0.5).unwrap().data()[2], 255.0);
    }
}
