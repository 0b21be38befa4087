//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use mia3dcnn::{Rng, Scalar, Tensor};

/// `max |a - n| / max(‖a‖∞, ‖n‖∞)`, 0 when both are zero.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = inf(analytic).max(inf(numeric));
    if scale == 0.0 {
        return 0.0;
    }
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Central differences of `f` at the listed coordinates of `x`. The step is
/// divided by the perturbation actually representable in `T`.
pub fn central_diff<T: Scalar>(
    x: &Tensor<T>,
    coords: &[usize],
    h: f64,
    mut f: impl FnMut(&Tensor<T>) -> f64,
) -> Vec<f64> {
    let mut xp = x.clone();
    coords
        .iter()
        .map(|&i| {
            let orig = x.data()[i];
            let up = T::of(orig.f64() + h);
            let down = T::of(orig.f64() - h);
            xp.data_mut()[i] = up;
            let fu = f(&xp);
            xp.data_mut()[i] = down;
            let fd = f(&xp);
            xp.data_mut()[i] = orig;
            (fu - fd) / (up.f64() - down.f64())
        })
        .collect()
}

/// `Σ r ⊙ y` in f64.
pub fn project<T: Scalar>(r: &[f64], y: &Tensor<T>) -> f64 {
    assert_eq!(r.len(), y.len());
    r.iter().zip(y.data()).map(|(a, b)| a * b.f64()).sum()
}

pub fn uniform_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi).unwrap()).collect()
}

pub fn uniform_tensor<T: Scalar>(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, uniform_vec(rng, n, lo, hi).into_iter().map(T::of).collect()).unwrap()
}

/// Values `±(0.1 + 0.05 k)` in shuffled order: distinct, with gaps larger
/// than any finite-difference step and bounded away from zero.
pub fn separated_tensor<T: Scalar>(rng: &mut Rng, shape: &[usize]) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n)
        .map(|k| {
            let m = 0.1 + 0.05 * (k / 2) as f64;
            if k % 2 == 0 { m } else { -m }
        })
        .collect();
    rng.shuffle(&mut v);
    Tensor::from_vec(shape, v.into_iter().map(T::of).collect()).unwrap()
}

pub fn to_f64<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.f64()).collect()
}

pub fn pick<T: Scalar>(v: &[T], coords: &[usize]) -> Vec<f64> {
    coords.iter().map(|&i| v[i].f64()).collect()
}

/// Up to `k` distinct coordinates of `0..n`, or all of them when `n <= k`.
pub fn sample_coords(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    if n > k {
        rng.shuffle(&mut all);
        all.truncate(k);
        all.sort_unstable();
    }
    all
}

/// Zero-padded "same" 3x3x3 convolution, written as plain nested loops over
/// batch, output channel, the three output axes, input channel and the taps.
pub fn naive_conv3d(x: &[f64], xs: [usize; 5], w: &[f64], co: usize, b: &[f64]) -> Vec<f64> {
    let [n, ci, d, h, wd] = xs;
    let mut y = vec![0.0; n * co * d * h * wd];
    for bi in 0..n {
        for o in 0..co {
            for z in 0..d {
                for r in 0..h {
                    for c in 0..wd {
                        let mut acc = b[o];
                        for i in 0..ci {
                            for kz in 0..3 {
                                for kr in 0..3 {
                                    for kc in 0..3 {
                                        let (iz, ir, ic) = (z + kz, r + kr, c + kc);
                                        if iz == 0 || ir == 0 || ic == 0 || iz > d || ir > h || ic > wd {
                                            continue;
                                        }
                                        let xv = x[(((bi * ci + i) * d + iz - 1) * h + ir - 1) * wd + ic - 1];
                                        acc += w[(((o * ci + i) * 3 + kz) * 3 + kr) * 3 + kc] * xv;
                                    }
                                }
                            }
                        }
                        y[(((bi * co + o) * d + z) * h + r) * wd + c] = acc;
                    }
                }
            }
        }
    }
    y
}

pub mod grad;

/// Largest absolute deviation from the naive loop oracle over 50 random shapes.
pub fn conv_oracle_deviation<T: Scalar>(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (n, ci, co) = (rng.int_inclusive(1, 2), rng.int_inclusive(1, 4), rng.int_inclusive(1, 4));
        let xs = [n, ci, rng.int_inclusive(1, 9), rng.int_inclusive(1, 9), rng.int_inclusive(1, 9)];
        let x: Tensor<T> = uniform_tensor(&mut rng, &xs, -1.0, 1.0);
        let w: Tensor<T> = uniform_tensor(&mut rng, &[co, ci, 3, 3, 3], -0.5, 0.5);
        let b: Tensor<T> = uniform_tensor(&mut rng, &[co], -0.5, 0.5);
        let expect = naive_conv3d(&to_f64(&x), xs, &to_f64(&w), co, &to_f64(&b));
        let layer = mia3dcnn::layers::Conv3dLayer::new(w, b, 0.0).unwrap();
        let (y, _) = layer.forward(&x).unwrap();
        assert_eq!(y.shape(), &[n, co, xs[2], xs[3], xs[4]]);
        for (a, e) in y.data().iter().zip(&expect) {
            worst = worst.max((a.f64() - e).abs());
        }
    }
    worst
}

/// A two-block detection network on an 8×16×16 grid, fast enough for
/// multi-epoch tests.
pub const TINY_DETECTION: &str = "\
task = detection
input_dims = 8x16x16
conv_filters = 2,3
fc_neurons = 4
max_epochs = 3
early_stopping_patience = 3
";

pub fn tiny_config(extra: &str) -> mia3dcnn::trainer::TrainConfig {
    let seed = if extra.contains("seed =") { "" } else { "seed = 21\n" };
    mia3dcnn::trainer::TrainConfig::parse(&format!("{TINY_DETECTION}{seed}{extra}")).unwrap()
}

pub fn tiny_dataset(seed: u64) -> mia3dcnn::trainer::Dataset {
    use mia3dcnn::model::Variant;
    let items = mia3dcnn::volio::generate_synthetic(Variant::Detection, 4, [8, 16, 16], seed).unwrap();
    mia3dcnn::trainer::Dataset::from_volumes(Variant::Detection, items).unwrap()
}
