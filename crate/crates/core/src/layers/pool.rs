use crate::error::{ensure, Result};
use crate::tensor::{Scalar, Tensor};

/// Max-pool window and stride on every spatial axis.
pub const POOL: usize = 2;

/// Extent after one pooling step (remainder dropped).
pub fn pooled_extent(extent: usize) -> usize {
    extent / POOL
}

#[derive(Debug)]
pub struct MaxPoolState {
    input_shape: Vec<usize>,
    /// Flat input offset of the selected element for every output element.
    argmax: Vec<usize>,
}

/// Non-overlapping 2×2×2 max pooling with stride 2. Ties resolve to the first
/// element of the window in row-major order.
pub fn maxpool3d_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, MaxPoolState)> {
    let [n, c, d, h, w] = x.dims5()?;
    ensure!(
        d >= POOL && h >= POOL && w >= POOL,
        Shape,
        "max pooling needs spatial extents >= 2, got {:?}",
        &x.shape()[2..]
    );
    let (od, oh, ow) = (d / POOL, h / POOL, w / POOL);
    let xs = x.data();
    let mut out = Vec::with_capacity(n * c * od * oh * ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    for plane in 0..n * c {
        let base = plane * d * h * w;
        for zd in 0..od {
            for zh in 0..oh {
                for zw in 0..ow {
                    let mut best = usize::MAX;
                    let mut best_v = T::neg_infinity();
                    for kd in 0..POOL {
                        for kh in 0..POOL {
                            for kw in 0..POOL {
                                let off = base
                                    + ((zd * POOL + kd) * h + zh * POOL + kh) * w
                                    + zw * POOL
                                    + kw;
                                let v = xs[off];
                                if best == usize::MAX || v > best_v {
                                    best = off;
                                    best_v = v;
                                }
                            }
                        }
                    }
                    out.push(best_v);
                    argmax.push(best);
                }
            }
        }
    }
    let y = Tensor::from_vec(&[n, c, od, oh, ow], out)?;
    Ok((
        y,
        MaxPoolState {
            input_shape: x.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool3d_backward<T: Scalar>(grad_y: &Tensor<T>, state: MaxPoolState) -> Result<Tensor<T>> {
    ensure!(
        grad_y.len() == state.argmax.len(),
        Shape,
        "pool grad has {} elements, forward produced {}",
        grad_y.len(),
        state.argmax.len()
    );
    let mut gx = Tensor::zeros(&state.input_shape)?;
    let gxs = gx.data_mut();
    for (&off, &g) in state.argmax.iter().zip(grad_y.data()) {
        gxs[off] = gxs[off] + g;
    }
    Ok(gx)
}

#[derive(Debug)]
pub struct GapState {
    input_shape: Vec<usize>,
}

/// Mean over `(D, H, W)` per channel: `(N, C, D, H, W) -> (N, C)`.
pub fn global_avg_pool3d<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, GapState)> {
    let [n, c, d, h, w] = x.dims5()?;
    let vol = d * h * w;
    let out = x
        .data()
        .chunks(vol)
        .map(|p| T::of(p.iter().map(|v| v.f64()).sum::<f64>() / vol as f64))
        .collect();
    Ok((
        Tensor::from_vec(&[n, c], out)?,
        GapState {
            input_shape: x.shape().to_vec(),
        },
    ))
}

pub fn global_avg_pool3d_backward<T: Scalar>(grad_y: &Tensor<T>, state: GapState) -> Result<Tensor<T>> {
    let s = &state.input_shape;
    ensure!(
        grad_y.shape() == &s[..2],
        Shape,
        "GAP grad shape {:?} does not match {:?}",
        grad_y.shape(),
        &s[..2]
    );
    let vol: usize = s[2..].iter().product();
    let scale = T::of(1.0 / vol as f64);
    let mut data = Vec::with_capacity(grad_y.len() * vol);
    for &g in grad_y.data() {
        data.extend(std::iter::repeat(g * scale).take(vol));
    }
    Tensor::from_vec(s, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_max_and_routing() {
        let x = Tensor::from_vec(&[1, 1, 2, 2, 2], (1..=8).map(|v| v as f64).collect()).unwrap();
        let (y, st) = maxpool3d_forward(&x).unwrap();
        assert_eq!(y.data(), &[8.0]);
        let g = maxpool3d_backward(&Tensor::full(&[1, 1, 1, 1, 1], 1.0).unwrap(), st).unwrap();
        let mut expect = vec![0.0; 8];
        expect[7] = 1.0;
        assert_eq!(g.data(), &expect[..]);
    }

    #[test]
    fn tie_goes_to_first() {
        let x = Tensor::full(&[1, 1, 2, 2, 2], 3.0f64).unwrap();
        let (y, st) = maxpool3d_forward(&x).unwrap();
        assert_eq!(y.data(), &[3.0]);
        let g = maxpool3d_backward(&Tensor::full(&[1, 1, 1, 1, 1], 2.5).unwrap(), st).unwrap();
        assert_eq!(g.data()[0], 2.5);
        assert!(g.data()[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_halves_resolution() {
        let x = Tensor::full(&[2, 3, 4, 6, 8], 1.5f32).unwrap();
        let (y, _) = maxpool3d_forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2, 3, 4]);
        assert!(y.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn odd_extent_floors() {
        let x = Tensor::zeros(&[1, 1, 3, 7, 5]).unwrap();
        let (y, _) = maxpool3d_forward::<f32>(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 3, 2]);
    }

    #[test]
    fn default_trail() {
        let (mut d, mut hw) = (64, 224);
        let mut trail = vec![(d, hw)];
        for _ in 0..6 {
            d = pooled_extent(d);
            hw = pooled_extent(hw);
            trail.push((d, hw));
        }
        assert_eq!(
            trail,
            vec![(64, 224), (32, 112), (16, 56), (8, 28), (4, 14), (2, 7), (1, 3)]
        );
    }

    #[test]
    fn too_small_rejected() {
        let x = Tensor::zeros(&[1, 1, 1, 4, 4]).unwrap();
        assert!(maxpool3d_forward::<f32>(&x).is_err());
    }

    #[test]
    fn gap_means() {
        let x = Tensor::full(&[1, 2, 2, 3, 3], 4.0f64).unwrap();
        let (y, _) = global_avg_pool3d(&x).unwrap();
        assert_eq!(y.data(), &[4.0, 4.0]);
        let x = Tensor::from_vec(&[1, 1, 2, 1, 1], vec![0.0f64, 4.0]).unwrap();
        let (y, st) = global_avg_pool3d(&x).unwrap();
        assert_eq!(y.data(), &[2.0]);
        let g = global_avg_pool3d_backward(&Tensor::full(&[1, 1], 1.0).unwrap(), st).unwrap();
        assert_eq!(g.data(), &[0.5, 0.5]);
    }
}
