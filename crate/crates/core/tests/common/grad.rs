//! Finite-difference checks for every layer and for a whole miniature network.
//! Each check returns the worst relative error over the tensors it covers.

use mia3dcnn::layers::*;
use mia3dcnn::metrics::{one_hot, weighted_cce, ClassWeights};
use mia3dcnn::model::{ConvBlockSpec, Mode, Model, ModelSpec, Variant};
use mia3dcnn::{Rng, Scalar, Tensor};

use super::*;

/// Step sizes: large enough at 32-bit to rise above rounding, small enough at
/// 64-bit to keep truncation error negligible.
pub fn step<T: Scalar>() -> f64 {
    if std::mem::size_of::<T>() == 4 { 1e-2 } else { 1e-7 }
}

pub fn tolerance<T: Scalar>() -> f64 {
    if std::mem::size_of::<T>() == 4 { 1e-3 } else { 1e-5 }
}

fn dims(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    rng.int_inclusive(lo, hi)
}

fn compare<T: Scalar>(
    analytic: &Tensor<T>,
    at: &Tensor<T>,
    coords: &[usize],
    f: impl FnMut(&Tensor<T>) -> f64,
) -> f64 {
    let numeric = central_diff(at, coords, step::<T>(), f);
    rel_error(&pick(analytic.data(), coords), &numeric)
}

fn all(t: &Tensor<impl Scalar>) -> Vec<usize> {
    (0..t.len()).collect()
}

pub fn conv3d<T: Scalar>(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (n, ci, co) = (dims(&mut rng, 1, 2), dims(&mut rng, 1, 3), dims(&mut rng, 1, 3));
    let shape = [n, ci, dims(&mut rng, 1, 5), dims(&mut rng, 1, 5), dims(&mut rng, 1, 5)];
    let x: Tensor<T> = uniform_tensor(&mut rng, &shape, -1.0, 1.0);
    let layer = Conv3dLayer::new(
        uniform_tensor(&mut rng, &[co, ci, 3, 3, 3], -0.5, 0.5),
        uniform_tensor(&mut rng, &[co], -0.5, 0.5),
        0.05,
    )
    .unwrap();
    let (y, st) = layer.forward(&x).unwrap();
    let r = uniform_vec(&mut rng, y.len(), -1.0, 1.0);
    let g = layer
        .backward(&Tensor::from_vec(y.shape(), r.iter().map(|&v| T::of(v)).collect()).unwrap(), st)
        .unwrap();
    let loss = |l: &Conv3dLayer<T>, x: &Tensor<T>| project(&r, &l.forward(x).unwrap().0) + l.l2_penalty();
    let ex = compare(&g.grad_x, &x, &all(&x), |xp| loss(&layer, xp));
    let ew = compare(&g.grad_w, &layer.weights, &all(&layer.weights), |wp| {
        let mut l = layer.clone();
        l.weights = wp.clone();
        loss(&l, &x)
    });
    let eb = compare(&g.grad_b, &layer.biases, &all(&layer.biases), |bp| {
        let mut l = layer.clone();
        l.biases = bp.clone();
        loss(&l, &x)
    });
    ex.max(ew).max(eb)
}

fn upstream<T: Scalar>(r: &[f64], shape: &[usize]) -> Tensor<T> {
    Tensor::from_vec(shape, r.iter().map(|&v| T::of(v)).collect()).unwrap()
}

pub fn relu_layer<T: Scalar>(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let shape = [dims(&mut rng, 1, 3), dims(&mut rng, 1, 3), dims(&mut rng, 1, 4), dims(&mut rng, 1, 4), dims(&mut rng, 1, 4)];
    let x: Tensor<T> = separated_tensor(&mut rng, &shape);
    let (y, st) = relu(&x);
    let r = uniform_vec(&mut rng, y.len(), -1.0, 1.0);
    let gx = relu_backward(&upstream(&r, y.shape()), st).unwrap();
    compare(&gx, &x, &all(&x), |xp| project(&r, &relu(xp).0))
}

pub fn maxpool<T: Scalar>(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let shape = [dims(&mut rng, 1, 2), dims(&mut rng, 1, 2), dims(&mut rng, 2, 5), dims(&mut rng, 2, 5), dims(&mut rng, 2, 5)];
    let x: Tensor<T> = separated_tensor(&mut rng, &shape);
    let (y, st) = maxpool3d_forward(&x).unwrap();
    let r = uniform_vec(&mut rng, y.len(), -1.0, 1.0);
    let gx = maxpool3d_backward(&upstream(&r, y.shape()), st).unwrap();
    compare(&gx, &x, &all(&x), |xp| project(&r, &maxpool3d_forward(xp).unwrap().0))
}

pub fn gap<T: Scalar>(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let shape = [dims(&mut rng, 1, 3), dims(&mut rng, 1, 3), dims(&mut rng, 1, 4), dims(&mut rng, 1, 4), dims(&mut rng, 1, 4)];
    let x: Tensor<T> = uniform_tensor(&mut rng, &shape, -1.0, 1.0);
    let (y, st) = global_avg_pool3d(&x).unwrap();
    let r = uniform_vec(&mut rng, y.len(), -1.0, 1.0);
    let gx = global_avg_pool3d_backward(&upstream(&r, y.shape()), st).unwrap();
    compare(&gx, &x, &all(&x), |xp| project(&r, &global_avg_pool3d(xp).unwrap().0))
}

pub fn batchnorm<T: Scalar>(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let c = dims(&mut rng, 1, 3);
    let shape = [dims(&mut rng, 2, 4), c, dims(&mut rng, 1, 3), dims(&mut rng, 1, 3), dims(&mut rng, 1, 3)];
    let x: Tensor<T> = uniform_tensor(&mut rng, &shape, -2.0, 2.0);
    let mut layer = BatchNormLayer::<T>::new(c).unwrap();
    layer.gamma = uniform_tensor(&mut rng, &[c], 0.5, 1.5);
    layer.beta = uniform_tensor(&mut rng, &[c], -0.5, 0.5);
    let base = layer.clone();
    let (y, st) = layer.forward(&x, true).unwrap();
    let r = uniform_vec(&mut rng, y.len(), -1.0, 1.0);
    let (gx, gg, gb) = layer.backward(&upstream(&r, y.shape()), st).unwrap();
    let loss = |mut l: BatchNormLayer<T>, x: &Tensor<T>| project(&r, &l.forward(x, true).unwrap().0);
    let ex = compare(&gx, &x, &all(&x), |xp| loss(base.clone(), xp));
    let eg = compare(&gg, &base.gamma, &all(&base.gamma), |gp| {
        let mut l = base.clone();
        l.gamma = gp.clone();
        loss(l, &x)
    });
    let eb = compare(&gb, &base.beta, &all(&base.beta), |bp| {
        let mut l = base.clone();
        l.beta = bp.clone();
        loss(l, &x)
    });
    ex.max(eg).max(eb)
}

pub fn dropout<T: Scalar>(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let shape = [dims(&mut rng, 1, 4), dims(&mut rng, 1, 40)];
    let x: Tensor<T> = uniform_tensor(&mut rng, &shape, -1.0, 1.0);
    let d = Dropout::new(0.5).unwrap();
    let mask_seed = seed ^ 0xd40;
    let (y, st) = d.forward(&x, &mut Rng::new(mask_seed), true);
    let r = uniform_vec(&mut rng, y.len(), -1.0, 1.0);
    let gx = d.backward(&upstream(&r, y.shape()), st).unwrap();
    compare(&gx, &x, &all(&x), |xp| project(&r, &d.forward(xp, &mut Rng::new(mask_seed), true).0))
}

pub fn dense<T: Scalar>(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (n, fi, fo) = (dims(&mut rng, 1, 4), dims(&mut rng, 1, 12), dims(&mut rng, 1, 6));
    let x: Tensor<T> = uniform_tensor(&mut rng, &[n, fi], -1.0, 1.0);
    let mut layer = DenseLayer::<T>::init(&mut rng, fi, fo).unwrap();
    layer.biases = uniform_tensor(&mut rng, &[fo], -0.5, 0.5);
    let (y, st) = layer.forward(&x).unwrap();
    let r = uniform_vec(&mut rng, y.len(), -1.0, 1.0);
    let g = layer.backward(&upstream(&r, y.shape()), st).unwrap();
    let loss = |l: &DenseLayer<T>, x: &Tensor<T>| project(&r, &l.forward(x).unwrap().0);
    let ex = compare(&g.grad_x, &x, &all(&x), |xp| loss(&layer, xp));
    let ew = compare(&g.grad_w, &layer.weights, &all(&layer.weights), |wp| {
        let mut l = layer.clone();
        l.weights = wp.clone();
        loss(&l, &x)
    });
    let eb = compare(&g.grad_b, &layer.biases, &all(&layer.biases), |bp| {
        let mut l = layer.clone();
        l.biases = bp.clone();
        loss(&l, &x)
    });
    ex.max(ew).max(eb)
}

/// Softmax followed by class-weighted cross-entropy, differentiated with
/// respect to the logits.
pub fn softmax_cce<T: Scalar>(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (n, k) = (dims(&mut rng, 1, 5), dims(&mut rng, 2, 4));
    let z: Tensor<T> = uniform_tensor(&mut rng, &[n, k], -3.0, 3.0);
    let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
    let y: Tensor<T> = one_hot(&labels, k).unwrap();
    let w = ClassWeights::new(uniform_vec(&mut rng, k, 0.5, 2.0)).unwrap();
    let (_, g) = weighted_cce(&softmax(&z).unwrap(), &y, &w).unwrap();
    compare(&g, &z, &all(&z), |zp| weighted_cce(&softmax(zp).unwrap(), &y, &w).unwrap().0)
}

/// Two conv blocks on a 16³ input, one dense block, two classes.
pub fn miniature_spec(batchnorm: bool, dropout: bool) -> ModelSpec {
    ModelSpec {
        variant: Variant::Detection,
        conv_blocks: vec![
            ConvBlockSpec::new(2, 0.01, batchnorm, dropout),
            ConvBlockSpec::new(3, 0.05, batchnorm, dropout),
        ],
        fc_blocks: vec![4],
        output_classes: 2,
        input_dims: [16, 16, 16],
        dropout_rate: 0.5,
    }
}

/// Whole-network check of `CCE + L2` against every trainable tensor, on up
/// to 24 coordinates per tensor. The analytic gradient runs at `T`; the
/// central differences always evaluate the same network at 64-bit, since at
/// 32-bit any step large enough to beat rounding crosses ReLU and max-pool
/// kinks somewhere in the volume.
pub fn end_to_end<T: Scalar>(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let extras = seed % 4 != 3;
    let spec = miniature_spec(extras, extras);
    let mut model: Model<T> = Model::build(&spec, &mut rng.child(1)).unwrap();
    // Nonzero biases so their gradients carry signal.
    for (name, t) in model.parameters_mut() {
        if name.ends_with("bias") || name.ends_with("beta") {
            *t = uniform_tensor(&mut rng, t.shape(), -0.1, 0.1);
        }
    }
    let n = 3;
    let x: Tensor<T> = uniform_tensor(&mut rng, &[n, 1, 16, 16, 16], 0.0, 1.0);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let w = ClassWeights::new(vec![0.8, 1.3]).unwrap();
    let mask_seed = seed.wrapping_mul(31) + 7;

    let mut probe = model.clone();
    let p = probe.forward(&x, Mode::Train(&mut Rng::new(mask_seed))).unwrap();
    let (_, gp) = weighted_cce(&p, &one_hot(&labels, 2).unwrap(), &w).unwrap();
    let grads = probe.backward(&gp).unwrap();

    let reference: Model<f64> = model.cast();
    let x64: Tensor<f64> = x.cast();
    let y64: Tensor<f64> = one_hot(&labels, 2).unwrap();
    let loss = |m: &mut Model<f64>| {
        let p = m.forward(&x64, Mode::Train(&mut Rng::new(mask_seed))).unwrap();
        weighted_cce(&p, &y64, &w).unwrap().0 + m.l2_penalty()
    };
    let mut worst = 0.0f64;
    for (name, value) in reference.parameters() {
        let analytic = grads.get(&name).unwrap_or_else(|| panic!("no gradient for {name}"));
        let coords = sample_coords(&mut rng, value.len(), 24);
        let numeric = central_diff(value, &coords, 1e-7, |vp| {
            let mut m = reference.clone();
            for (pn, pt) in m.parameters_mut() {
                if pn == name {
                    *pt = vp.clone();
                }
            }
            loss(&mut m)
        });
        worst = worst.max(rel_error(&pick(analytic.data(), &coords), &numeric));
    }
    worst
}

pub type Check = fn(u64) -> f64;

pub fn suite<T: Scalar>() -> Vec<(&'static str, Check)> {
    vec![
        ("conv3d", conv3d::<T> as Check),
        ("relu", relu_layer::<T>),
        ("maxpool3d", maxpool::<T>),
        ("global_avg_pool3d", gap::<T>),
        ("batchnorm", batchnorm::<T>),
        ("dropout", dropout::<T>),
        ("dense", dense::<T>),
        ("softmax_cce", softmax_cce::<T>),
        ("end_to_end", end_to_end::<T>),
    ]
}

/// Worst error of a check over `instances` seeds.
pub fn worst(check: Check, instances: u64) -> f64 {
    (0..instances).map(|s| check(1000 + s)).fold(0.0, f64::max)
}
