//! Weighted cross-entropy, class weights, confusion matrices and macro F1.

use std::fmt::Write as _;

use crate::error::{ensure, Error, Result};
use crate::model::Model;
use crate::tensor::{Scalar, Tensor};

/// Lower clamp applied to probabilities before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Published macro F1 figures, kept for display only.
pub const REFERENCE_DETECTION_VALIDATION_F1: f64 = 0.8681;
pub const REFERENCE_DETECTION_TEST_F1: f64 = 0.8876;
pub const REFERENCE_SEVERITY_TEST_F1: f64 = 0.7277;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeights {
    weights: Vec<f64>,
}

impl ClassWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        ensure!(!weights.is_empty(), InvalidArgument, "class weights are empty");
        ensure!(
            weights.iter().all(|&w| w.is_finite() && w > 0.0),
            InvalidArgument,
            "class weights must be positive, got {weights:?}"
        );
        Ok(Self { weights })
    }

    pub fn uniform(k: usize) -> Self {
        Self { weights: vec![1.0; k] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Balanced heuristic `w_c = total / (K * count_c)`.
pub fn class_weights_from_counts(counts: &[usize]) -> Result<ClassWeights> {
    ensure!(!counts.is_empty(), InvalidArgument, "no class counts given");
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::InvalidArgument(format!("class {c} has no samples")));
    }
    let total: usize = counts.iter().sum();
    let k = counts.len() as f64;
    ClassWeights::new(counts.iter().map(|&n| total as f64 / (k * n as f64)).collect())
}

pub fn one_hot<T: Scalar>(labels: &[usize], k: usize) -> Result<Tensor<T>> {
    let mut t = Tensor::zeros(&[labels.len(), k])?;
    for (i, &y) in labels.iter().enumerate() {
        ensure!(y < k, LabelSpace, "label {y} outside 0..{k}");
        t.data_mut()[i * k + y] = T::one();
    }
    Ok(t)
}

fn label_of<T: Scalar>(row: &[T]) -> Option<usize> {
    let mut hot = None;
    for (j, &v) in row.iter().enumerate() {
        if v == T::one() {
            if hot.is_some() {
                return None;
            }
            hot = Some(j);
        } else if v != T::zero() {
            return None;
        }
    }
    hot
}

/// Returns the mean weighted loss and its gradient with respect to the
/// logits that produced `probs` (fused softmax form).
pub fn weighted_cce<T: Scalar>(
    probs: &Tensor<T>,
    onehot: &Tensor<T>,
    weights: &ClassWeights,
) -> Result<(f64, Tensor<T>)> {
    let [n, k] = probs.dims2()?;
    ensure!(
        onehot.shape() == probs.shape(),
        Shape,
        "labels {:?} vs probabilities {:?}",
        onehot.shape(),
        probs.shape()
    );
    ensure!(
        weights.len() == k,
        LabelSpace,
        "{} class weights for {k} classes",
        weights.len()
    );
    ensure!(n >= 1, Shape, "empty batch");
    let mut grad = Tensor::zeros(&[n, k])?;
    let mut loss = 0.0;
    for i in 0..n {
        let p = &probs.data()[i * k..(i + 1) * k];
        let y = label_of(&onehot.data()[i * k..(i + 1) * k])
            .ok_or_else(|| Error::InvalidArgument(format!("label row {i} is not one-hot")))?;
        let w = weights.as_slice()[y];
        loss -= w * p[y].f64().max(LOG_CLAMP).ln();
        let g = &mut grad.data_mut()[i * k..(i + 1) * k];
        for j in 0..k {
            let target = if j == y { 1.0 } else { 0.0 };
            g[j] = T::of(w * (p[j].f64() - target) / n as f64);
        }
    }
    Ok((loss / n as f64, grad))
}

/// Cross-entropy plus the model's conv L2 penalty.
pub fn total_loss<T: Scalar>(
    model: &Model<T>,
    probs: &Tensor<T>,
    onehot: &Tensor<T>,
    weights: &ClassWeights,
) -> Result<f64> {
    Ok(weighted_cce(probs, onehot, weights)?.0 + model.l2_penalty())
}

pub fn argmax_rows<T: Scalar>(probs: &Tensor<T>) -> Result<Vec<usize>> {
    let [_, k] = probs.dims2()?;
    Ok(probs
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for j in 1..k {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Result<Self> {
        ensure!(k >= 1, InvalidArgument, "confusion matrix needs at least one class");
        Ok(Self {
            k,
            counts: vec![0; k * k],
        })
    }

    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        ensure!(
            k >= 1 && counts.len() == k * k,
            Shape,
            "{} counts for a {k}x{k} confusion matrix",
            counts.len()
        );
        Ok(Self { k, counts })
    }

    pub fn from_predictions(k: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        ensure!(
            truth.len() == predicted.len(),
            Shape,
            "{} labels vs {} predictions",
            truth.len(),
            predicted.len()
        );
        let mut m = Self::new(k)?;
        for (&t, &p) in truth.iter().zip(predicted) {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        ensure!(
            truth < self.k && predicted < self.k,
            LabelSpace,
            "pair ({truth}, {predicted}) outside 0..{}",
            self.k
        );
        self.counts[truth * self.k + predicted] += 1;
        Ok(())
    }

    /// Elementwise sum, for merging evaluation shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        ensure!(other.k == self.k, LabelSpace, "merging {}x{} into {}x{}", other.k, other.k, self.k, self.k);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn ratio(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn precision(&self, c: usize) -> f64 {
        let predicted: u64 = (0..self.k).map(|t| self.get(t, c)).sum();
        Self::ratio(self.get(c, c), predicted)
    }

    pub fn recall(&self, c: usize) -> f64 {
        let present: u64 = (0..self.k).map(|p| self.get(c, p)).sum();
        Self::ratio(self.get(c, c), present)
    }

    pub fn f1(&self, c: usize) -> f64 {
        let (p, r) = (self.precision(c), self.recall(c));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.k).map(|c| self.get(c, c)).sum();
        Self::ratio(diag, self.total())
    }
}

/// Unweighted mean of per-class F1.
pub fn macro_f1(confusion: &ConfusionMatrix) -> Result<f64> {
    ensure!(confusion.total() > 0, InvalidArgument, "empty confusion matrix");
    let k = confusion.num_classes();
    Ok((0..k).map(|c| confusion.f1(c)).sum::<f64>() / k as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub loss: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub macro_f1: f64,
}

impl EvalReport {
    pub fn new(class_names: Vec<String>, confusion: ConfusionMatrix, loss: f64) -> Result<Self> {
        let k = confusion.num_classes();
        ensure!(
            class_names.len() == k,
            LabelSpace,
            "{} class names for {k} classes",
            class_names.len()
        );
        Ok(Self {
            precision: (0..k).map(|c| confusion.precision(c)).collect(),
            recall: (0..k).map(|c| confusion.recall(c)).collect(),
            f1: (0..k).map(|c| confusion.f1(c)).collect(),
            macro_f1: macro_f1(&confusion)?,
            class_names,
            confusion,
            loss,
        })
    }

    /// Flat `key = value` block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let k = self.class_names.len();
        writeln!(s, "samples = {}", self.confusion.total()).unwrap();
        writeln!(s, "loss = {:.6}", self.loss).unwrap();
        writeln!(s, "macro_f1 = {:.4}", self.macro_f1).unwrap();
        writeln!(s, "accuracy = {:.4}", self.confusion.accuracy()).unwrap();
        for (c, name) in self.class_names.iter().enumerate() {
            writeln!(s, "precision.{name} = {:.4}", self.precision[c]).unwrap();
            writeln!(s, "recall.{name} = {:.4}", self.recall[c]).unwrap();
            writeln!(s, "f1.{name} = {:.4}", self.f1[c]).unwrap();
        }
        for t in 0..k {
            let row: Vec<String> = (0..k).map(|p| self.confusion.get(t, p).to_string()).collect();
            writeln!(s, "confusion.{} = {}", self.class_names[t], row.join(" ")).unwrap();
        }
        writeln!(
            s,
            "reference.detection_validation_macro_f1 = {REFERENCE_DETECTION_VALIDATION_F1} (not reproducible)"
        )
        .unwrap();
        writeln!(
            s,
            "reference.detection_test_macro_f1 = {REFERENCE_DETECTION_TEST_F1} (not reproducible)"
        )
        .unwrap();
        writeln!(
            s,
            "reference.severity_test_macro_f1 = {REFERENCE_SEVERITY_TEST_F1} (not reproducible)"
        )
        .unwrap();
        s
    }
}
