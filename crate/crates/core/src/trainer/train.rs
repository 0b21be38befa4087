//! The training loop, evaluation and single-volume prediction.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::augment::apply_pipeline;
use crate::error::{ensure, Result};
use crate::metrics::{argmax_rows, one_hot, weighted_cce, ClassWeights, ConfusionMatrix, EvalReport};
use crate::model::{Mode, Model, Variant};
use crate::optim::{Decision, EarlyStopper, EpochController, Optimizer, PlateauScheduler, RAdam, SgdMomentum};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::volio::{class_names, load_volume, resample_volume, DatasetIndex, Volume};

use super::config::TrainConfig;
use super::runlog::{EpochRecord, RunLog};

// rng stream labels under the config seed
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;
const STREAM_AUGMENT: u64 = 4;

#[derive(Clone, Debug)]
enum Source {
    Loaded(Volume),
    Path(PathBuf),
}

/// Labelled volumes, held in memory or read on demand.
#[derive(Clone, Debug)]
pub struct Dataset {
    variant: Variant,
    items: Vec<(Source, usize)>,
}

impl Dataset {
    pub fn from_index(index: &DatasetIndex) -> Self {
        Self {
            variant: index.variant,
            items: index
                .samples
                .iter()
                .map(|s| (Source::Path(s.path.clone()), s.label))
                .collect(),
        }
    }

    pub fn from_volumes(variant: Variant, items: Vec<(Volume, usize)>) -> Result<Self> {
        for (_, l) in &items {
            ensure!(*l < variant.num_classes(), LabelSpace, "label {l} outside the {} task", variant.name());
        }
        Ok(Self {
            variant,
            items: items.into_iter().map(|(v, l)| (Source::Loaded(v), l)).collect(),
        })
    }

    /// Reads every on-disk sample now.
    pub fn preload(mut self) -> Result<Self> {
        for (src, _) in &mut self.items {
            if let Source::Path(p) = src {
                *src = Source::Loaded(load_volume(&*p)?);
            }
        }
        Ok(self)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|(_, l)| *l).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.variant.num_classes()];
        for (_, l) in &self.items {
            c[*l] += 1;
        }
        c
    }

    /// Raw 0..=255 voxels resampled to `dims` when needed.
    fn volume(&self, i: usize, dims: [usize; 3]) -> Result<Tensor<f32>> {
        let v = match &self.items[i].0 {
            Source::Loaded(v) => v.clone(),
            Source::Path(p) => load_volume(p)?,
        };
        let v = if v.dims() == dims { v } else { resample_volume(&v, dims)? };
        Ok(v.voxels.map(|x| x * (255.0 / v.scale.max())))
    }
}

/// Stacks raw volumes into a normalized `(N, 1, D, H, W)` batch.
fn stack(vols: &[Tensor<f32>], dims: [usize; 3]) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(vols.len() * dims.iter().product::<usize>());
    for v in vols {
        data.extend(v.data().iter().map(|x| x / 255.0));
    }
    Tensor::from_vec(&[vols.len(), 1, dims[0], dims[1], dims[2]], data)
}

fn build_optimizer(cfg: &TrainConfig) -> Result<Optimizer> {
    Ok(match cfg.optimizer {
        crate::optim::OptimizerKind::RAdam => Optimizer::RAdam(RAdam::new(cfg.initial_lr)?),
        crate::optim::OptimizerKind::SgdMomentum => Optimizer::Sgd(SgdMomentum::new(cfg.initial_lr, cfg.momentum)?),
    })
}

/// Inference-mode pass: probabilities for every sample, in dataset order.
pub fn predict_dataset(model: &Model<f32>, data: &Dataset, batch_size: usize) -> Result<Tensor<f32>> {
    let dims = model.spec().input_dims;
    let k = model.num_classes();
    let mut probs = Vec::with_capacity(data.len() * k);
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let vols = chunk.iter().map(|&i| data.volume(i, dims)).collect::<Result<Vec<_>>>()?;
        probs.extend_from_slice(model.predict(&stack(&vols, dims)?)?.data());
    }
    Tensor::from_vec(&[data.len(), k], probs)
}

/// Weighted cross-entropy plus L2 penalty, and the confusion matrix, over a dataset.
fn score(model: &Model<f32>, data: &Dataset, weights: &ClassWeights, batch_size: usize) -> Result<(f64, ConfusionMatrix)> {
    let probs = predict_dataset(model, data, batch_size)?;
    let labels = data.labels();
    let (cce, _) = weighted_cce(&probs, &one_hot(&labels, model.num_classes())?, weights)?;
    let confusion = ConfusionMatrix::from_predictions(model.num_classes(), &labels, &argmax_rows(&probs)?)?;
    Ok((cce + model.l2_penalty(), confusion))
}

pub struct TrainOutcome {
    /// Best-scoring weights.
    pub model: Model<f32>,
    pub log: RunLog,
    pub optimizer: Optimizer,
    pub class_weights: ClassWeights,
}

/// Runs the full protocol: per epoch shuffle, augment, batch, step; then
/// validate, check early stopping, update the scheduler. Returns the best
/// weights.
pub fn train(cfg: &TrainConfig, train_data: &Dataset, val_data: &Dataset) -> Result<TrainOutcome> {
    train_with(cfg, train_data, val_data, |_, _| {})
}

/// Like [`train`], calling `on_epoch` after each epoch's record is logged.
pub fn train_with(
    cfg: &TrainConfig,
    train_data: &Dataset,
    val_data: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord, &Model<f32>),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    ensure!(!train_data.is_empty(), Dataset, "training split is empty");
    ensure!(!val_data.is_empty(), Dataset, "validation split is empty");
    for d in [train_data, val_data] {
        ensure!(
            d.variant() == cfg.task,
            LabelSpace,
            "{} dataset for a {} config",
            d.variant().name(),
            cfg.task.name()
        );
    }
    let dims = cfg.model.input_dims;
    let k = cfg.task.num_classes();
    let root = Rng::new(cfg.seed);
    let weights = cfg.class_weights.resolve(&train_data.class_counts())?;
    let mut model: Model<f32> = Model::build(&cfg.model, &mut root.child(STREAM_INIT))?;
    let mut optimizer = build_optimizer(cfg)?;
    let mut control = EpochController::new(
        EarlyStopper::new(cfg.early_stopping_patience, cfg.max_epochs)?,
        PlateauScheduler::new(cfg.initial_lr, cfg.scheduler_factor, cfg.scheduler_patience)?,
    );
    let mut log = RunLog::default();
    let labels = train_data.labels();
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let lr = control.lr();
        optimizer.set_lr(lr);
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        root.child(STREAM_SHUFFLE).child(epoch as u64).shuffle(&mut order);
        let mut dropout_rng = root.child(STREAM_DROPOUT).child(epoch as u64);
        let aug_root = root.child(STREAM_AUGMENT).child(epoch as u64);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let vols = batch
                .iter()
                .map(|&i| {
                    let v = train_data.volume(i, dims)?;
                    if cfg.augmentation {
                        apply_pipeline(&v, &mut aug_root.child(i as u64), &cfg.augment)
                    } else {
                        Ok(v)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let x = stack(&vols, dims)?;
            let y = one_hot(&batch.iter().map(|&i| labels[i]).collect::<Vec<_>>(), k)?;
            let probs = model.forward(&x, Mode::Train(&mut dropout_rng))?;
            let (cce, grad) = weighted_cce(&probs, &y, &weights)?;
            loss_sum += (cce + model.l2_penalty()) * batch.len() as f64;
            let grads = model.backward(&grad)?;
            optimizer.step(model.parameters_mut(), &grads)?;
        }
        let (val_loss, confusion) = score(&model, val_data, &weights, cfg.batch_size)?;
        let f1 = crate::metrics::macro_f1(&confusion)?;
        let outcome = control.end_epoch(f1, || model.clone());
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_data.len() as f64,
            val_loss,
            val_macro_f1: f1,
            lr,
            wall_secs: start.elapsed().as_secs_f64(),
        };
        log.push(record.clone())?;
        on_epoch(&record, &model);
        if let Decision::Stop(reason) = outcome.decision {
            log.stop_reason = Some(reason);
            break;
        }
    }
    log.best_epoch = Some(control.stopper.best_epoch());
    log.best_metric = Some(control.stopper.best_metric());
    let best = control.stopper.into_snapshot().expect("at least one epoch ran");
    Ok(TrainOutcome {
        model: best,
        log,
        optimizer,
        class_weights: weights,
    })
}

/// Inference-mode metrics of `model` on `data`, with uniform class weights in the loss.
pub fn evaluate(model: &Model<f32>, data: &Dataset, batch_size: usize) -> Result<EvalReport> {
    ensure!(
        data.variant() == model.variant(),
        LabelSpace,
        "{} checkpoint evaluated on a {} dataset",
        model.variant().name(),
        data.variant().name()
    );
    ensure!(!data.is_empty(), Dataset, "evaluation split is empty");
    let (loss, confusion) = score(model, data, &ClassWeights::uniform(model.num_classes()), batch_size)?;
    let names = class_names(model.variant()).iter().map(|s| s.to_string()).collect();
    EvalReport::new(names, confusion, loss)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub class_name: &'static str,
    pub probabilities: Vec<f32>,
}

/// Resamples, normalizes and classifies one volume; ties go to the lower class index.
pub fn predict_volume(model: &Model<f32>, vol: &Volume) -> Result<Prediction> {
    let dims = model.spec().input_dims;
    let v = if vol.dims() == dims { vol.clone() } else { resample_volume(vol, dims)? };
    let probs = model.predict(&v.normalized().to_batch())?;
    let class = argmax_rows(&probs)?[0];
    Ok(Prediction {
        class,
        class_name: class_names(model.variant())[class],
        probabilities: probs.into_data(),
    })
}

pub fn predict_path(model: &Model<f32>, path: impl AsRef<Path>) -> Result<Prediction> {
    predict_volume(model, &load_volume(path)?)
}
