//! Flat `key = value` training configuration.

use std::fmt::Write as _;
use std::path::Path;

use crate::augment::{AugmentConfig, OpPolicy};
use crate::error::{Error, Result};
use crate::metrics::ClassWeights;
use crate::model::{ConvBlockSpec, ModelSpec, Variant};
use crate::optim::OptimizerKind;

#[derive(Clone, Debug, PartialEq)]
pub enum ClassWeightMode {
    /// `total / (K * count)` from the training split's raw counts.
    Balanced,
    Uniform,
    Manual(Vec<f64>),
}

impl ClassWeightMode {
    pub fn resolve(&self, counts: &[usize]) -> Result<ClassWeights> {
        match self {
            ClassWeightMode::Balanced => crate::metrics::class_weights_from_counts(counts),
            ClassWeightMode::Uniform => Ok(ClassWeights::uniform(counts.len())),
            ClassWeightMode::Manual(w) => {
                if w.len() != counts.len() {
                    return Err(Error::Config(format!(
                        "{} class weights for {} classes",
                        w.len(),
                        counts.len()
                    )));
                }
                ClassWeights::new(w.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: Variant,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub initial_lr: f64,
    pub momentum: f64,
    pub scheduler_factor: f64,
    pub scheduler_patience: usize,
    pub early_stopping_patience: usize,
    pub max_epochs: usize,
    /// Version A (on) versus version B (off).
    pub augmentation: bool,
    pub augment: AugmentConfig,
    pub class_weights: ClassWeightMode,
    pub seed: u64,
    pub model: ModelSpec,
}

impl TrainConfig {
    pub fn detection() -> Self {
        Self {
            task: Variant::Detection,
            batch_size: 5,
            optimizer: OptimizerKind::RAdam,
            initial_lr: 1e-4,
            momentum: 0.9,
            scheduler_factor: 0.5,
            scheduler_patience: 20,
            early_stopping_patience: 80,
            max_epochs: 500,
            augmentation: true,
            augment: AugmentConfig::default(),
            class_weights: ClassWeightMode::Balanced,
            seed: 0,
            model: ModelSpec::detection(),
        }
    }

    pub fn severity() -> Self {
        Self {
            task: Variant::Severity,
            optimizer: OptimizerKind::SgdMomentum,
            early_stopping_patience: 50,
            max_epochs: 1000,
            model: ModelSpec::severity(),
            ..Self::detection()
        }
    }

    pub fn for_task(task: Variant) -> Self {
        match task {
            Variant::Detection => Self::detection(),
            Variant::Severity => Self::severity(),
        }
    }

    /// Parses `key = value` lines over the defaults of the file's `task`
    /// (detection when absent). `#` starts a comment; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if pairs.iter().any(|(pk, _, _): &(&str, &str, usize)| *pk == k) {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", n + 1)));
            }
            pairs.push((k, v, n + 1));
        }
        let task = match pairs.iter().find(|(k, _, _)| *k == "task") {
            Some((_, v, _)) => v.parse()?,
            None => Variant::Detection,
        };
        let mut cfg = Self::for_task(task);
        let mut filters: Option<Vec<usize>> = None;
        let mut l2: Option<Vec<f64>> = None;
        let mut extras: Option<bool> = None;
        for (k, v, line) in pairs {
            let ctx = |e: Error| Error::Config(format!("line {line}: {k}: {}", strip(e)));
            match k {
                "task" => {}
                "batch_size" => cfg.batch_size = num(v).map_err(ctx)?,
                "optimizer" => cfg.optimizer = v.parse().map_err(ctx)?,
                "initial_lr" => cfg.initial_lr = num(v).map_err(ctx)?,
                "momentum" => cfg.momentum = num(v).map_err(ctx)?,
                "scheduler_factor" => cfg.scheduler_factor = num(v).map_err(ctx)?,
                "scheduler_patience" => cfg.scheduler_patience = num(v).map_err(ctx)?,
                "early_stopping_patience" => cfg.early_stopping_patience = num(v).map_err(ctx)?,
                "max_epochs" => cfg.max_epochs = num(v).map_err(ctx)?,
                "augmentation" => cfg.augmentation = flag(v).map_err(ctx)?,
                "augment_gate_rate" => cfg.augment.gate_rate = num(v).map_err(ctx)?,
                "augment_rotation" => cfg.augment.rotation = v.parse::<OpPolicy>().map_err(ctx)?,
                "augment_cutout" => cfg.augment.cutout = v.parse::<OpPolicy>().map_err(ctx)?,
                "class_weights" => {
                    cfg.class_weights = match v {
                        "balanced" => ClassWeightMode::Balanced,
                        "uniform" => ClassWeightMode::Uniform,
                        list => ClassWeightMode::Manual(nums(list).map_err(ctx)?),
                    }
                }
                "seed" => cfg.seed = num(v).map_err(ctx)?,
                "input_dims" => cfg.model.input_dims = parse_dims(v).map_err(ctx)?,
                "conv_filters" => filters = Some(nums(v).map_err(ctx)?),
                "conv_l2" => l2 = Some(nums(v).map_err(ctx)?),
                "fc_neurons" => {
                    cfg.model.fc_blocks = if v == "none" { Vec::new() } else { nums(v).map_err(ctx)? }
                }
                "block_extras" => extras = Some(flag(v).map_err(ctx)?),
                "dropout_rate" => cfg.model.dropout_rate = num(v).map_err(ctx)?,
                other => return Err(Error::Config(format!("line {line}: unknown key {other:?}"))),
            }
        }
        cfg.model.conv_blocks = rebuild_blocks(&cfg.model, filters, l2, extras)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.scheduler_factor > 0.0 && self.scheduler_factor < 1.0) {
            return bad("scheduler_factor must be in (0, 1)");
        }
        if self.scheduler_patience == 0 || self.early_stopping_patience == 0 || self.max_epochs == 0 {
            return bad("patience values and max_epochs must be >= 1");
        }
        if self.model.variant != self.task {
            return bad("model variant does not match task");
        }
        self.augment.validate()?;
        self.model
            .validate()
            .map_err(|e| Error::Config(format!("model: {}", strip(e))))
    }

    /// Renders every key, so `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let list = |v: &[String]| if v.is_empty() { "none".to_string() } else { v.join(",") };
        let policy = |p: OpPolicy| match p {
            OpPolicy::Always => "always",
            OpPolicy::Gated => "gated",
            OpPolicy::Disabled => "disabled",
        };
        let m = &self.model;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("task", self.task.name().into());
        kv("batch_size", self.batch_size.to_string());
        kv("optimizer", self.optimizer.name().into());
        kv("initial_lr", self.initial_lr.to_string());
        kv("momentum", self.momentum.to_string());
        kv("scheduler_factor", self.scheduler_factor.to_string());
        kv("scheduler_patience", self.scheduler_patience.to_string());
        kv("early_stopping_patience", self.early_stopping_patience.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("augmentation", self.augmentation.to_string());
        kv("augment_gate_rate", self.augment.gate_rate.to_string());
        kv("augment_rotation", policy(self.augment.rotation).into());
        kv("augment_cutout", policy(self.augment.cutout).into());
        kv(
            "class_weights",
            match &self.class_weights {
                ClassWeightMode::Balanced => "balanced".into(),
                ClassWeightMode::Uniform => "uniform".into(),
                ClassWeightMode::Manual(w) => list(&w.iter().map(f64::to_string).collect::<Vec<_>>()),
            },
        );
        kv("seed", self.seed.to_string());
        kv("input_dims", format!("{}x{}x{}", m.input_dims[0], m.input_dims[1], m.input_dims[2]));
        kv("conv_filters", list(&m.conv_blocks.iter().map(|b| b.filters.to_string()).collect::<Vec<_>>()));
        kv("conv_l2", list(&m.conv_blocks.iter().map(|b| b.l2_weight_factor.to_string()).collect::<Vec<_>>()));
        kv("fc_neurons", list(&m.fc_blocks.iter().map(usize::to_string).collect::<Vec<_>>()));
        if self.task == Variant::Severity {
            kv("block_extras", m.conv_blocks.iter().any(|b| b.batchnorm).to_string());
        }
        kv("dropout_rate", m.dropout_rate.to_string());
        s
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("cannot parse {v:?}")))
}

fn nums<T: std::str::FromStr>(v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| num(p.trim())).collect()
}

fn flag(v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("expected a boolean, got {v:?}"))),
    }
}

/// Parses `DxHxW`.
pub fn parse_dims(v: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = v
        .split('x')
        .map(|p| num(p.trim()))
        .collect::<Result<_>>()
        .map_err(|_| Error::Config(format!("expected DxHxW, got {v:?}")))?;
    match parts[..] {
        [d, h, w] if d >= 1 && h >= 1 && w >= 1 => Ok([d, h, w]),
        _ => Err(Error::Config(format!("expected DxHxW with extents >= 1, got {v:?}"))),
    }
}

/// Applies conv overrides. Without explicit `conv_l2`, block `i` keeps the
/// table factor at `i` (the last one past the table's end).
fn rebuild_blocks(
    spec: &ModelSpec,
    filters: Option<Vec<usize>>,
    l2: Option<Vec<f64>>,
    extras: Option<bool>,
) -> Result<Vec<ConvBlockSpec>> {
    let table = &spec.conv_blocks;
    let filters = filters.unwrap_or_else(|| table.iter().map(|b| b.filters).collect());
    let l2 = match l2 {
        Some(l) if l.len() != filters.len() => {
            return Err(Error::Config(format!(
                "conv_l2 has {} entries, conv_filters has {}",
                l.len(),
                filters.len()
            )))
        }
        Some(l) => l,
        None => (0..filters.len())
            .map(|i| table[i.min(table.len() - 1)].l2_weight_factor)
            .collect(),
    };
    let default_extras = table[0].batchnorm;
    if extras.is_some() && spec.variant == Variant::Detection {
        return Err(Error::Config("block_extras applies to the severity task only".into()));
    }
    let on = extras.unwrap_or(default_extras);
    Ok(filters
        .into_iter()
        .zip(l2)
        .map(|(f, l)| ConvBlockSpec::new(f, l, on, on))
        .collect())
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::detection()
    }
}
