//! Update rules and the per-epoch control state machines.

mod radam;
mod schedule;
mod sgd;

pub use radam::{rho, RAdam, Rectification, RHO_THRESHOLD};
pub use schedule::{Decision, EarlyStopper, EpochController, EpochOutcome, PlateauScheduler, StopReason};
pub use sgd::SgdMomentum;

use crate::error::{ensure, Result};
use crate::model::Gradients;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    RAdam,
    SgdMomentum,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::RAdam => "radam",
            OptimizerKind::SgdMomentum => "sgd_momentum",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "radam" => Ok(OptimizerKind::RAdam),
            "sgd_momentum" | "sgd" => Ok(OptimizerKind::SgdMomentum),
            other => Err(crate::Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Per-parameter `f64` buffers laid out like the parameter list they were
/// created for.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct Slots {
    names: Vec<String>,
    bufs: Vec<Vec<f64>>,
}

impl Slots {
    /// Lazily sizes the buffers on first use; afterwards names and lengths must match.
    fn bind<T: Scalar>(&mut self, params: &[(String, &mut Tensor<T>)]) -> Result<()> {
        if self.names.is_empty() {
            self.names = params.iter().map(|(n, _)| n.clone()).collect();
            self.bufs = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
            return Ok(());
        }
        ensure!(
            self.names.len() == params.len(),
            Shape,
            "optimizer bound to {} parameters, got {}",
            self.names.len(),
            params.len()
        );
        for ((n, b), (pn, t)) in self.names.iter().zip(&self.bufs).zip(params) {
            ensure!(n == pn && b.len() == t.len(), Shape, "parameter {pn} does not match optimizer slot {n}");
        }
        Ok(())
    }

    fn to_entries(&self, prefix: &str) -> Vec<(String, Tensor<f32>)> {
        self.names
            .iter()
            .zip(&self.bufs)
            .map(|(n, b)| {
                let data = b.iter().map(|&v| v as f32).collect();
                (format!("{prefix}.{n}"), Tensor::from_vec(&[b.len()], data).unwrap())
            })
            .collect()
    }

    fn from_entries<'a>(
        prefix: &str,
        entries: impl IntoIterator<Item = (&'a str, &'a Tensor<f32>)>,
    ) -> Self {
        let mut s = Slots::default();
        let p = format!("{prefix}.");
        for (n, t) in entries {
            if let Some(name) = n.strip_prefix(&p) {
                s.names.push(name.to_string());
                s.bufs.push(t.data().iter().map(|&v| v as f64).collect());
            }
        }
        s
    }
}

fn check_grads<'g, T: Scalar>(
    params: &[(String, &mut Tensor<T>)],
    grads: &'g Gradients<T>,
) -> Result<Vec<&'g Tensor<T>>> {
    ensure!(
        grads.len() == params.len(),
        Shape,
        "{} gradients for {} parameters",
        grads.len(),
        params.len()
    );
    let mut out = Vec::with_capacity(params.len());
    for ((pn, p), (gn, g)) in params.iter().zip(grads.iter()) {
        ensure!(
            pn == gn && p.shape() == g.shape(),
            Shape,
            "gradient {gn} {:?} does not match parameter {pn} {:?}",
            g.shape(),
            p.shape()
        );
        out.push(g);
    }
    Ok(out)
}

/// The optimizer selected by a training config.
#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    RAdam(RAdam),
    Sgd(SgdMomentum),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        Ok(match kind {
            OptimizerKind::RAdam => Optimizer::RAdam(RAdam::new(lr)?),
            OptimizerKind::SgdMomentum => Optimizer::Sgd(SgdMomentum::new(lr, sgd::DEFAULT_MOMENTUM)?),
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            Optimizer::RAdam(_) => OptimizerKind::RAdam,
            Optimizer::Sgd(_) => OptimizerKind::SgdMomentum,
        }
    }

    pub fn step<T: Scalar>(&mut self, params: Vec<(String, &mut Tensor<T>)>, grads: &Gradients<T>) -> Result<()> {
        match self {
            Optimizer::RAdam(o) => o.step(params, grads),
            Optimizer::Sgd(o) => o.step(params, grads),
        }
    }

    pub fn lr(&self) -> f64 {
        match self {
            Optimizer::RAdam(o) => o.lr,
            Optimizer::Sgd(o) => o.lr,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        match self {
            Optimizer::RAdam(o) => o.lr = lr,
            Optimizer::Sgd(o) => o.lr = lr,
        }
    }

    /// State under the `optim.*` namespace, for checkpoints.
    pub fn state_entries(&self) -> Vec<(String, Tensor<f32>)> {
        let scalar = |v: f64| Tensor::from_vec(&[1], vec![v as f32]).unwrap();
        let mut out = vec![("optim.lr".to_string(), scalar(self.lr()))];
        match self {
            Optimizer::RAdam(o) => {
                out.push(("optim.step".to_string(), scalar(o.step_count() as f64)));
                out.extend(o.m.to_entries("optim.m"));
                out.extend(o.v.to_entries("optim.v"));
            }
            Optimizer::Sgd(o) => {
                out.push(("optim.momentum".to_string(), scalar(o.momentum)));
                out.extend(o.velocity.to_entries("optim.velocity"));
            }
        }
        out
    }

    /// Restores moments and step count written by [`Optimizer::state_entries`].
    pub fn load_state<'a>(&mut self, entries: &'a [(String, Tensor<f32>)]) {
        let it = || entries.iter().map(|(n, t)| (n.as_str(), t));
        let get = |name: &str| it().find(|(n, _)| *n == name).map(|(_, t)| t.data()[0] as f64);
        if let Some(lr) = get("optim.lr") {
            self.set_lr(lr);
        }
        match self {
            Optimizer::RAdam(o) => {
                o.t = get("optim.step").unwrap_or(0.0) as u64;
                o.m = Slots::from_entries("optim.m", it());
                o.v = Slots::from_entries("optim.v", it());
            }
            Optimizer::Sgd(o) => {
                if let Some(mu) = get("optim.momentum") {
                    o.momentum = mu;
                }
                o.velocity = Slots::from_entries("optim.velocity", it());
            }
        }
    }
}
