use crate::error::{ensure, Result};

/// Multiplies the learning rate by `factor` after `patience` epochs without
/// strict improvement of a maximized metric.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    lr: f64,
    best: f64,
    stale: usize,
    firings: usize,
}

impl PlateauScheduler {
    pub const DEFAULT_FACTOR: f64 = 0.5;
    pub const DEFAULT_PATIENCE: usize = 20;

    pub fn new(initial_lr: f64, factor: f64, patience: usize) -> Result<Self> {
        ensure!(initial_lr > 0.0, InvalidArgument, "learning rate must be positive");
        ensure!(factor > 0.0 && factor < 1.0, InvalidArgument, "factor must be in (0, 1)");
        ensure!(patience >= 1, InvalidArgument, "patience must be >= 1");
        Ok(Self {
            factor,
            patience,
            lr: initial_lr,
            best: f64::NEG_INFINITY,
            stale: 0,
            firings: 0,
        })
    }

    pub fn with_defaults(initial_lr: f64) -> Result<Self> {
        Self::new(initial_lr, Self::DEFAULT_FACTOR, Self::DEFAULT_PATIENCE)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn stale_epochs(&self) -> usize {
        self.stale
    }

    pub fn firings(&self) -> usize {
        self.firings
    }

    /// Feeds one epoch's metric and returns the learning rate for the next epoch.
    pub fn update(&mut self, metric: f64) -> f64 {
        if metric > self.best {
            self.best = metric;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.lr *= self.factor;
                self.firings += 1;
                self.stale = 0;
            }
        }
        self.lr
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    EpochCap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop(StopReason),
}

/// Stops after `patience` epochs without strict improvement or at
/// `max_epochs`, keeping a snapshot of whatever scored best.
#[derive(Clone, Debug)]
pub struct EarlyStopper<S> {
    pub patience: usize,
    pub max_epochs: usize,
    epoch: usize,
    best: f64,
    best_epoch: usize,
    snapshot: Option<S>,
}

impl<S> EarlyStopper<S> {
    pub fn new(patience: usize, max_epochs: usize) -> Result<Self> {
        ensure!(patience >= 1 && max_epochs >= 1, InvalidArgument, "patience and max_epochs must be >= 1");
        Ok(Self {
            patience,
            max_epochs,
            epoch: 0,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            snapshot: None,
        })
    }

    /// Epochs seen so far (1-based index of the last one).
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_metric(&self) -> f64 {
        self.best
    }

    pub fn snapshot(&self) -> Option<&S> {
        self.snapshot.as_ref()
    }

    pub fn into_snapshot(self) -> Option<S> {
        self.snapshot
    }

    /// `snapshot` is invoked only when the metric improves.
    pub fn update(&mut self, metric: f64, snapshot: impl FnOnce() -> S) -> Decision {
        self.epoch += 1;
        if metric > self.best {
            self.best = metric;
            self.best_epoch = self.epoch;
            self.snapshot = Some(snapshot());
        }
        if self.epoch - self.best_epoch >= self.patience {
            Decision::Stop(StopReason::Patience)
        } else if self.epoch >= self.max_epochs {
            Decision::Stop(StopReason::EpochCap)
        } else {
            Decision::Continue
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochOutcome {
    pub decision: Decision,
    /// Learning rate to use for the next epoch.
    pub next_lr: f64,
}

/// Early stopper and plateau scheduler fed from the same per-epoch metric;
/// the stop check runs before the scheduler update.
#[derive(Clone, Debug)]
pub struct EpochController<S> {
    pub stopper: EarlyStopper<S>,
    pub scheduler: PlateauScheduler,
}

impl<S> EpochController<S> {
    pub fn new(stopper: EarlyStopper<S>, scheduler: PlateauScheduler) -> Self {
        Self { stopper, scheduler }
    }

    pub fn lr(&self) -> f64 {
        self.scheduler.lr()
    }

    pub fn end_epoch(&mut self, metric: f64, snapshot: impl FnOnce() -> S) -> EpochOutcome {
        let decision = self.stopper.update(metric, snapshot);
        let next_lr = self.scheduler.update(metric);
        EpochOutcome { decision, next_lr }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn halves_after_twenty_stale_epochs() {
        let mut s = PlateauScheduler::with_defaults(1e-4).unwrap();
        s.update(0.5);
        for i in 1..=19 {
            assert_eq!(s.update(0.5), 1e-4, "epoch {i}");
        }
        assert_eq!(s.update(0.5), 5e-5);
        for _ in 0..19 {
            s.update(0.4);
        }
        assert_eq!(s.update(0.4), 2.5e-5);
        assert_eq!(s.firings(), 2);
    }

    #[test]
    fn late_improvement_resets() {
        let mut s = PlateauScheduler::with_defaults(1e-4).unwrap();
        s.update(0.5);
        for _ in 0..18 {
            s.update(0.1);
        }
        assert_eq!(s.update(0.6), 1e-4);
        assert_eq!(s.stale_epochs(), 0);
        // equal is not an improvement
        s.update(0.6);
        assert_eq!(s.stale_epochs(), 1);
    }

    #[test]
    fn stops_at_best_plus_patience() {
        let mut e = EarlyStopper::new(80, 500).unwrap();
        assert_eq!(e.update(0.7, || 1), Decision::Continue);
        for epoch in 2..=80 {
            assert_eq!(e.update(0.7, || epoch), Decision::Continue);
        }
        assert_eq!(e.update(0.7, || 0), Decision::Stop(StopReason::Patience));
        assert_eq!(e.epoch(), 81);
        assert_eq!(e.best_epoch(), 1);
        assert_eq!(e.snapshot(), Some(&1));
    }

    #[test]
    fn monotone_metric_runs_to_cap() {
        let mut e = EarlyStopper::new(50, 1000).unwrap();
        for epoch in 1..1000 {
            assert_eq!(e.update(epoch as f64, || epoch), Decision::Continue);
        }
        assert_eq!(e.update(1000.0, || 1000), Decision::Stop(StopReason::EpochCap));
        assert_eq!(e.into_snapshot(), Some(1000));
    }

    #[test]
    fn snapshot_tracks_best() {
        let mut e = EarlyStopper::new(3, 100).unwrap();
        for (i, m) in [0.1, 0.5, 0.3, 0.5, 0.2].into_iter().enumerate() {
            e.update(m, || i);
        }
        assert_eq!(e.snapshot(), Some(&1));
    }

    proptest! {
        #[test]
        fn lr_sequence_is_exact_halving(metrics in prop::collection::vec(0.0f64..1.0, 1..300)) {
            let mut s = PlateauScheduler::with_defaults(1e-4).unwrap();
            let mut prev = s.lr();
            for m in metrics {
                let lr = s.update(m);
                prop_assert!(lr <= prev);
                prop_assert_eq!(lr, 1e-4 * 0.5f64.powi(s.firings() as i32));
                prev = lr;
            }
        }
    }
}
