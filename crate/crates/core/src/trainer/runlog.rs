//! Per-epoch training records, persisted as tab-separated text.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::StopReason;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_macro_f1: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub wall_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_metric: Option<f64>,
    pub stop_reason: Option<StopReason>,
}

fn reason_name(r: StopReason) -> &'static str {
    match r {
        StopReason::Patience => "patience",
        StopReason::EpochCap => "epoch_cap",
    }
}

impl RunLog {
    pub fn push(&mut self, record: EpochRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.epoch <= last.epoch {
                return Err(Error::InvalidArgument(format!(
                    "epoch {} recorded after epoch {}",
                    record.epoch, last.epoch
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    /// Floats use the shortest round-trip representation, so equal text means
    /// bit-equal values. Wall time is the only nondeterministic column and
    /// can be left out for comparisons.
    pub fn to_tsv(&self, include_timing: bool) -> String {
        let mut s = String::from("epoch\ttrain_loss\tval_loss\tval_macro_f1\tlr");
        if include_timing {
            s.push_str("\twall_secs");
        }
        s.push('\n');
        for r in &self.records {
            write!(s, "{}\t{:?}\t{:?}\t{:?}\t{:?}", r.epoch, r.train_loss, r.val_loss, r.val_macro_f1, r.lr).unwrap();
            if include_timing {
                write!(s, "\t{:.3}", r.wall_secs).unwrap();
            }
            s.push('\n');
        }
        if let (Some(e), Some(m)) = (self.best_epoch, self.best_metric) {
            writeln!(s, "# best_epoch\t{e}\n# best_val_macro_f1\t{m:?}").unwrap();
        }
        if let Some(r) = self.stop_reason {
            writeln!(s, "# stop_reason\t{}", reason_name(r)).unwrap();
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv(true)).map_err(|e| Error::io(path, e))
    }
}
