//! Three-stage training: softmax pre-training of the feature network, hash
//! head initialisation on frozen features, and joint fine-tuning under the
//! hashing loss.

mod batcher;
mod finetune;
mod stages;

pub use batcher::{random_skip_batcher, RandomSkipBatcher};
pub use finetune::{finetune, FinetuneOutcome};
pub use stages::{
    extract_features, pretrain_stage1, pretrain_stage2, Stage1Outcome, Stage2Outcome,
};

use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// SGD step size; 0 freezes the parameters.
    pub eta: f64,
    /// Factor applied to `eta` at each plateau.
    pub decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub skip_max: usize,
    pub seed: u64,
    /// Epochs per averaging window of the plateau test.
    pub window: usize,
    /// Minimum relative improvement between consecutive windows.
    pub tolerance: f64,
    /// Plateaus tolerated before training stops.
    pub max_decays: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 0.01,
            decay: 0.1,
            batch_size: 100,
            max_epochs: 10,
            skip_max: 200,
            seed: 0,
            window: 5,
            tolerance: 1e-4,
            max_decays: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::config(format!(
                "step size must be finite and >= 0, got {}",
                self.eta
            )));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::config(format!(
                "decay must lie in (0, 1), got {}",
                self.decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.window == 0 {
            return Err(Error::config("plateau window must be at least 1 epoch"));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::config("plateau tolerance must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Stage1,
    Stage2,
    FineTune,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
            Stage::FineTune => "finetune",
        }
    }
}

/// How the hash network is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Fine-tuning from random feature and head weights.
    RandomInit,
    /// Both pre-training stages, no fine-tuning.
    PreTraining,
    /// Both pre-training stages followed by fine-tuning.
    FineTuning,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::RandomInit => "random-init",
            Strategy::PreTraining => "pre-training",
            Strategy::FineTuning => "fine-tuning",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub loss: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub strategy: Strategy,
    pub records: Vec<EpochRecord>,
    pub stage1_accuracy: Option<f64>,
    pub stage2_accuracy: Option<f64>,
    pub best_q: Option<f64>,
    /// Not part of the CSV, which must be reproducible.
    pub wall_clock: Duration,
}

impl TrainReport {
    pub fn new(strategy: Strategy) -> Self {
        TrainReport {
            strategy,
            records: Vec::new(),
            stage1_accuracy: None,
            stage2_accuracy: None,
            best_q: None,
            wall_clock: Duration::ZERO,
        }
    }

    /// Appends epoch records, refusing to go back to an earlier stage.
    pub fn extend(&mut self, records: &[EpochRecord]) -> Result<()> {
        for r in records {
            if let Some(last) = self.records.last() {
                if r.stage < last.stage {
                    return Err(Error::State(format!(
                        "{} records after {}",
                        r.stage.name(),
                        last.stage.name()
                    )));
                }
            }
            self.records.push(*r);
        }
        Ok(())
    }

    /// `epoch,stage,loss,eta`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,stage,loss,eta\n");
        for r in &self.records {
            writeln!(out, "{},{},{},{}", r.epoch, r.stage.name(), r.loss, r.eta)
                .expect("write to string");
        }
        out
    }
}

pub(crate) enum Plateau {
    Continue,
    Decayed,
    Stop,
}

/// Windowed plateau test driving learning-rate decay: compares the mean
/// loss of the last `window` epochs with the window before it.
pub(crate) struct Schedule {
    pub(crate) eta: f64,
    decay: f64,
    window: usize,
    tolerance: f64,
    max_decays: usize,
    decays: usize,
    history: Vec<f64>,
}

impl Schedule {
    pub(crate) fn new(cfg: &TrainConfig) -> Self {
        Schedule {
            eta: cfg.eta,
            decay: cfg.decay,
            window: cfg.window,
            tolerance: cfg.tolerance,
            max_decays: cfg.max_decays,
            decays: 0,
            history: Vec::new(),
        }
    }

    pub(crate) fn observe(&mut self, loss: f64) -> Plateau {
        self.history.push(loss);
        let w = self.window;
        let n = self.history.len();
        if n < 2 * w {
            return Plateau::Continue;
        }
        let prev = self.history[n - 2 * w..n - w].iter().sum::<f64>() / w as f64;
        let cur = self.history[n - w..].iter().sum::<f64>() / w as f64;
        let rel = (prev - cur) / prev.abs().max(f64::MIN_POSITIVE);
        if rel >= self.tolerance {
            return Plateau::Continue;
        }
        if self.decays >= self.max_decays {
            return Plateau::Stop;
        }
        self.decays += 1;
        self.eta *= self.decay;
        self.history.clear();
        Plateau::Decayed
    }
}

pub(crate) fn iterations_per_epoch(n: usize, batch_size: usize) -> usize {
    (n / batch_size).max(1)
}
