use serde::{Deserialize, Serialize};

use crate::corpus::Split;

/// One SMOTE invocation during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpsampleAudit {
    pub epoch: usize,
    pub split: Split,
    pub minority: usize,
    pub synthetic: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub warnings: Vec<String>,
    pub upsampling: Vec<UpsampleAudit>,
}

impl TrainLog {
    pub(crate) fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.warnings.push(message);
    }

    pub(crate) fn epoch(&mut self, epoch: usize, loss: f64) {
        log::info!("epoch {epoch}: loss {loss:.6}");
        self.epoch_losses.push(loss);
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.epoch_losses.first().copied()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// A trained model together with its training log.
#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub log: TrainLog,
}

/// Seed for the dropout mask of one optimization step.
pub(crate) fn step_seed(seed: u64, epoch: usize, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((epoch as u64) << 32)
        .wrapping_add(step as u64)
}
