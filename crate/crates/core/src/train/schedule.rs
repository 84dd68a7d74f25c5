use serde::{Deserialize, Serialize};

use super::config::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    /// Completed epochs.
    pub epoch: usize,
    pub lr: f64,
    /// `None` until the first evaluation.
    pub best_dev_score: Option<f64>,
    pub evals_since_improvement: usize,
}

impl ScheduleState {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            epoch: 0,
            lr: cfg.lr_init,
            best_dev_score: None,
            evals_since_improvement: 0,
        }
    }

    pub fn finished(&self, cfg: &TrainConfig) -> bool {
        self.epoch >= cfg.max_epochs || self.lr < cfg.min_lr
    }
}

/// Decays the learning rate after `patience` evaluations that score below
/// the best so far. A score equal to the best is neither an improvement nor
/// a degradation.
pub fn update_lr(state: &ScheduleState, dev_score: f64, cfg: &TrainConfig) -> ScheduleState {
    let mut next = state.clone();
    match state.best_dev_score {
        Some(best) if dev_score == best => {}
        Some(best) if dev_score < best => {
            next.evals_since_improvement += 1;
            if next.evals_since_improvement >= cfg.patience {
                next.lr *= cfg.lr_decay;
                next.evals_since_improvement = 0;
            }
        }
        _ => {
            next.best_dev_score = Some(dev_score);
            next.evals_since_improvement = 0;
        }
    }
    next
}
