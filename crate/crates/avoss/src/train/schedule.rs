//! Plateau learning-rate schedule: halve after `plateau_epochs` consecutive
//! non-improving validation epochs; stop when a halving would be required
//! after `max_halvings` have already happened.

use serde::{Deserialize, Serialize};

use super::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub current_lr: f64,
    pub best_val_loss: Option<f64>,
    pub epochs_since_improve: u32,
    pub halvings_done: u32,
    pub stopped: bool,
}

impl ScheduleState {
    pub fn new(lr0: f64) -> Self {
        ScheduleState {
            current_lr: lr0,
            best_val_loss: None,
            epochs_since_improve: 0,
            halvings_done: 0,
            stopped: false,
        }
    }
}

/// Advances the schedule by one validation epoch. Improvement means a strict
/// decrease of the validation loss.
pub fn lr_schedule_step(state: &ScheduleState, val_loss: f64, cfg: &TrainConfig) -> ScheduleState {
    let mut next = *state;
    if next.stopped {
        return next;
    }
    let improved = match next.best_val_loss {
        None => true,
        Some(best) => val_loss < best,
    };
    if improved {
        next.best_val_loss = Some(val_loss);
        next.epochs_since_improve = 0;
        return next;
    }
    next.epochs_since_improve += 1;
    if next.epochs_since_improve >= cfg.plateau_epochs {
        if next.halvings_done >= cfg.max_halvings {
            next.stopped = true;
        } else {
            next.current_lr /= 2.0;
            next.halvings_done += 1;
            next.epochs_since_improve = 0;
        }
    }
    next
}
