//! Grid search over the muting probabilities: one full training run per
//! valid (p_on, p_off) pair on shared data and seed, reporting mean SI-SDR
//! improvement per cell.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mixsim::MixtureSample;
use crate::model::{Model, ModelConfig};

use super::schedule::{lr_schedule_step, ScheduleState};
use super::{evaluate, TrainConfig, Trainer};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub p_on: f64,
    pub p_off: f64,
    pub valid: bool,
    /// Mean SI-SDRi on the validation set; None for invalid cells.
    pub si_sdri_db: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridReport {
    pub p_on_values: Vec<f64>,
    pub p_off_values: Vec<f64>,
    pub cells: Vec<GridCell>,
}

impl GridReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p_on,p_off,valid,si_sdri_db\n");
        for c in &self.cells {
            let value = c
                .si_sdri_db
                .map(|v| v.to_string())
                .unwrap_or_else(|| "invalid".into());
            out.push_str(&format!("{},{},{},{}\n", c.p_on, c.p_off, c.valid, value));
        }
        out
    }
}

/// Trains one model per valid pair (pairs with p_on + p_off > 1 are marked
/// invalid and skipped). Every run shares the same data, initialization seed
/// and schedule.
pub fn grid_search_muting(
    model_cfg: &ModelConfig,
    base_cfg: &TrainConfig,
    p_on_values: &[f64],
    p_off_values: &[f64],
    train_set: &[MixtureSample],
    val_set: &[MixtureSample],
) -> Result<GridReport> {
    let mut cells = Vec::with_capacity(p_on_values.len() * p_off_values.len());
    for &p_on in p_on_values {
        for &p_off in p_off_values {
            if p_on + p_off > 1.0 || !(0.0..=1.0).contains(&p_on) || !(0.0..=1.0).contains(&p_off)
            {
                cells.push(GridCell { p_on, p_off, valid: false, si_sdri_db: None });
                continue;
            }
            let cfg = TrainConfig { p_on, p_off, ..base_cfg.clone() };
            let model = Model::new(model_cfg.clone(), cfg.seed)?;
            let mut trainer = Trainer::new(model, cfg.clone())?;
            let mut schedule = ScheduleState::new(cfg.lr0);
            for epoch in 1..=cfg.epochs_max {
                trainer.train_epoch(train_set, epoch, schedule.current_lr)?;
                let val_loss = trainer.validation_loss(val_set)?;
                schedule = lr_schedule_step(&schedule, val_loss, &cfg);
                if schedule.stopped {
                    break;
                }
            }
            let report = evaluate(&trainer.model, val_set)?;
            cells.push(GridCell {
                p_on,
                p_off,
                valid: true,
                si_sdri_db: Some(report.mean_si_sdri_db),
            });
        }
    }
    Ok(GridReport {
        p_on_values: p_on_values.to_vec(),
        p_off_values: p_off_values.to_vec(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixsim::dataset::{synthesize_dataset, IdRange};
    use crate::mixsim::MixSpec;

    fn toy(count: usize, seed: u64) -> Vec<MixtureSample> {
        let spec = MixSpec {
            window_s: 0.25,
            off_duration_range_s: [0.1, 0.2],
            vad_window_len: 16,
            vad_hop: 8,
            seed,
            ..MixSpec::default()
        };
        synthesize_dataset(&spec, 3, &IdRange::new(0, 6), &IdRange::new(0, 3), count).unwrap()
    }

    #[test]
    fn single_cell_equals_plain_run() {
        let train = toy(2, 1);
        let val = toy(2, 2);
        let model_cfg = ModelConfig::tiny();
        let cfg = TrainConfig { epochs_max: 2, batch_size: 2, ..TrainConfig::default() };
        let report =
            grid_search_muting(&model_cfg, &cfg, &[0.0], &[0.0], &train, &val).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert!(report.cells[0].valid);
        let cell = report.cells[0].si_sdri_db.unwrap();

        // A plain run with the same seed and p = 0 must land on the same value.
        let plain_cfg = TrainConfig { p_on: 0.0, p_off: 0.0, ..cfg };
        let model = Model::new(model_cfg.clone(), plain_cfg.seed).unwrap();
        let mut trainer = Trainer::new(model, plain_cfg.clone()).unwrap();
        let mut schedule = ScheduleState::new(plain_cfg.lr0);
        for epoch in 1..=plain_cfg.epochs_max {
            trainer.train_epoch(&train, epoch, schedule.current_lr).unwrap();
            let v = trainer.validation_loss(&val).unwrap();
            schedule = lr_schedule_step(&schedule, v, &plain_cfg);
        }
        let direct = evaluate(&trainer.model, &val).unwrap().mean_si_sdri_db;
        assert_eq!(cell, direct);
    }

    #[test]
    fn invalid_pairs_are_marked_not_trained() {
        let train = toy(2, 3);
        let val = toy(2, 4);
        let cfg = TrainConfig { epochs_max: 1, batch_size: 2, ..TrainConfig::default() };
        let report = grid_search_muting(
            &ModelConfig::tiny(),
            &cfg,
            &[0.0, 0.6],
            &[0.0, 0.6],
            &train,
            &val,
        )
        .unwrap();
        assert_eq!(report.cells.len(), 4);
        let invalid: Vec<_> = report.cells.iter().filter(|c| !c.valid).collect();
        assert_eq!(invalid.len(), 1);
        assert_eq!((invalid[0].p_on, invalid[0].p_off), (0.6, 0.6));
        assert!(invalid[0].si_sdri_db.is_none());
        assert!(report
            .cells
            .iter()
            .filter(|c| c.valid)
            .all(|c| c.si_sdri_db.unwrap().is_finite()));
        let csv = report.to_csv();
        assert!(csv.contains("invalid"));
    }
}
