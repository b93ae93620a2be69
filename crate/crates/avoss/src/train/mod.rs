//! Training harness: the multi-task objective over synthesized mixtures,
//! per-sample muting, batched gradient accumulation (data-parallel across
//! the batch), the plateau schedule with early stopping, checkpointing and
//! evaluation reports.

pub mod adam;
pub mod grid;
pub mod schedule;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    improvement, loss_on_plus_off_with_grad, total_loss, vad_cross_entropy_with_grad, Metric,
    VadSequence,
};
use crate::mixsim::{apply_muting, dataset::derive_seed, MixtureSample};
use crate::model::checkpoint::Checkpoint;
use crate::model::{Model, ModelParams};
use crate::par;

pub use adam::Adam;
pub use grid::{grid_search_muting, GridCell, GridReport};
pub use schedule::{lr_schedule_step, ScheduleState};

fn default_lr0() -> f64 {
    0.001
}

fn default_plateau() -> u32 {
    3
}

fn default_max_halvings() -> u32 {
    4
}

fn default_epochs_max() -> u32 {
    200
}

fn default_batch() -> usize {
    8
}

fn default_lambda() -> f64 {
    1.0
}

fn default_p() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub plateau_epochs: u32,
    pub max_halvings: u32,
    pub epochs_max: u32,
    pub batch_size: usize,
    /// Weight of the activity cross-entropy in the total loss.
    pub lambda: f64,
    pub p_on: f64,
    pub p_off: f64,
    pub seed: u64,
    /// Parameter-name prefixes excluded from optimization.
    pub frozen: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: default_lr0(),
            plateau_epochs: default_plateau(),
            max_halvings: default_max_halvings(),
            epochs_max: default_epochs_max(),
            batch_size: default_batch(),
            lambda: default_lambda(),
            p_on: default_p(),
            p_off: default_p(),
            seed: 0,
            frozen: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0 || !self.lr0.is_finite() {
            return Err(Error::Config("lr0 must be > 0".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.p_on)
            || !(0.0..=1.0).contains(&self.p_off)
            || self.p_on + self.p_off > 1.0
        {
            return Err(Error::Config("need p_on + p_off <= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.epochs_max == 0 {
            return Err(Error::Config("epochs_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// The reference signal a model trains toward and is scored against: the
/// two-speech target for the full model, the matching single component for
/// a baseline half.
pub fn reference_signal<'a>(
    model: &Model,
    sample: &'a MixtureSample,
) -> &'a crate::audio::Waveform {
    match model.cfg.clue_mode {
        crate::model::ClueMode::Both => &sample.target,
        crate::model::ClueMode::VisualOnly => &sample.on_component,
        crate::model::ClueMode::VoiceprintOnly => &sample.off_component,
    }
}

/// The clue inputs a model consumes from a sample, per its clue mode.
pub fn model_inputs<'a>(
    model: &Model,
    sample: &'a MixtureSample,
) -> (
    Option<&'a crate::model::LipFeatures>,
    Option<&'a crate::audio::Waveform>,
) {
    let clue = model.cfg.clue_mode;
    (
        clue.uses_visual().then_some(&sample.lip_features),
        clue.uses_voiceprint().then_some(&sample.enrollment),
    )
}

/// Multi-task objective of one sample. With attention, the activity
/// cross-entropy is averaged over the R supervised blocks.
pub fn sample_loss(model: &Model, sample: &MixtureSample, lambda: f64) -> Result<f64> {
    let (lips, enroll) = model_inputs(model, sample);
    let out = model.forward(&sample.mix, lips, enroll)?;
    let (l_sep, _) = loss_on_plus_off_with_grad(&out.est, reference_signal(model, sample))?;
    if out.attentions.is_empty() {
        return Ok(l_sep);
    }
    let r = out.attentions.len() as f64;
    let mut l_ce = 0.0;
    for att in &out.attentions {
        l_ce += vad_cross_entropy_with_grad(att, &sample.oracle_vad)?.0 / r;
    }
    total_loss(l_sep, l_ce, lambda)
}

/// Loss plus parameter gradients of one sample.
pub fn sample_loss_and_grads(
    model: &Model,
    sample: &MixtureSample,
    lambda: f64,
) -> Result<(f64, ModelParams)> {
    let (lips, enroll) = model_inputs(model, sample);
    let (out, trace) = model.forward_traced(&sample.mix, lips, enroll)?;
    let (l_sep, g_est) = loss_on_plus_off_with_grad(&out.est, reference_signal(model, sample))?;
    let mut loss = l_sep;
    let mut g_atts: Vec<Array1<f64>> = Vec::with_capacity(out.attentions.len());
    if !out.attentions.is_empty() {
        let r = out.attentions.len() as f64;
        let mut l_ce = 0.0;
        for att in &out.attentions {
            let (ce, g) = vad_cross_entropy_with_grad(att, &sample.oracle_vad)?;
            l_ce += ce / r;
            g_atts.push(Array1::from_iter(g.into_iter().map(|v| lambda * v / r)));
        }
        loss = total_loss(l_sep, l_ce, lambda)?;
    }
    let grads = model.backward(&trace, &g_est, &g_atts)?;
    Ok((loss, grads))
}

pub struct Trainer {
    pub model: Model,
    pub cfg: TrainConfig,
    pub adam: Adam,
}

impl Trainer {
    pub fn new(model: Model, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Trainer { model, cfg, adam: Adam::default() })
    }

    /// One pass over the dataset: deterministic shuffle, per-sample muting,
    /// batch-parallel gradients, one optimizer update per batch. Returns the
    /// mean training loss.
    pub fn train_epoch(&mut self, dataset: &[MixtureSample], epoch: u32, lr: f64) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::Data("training dataset is empty".into()));
        }
        let epoch_seed = derive_seed(self.cfg.seed, 0x0e90_0000 + epoch as u64);
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        // Fisher-Yates with the epoch stream.
        {
            let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
            for i in (1..order.len()).rev() {
                let j = rand::Rng::gen_range(&mut rng, 0..=i);
                order.swap(i, j);
            }
        }
        let lambda = self.cfg.lambda;
        let (p_on, p_off) = (self.cfg.p_on, self.cfg.p_off);
        let mut total = 0.0;
        for batch in order.chunks(self.cfg.batch_size) {
            let results: Vec<Result<(f64, ModelParams)>> =
                par::map_indexed(batch, |_, &idx| {
                    let sample = &dataset[idx];
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(derive_seed(epoch_seed, idx as u64));
                    let muted = apply_muting(sample, p_on, p_off, &mut rng)?;
                    let (loss, grads) = sample_loss_and_grads(&self.model, &muted, lambda)?;
                    if !loss.is_finite() {
                        return Err(Error::Numeric(format!(
                            "non-finite loss on sample {} (epoch {epoch})",
                            sample.meta.id
                        )));
                    }
                    Ok((loss, grads))
                });
            let mut batch_grads: Option<ModelParams> = None;
            let mut batch_loss = 0.0;
            let mut n = 0usize;
            for r in results {
                let (loss, grads) = r?;
                batch_loss += loss;
                n += 1;
                match &mut batch_grads {
                    None => batch_grads = Some(grads),
                    Some(acc) => acc.add_assign(&grads),
                }
            }
            let mut grads = batch_grads.expect("non-empty batch");
            grads.scale(1.0 / n as f64);
            self.adam
                .step(&mut self.model.params, &grads, lr, &self.cfg.frozen);
            total += batch_loss;
        }
        Ok(total / dataset.len() as f64)
    }

    /// Mean objective without muting or updates.
    pub fn validation_loss(&self, dataset: &[MixtureSample]) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::Data("validation dataset is empty".into()));
        }
        let lambda = self.cfg.lambda;
        let losses: Vec<Result<f64>> =
            par::map_indexed(dataset, |_, s| sample_loss(&self.model, s, lambda));
        let mut total = 0.0;
        for l in losses {
            total += l?;
        }
        Ok(total / dataset.len() as f64)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEval {
    pub id: String,
    pub condition: String,
    pub si_sdri_db: f64,
    pub sdri_db: f64,
    pub attention_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConditionStats {
    pub n: usize,
    pub mean_si_sdri_db: f64,
    pub mean_sdri_db: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub mean_si_sdri_db: f64,
    pub mean_sdri_db: f64,
    pub attention_accuracy: Option<f64>,
    pub param_count: usize,
    pub per_condition: BTreeMap<String, ConditionStats>,
    pub per_sample: Vec<SampleEval>,
}

/// Evaluates SI-SDR and SNR improvements of the model output against its
/// reference (the two-speech target mixture for the full model, the matching
/// component for a baseline half), plus frame accuracy of the final block's
/// attention when oracle labels are present.
pub fn evaluate(model: &Model, dataset: &[MixtureSample]) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Data("evaluation dataset is empty".into()));
    }
    let evals: Vec<Result<SampleEval>> = par::map_indexed(dataset, |_, sample| {
        let (lips, enroll) = model_inputs(model, sample);
        let out = model.forward(&sample.mix, lips, enroll)?;
        eval_estimate(&out.est, out.attentions.last(), sample, reference_signal(model, sample))
    });
    let evals = evals.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(summarize(evals, model.count_parameters().total))
}

/// Folds per-sample numbers into the report schema shared by the proposed
/// model and the baselines.
pub fn summarize(evals: Vec<SampleEval>, param_count: usize) -> EvalReport {
    let n = evals.len();
    let mean_si = evals.iter().map(|e| e.si_sdri_db).sum::<f64>() / n as f64;
    let mean_sdr = evals.iter().map(|e| e.sdri_db).sum::<f64>() / n as f64;
    let accs: Vec<f64> = evals.iter().filter_map(|e| e.attention_accuracy).collect();
    let attention_accuracy = if accs.is_empty() {
        None
    } else {
        Some(accs.iter().sum::<f64>() / accs.len() as f64)
    };
    let mut per_condition: BTreeMap<String, ConditionStats> = BTreeMap::new();
    for e in &evals {
        let slot = per_condition.entry(e.condition.clone()).or_default();
        slot.n += 1;
        slot.mean_si_sdri_db += e.si_sdri_db;
        slot.mean_sdri_db += e.sdri_db;
    }
    for stats in per_condition.values_mut() {
        stats.mean_si_sdri_db /= stats.n as f64;
        stats.mean_sdri_db /= stats.n as f64;
    }
    EvalReport {
        n,
        mean_si_sdri_db: mean_si,
        mean_sdri_db: mean_sdr,
        attention_accuracy,
        param_count,
        per_condition,
        per_sample: evals,
    }
}

/// Improvement metrics of one estimate against a reference signal.
pub fn eval_estimate(
    est: &crate::audio::Waveform,
    attention: Option<&VadSequence>,
    sample: &MixtureSample,
    reference: &crate::audio::Waveform,
) -> Result<SampleEval> {
    let si = improvement(Metric::SiSdr, est, &sample.mix, reference)?;
    let sdr = improvement(Metric::Snr, est, &sample.mix, reference)?;
    let attention_accuracy = attention
        .map(|att| att.frame_accuracy(&sample.oracle_vad))
        .transpose()?;
    Ok(SampleEval {
        id: sample.meta.id.clone(),
        condition: sample.meta.condition.label().to_string(),
        si_sdri_db: si.value(),
        sdri_db: sdr.value(),
        attention_accuracy,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub epochs_run: u32,
    pub best_val_loss: f64,
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    pub stopped_early: bool,
}

/// Full training run: schedule-driven epochs, per-epoch metrics CSV, best and
/// last checkpoints, and a final validation report in the run directory.
pub fn run_training(
    model: Model,
    cfg: TrainConfig,
    train_set: &[MixtureSample],
    val_set: &[MixtureSample],
    run_dir: &Path,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    fs::create_dir_all(run_dir)?;
    let mut trainer = Trainer::new(model, cfg.clone())?;
    let mut schedule = ScheduleState::new(cfg.lr0);
    let mut csv = String::from("epoch,train_loss,val_loss,lr\n");
    let best_path = run_dir.join("best.ckpt");
    let last_path = run_dir.join("last.ckpt");
    let mut best_val = f64::INFINITY;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.epochs_max {
        let lr = schedule.current_lr;
        let train_loss = trainer.train_epoch(train_set, epoch, lr)?;
        let val_loss = trainer.validation_loss(val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        csv.push_str(&format!("{epoch},{train_loss},{val_loss},{lr}\n"));
        epochs_run = epoch;
        if val_loss < best_val {
            best_val = val_loss;
            save_checkpoint(&trainer, &schedule, epoch, &best_path)?;
        }
        schedule = lr_schedule_step(&schedule, val_loss, &cfg);
        if schedule.stopped {
            break;
        }
    }
    save_checkpoint(&trainer, &schedule, epochs_run, &last_path)?;
    fs::write(run_dir.join("metrics.csv"), &csv)?;

    let best = Checkpoint::load(&best_path)?;
    let report = evaluate(&best.model, val_set)?;
    fs::write(
        run_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(TrainOutcome {
        epochs_run,
        best_val_loss: best_val,
        best_checkpoint: best_path,
        last_checkpoint: last_path,
        stopped_early: schedule.stopped,
    })
}

fn save_checkpoint(
    trainer: &Trainer,
    schedule: &ScheduleState,
    epoch: u32,
    path: &Path,
) -> Result<()> {
    let mut ckpt = Checkpoint::new(trainer.model.clone());
    ckpt.epoch = epoch as u64;
    ckpt.schedule = serde_json::json!({
        "schedule": schedule,
        "optimizer": {
            "kind": "adam",
            "beta1": trainer.adam.beta1,
            "beta2": trainer.adam.beta2,
            "eps": trainer.adam.eps,
            "steps": trainer.adam.steps,
        },
        "train_config": trainer.cfg,
    });
    ckpt.rng = serde_json::json!({ "seed": trainer.cfg.seed });
    ckpt.save(path)
}
