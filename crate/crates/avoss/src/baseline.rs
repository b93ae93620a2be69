//! Mixing-based baseline: a visual-only extractor for the on-screen speech
//! and a voiceprint-only extractor for the off-screen speech, trained
//! independently and summed at the output. Comparisons against the single
//! direct model reuse the same backbone and report schema.

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::mixsim::MixtureSample;
use crate::model::{ClueMode, Model, ModelConfig};
use crate::par;
use crate::train::{eval_estimate, summarize, EvalReport, SampleEval};

/// Configuration for one half of the baseline: the same backbone as the
/// direct model, conditioned on a single clue. Single-clue extractors carry
/// no attention head (there is no fused clue to gate).
pub fn single_clue_config(kind: ClueMode, base: &ModelConfig) -> Result<ModelConfig> {
    if kind == ClueMode::Both {
        return Err(Error::Config(
            "baseline halves must be visual_only or voiceprint_only".into(),
        ));
    }
    let mut cfg = base.clone();
    cfg.clue_mode = kind;
    cfg.use_attention = false;
    Ok(cfg)
}

pub fn build_single_clue_model(kind: ClueMode, base: &ModelConfig, seed: u64) -> Result<Model> {
    Model::new(single_clue_config(kind, base)?, seed)
}

/// Sample-wise sum of the two extractor outputs. Scales are preserved, which
/// is why both halves train against the scale-dependent SNR loss.
pub fn mix_outputs(est_on: &Waveform, est_off: &Waveform) -> Result<Waveform> {
    est_on.add(est_off)
}

/// Runs both halves on every sample, sums their outputs and reports the same
/// schema as the direct model's evaluation. The parameter count is the sum
/// of both models.
pub fn evaluate_baseline(
    visual_model: &Model,
    voiceprint_model: &Model,
    dataset: &[MixtureSample],
) -> Result<EvalReport> {
    if visual_model.cfg.clue_mode != ClueMode::VisualOnly {
        return Err(Error::Config("first model must be visual_only".into()));
    }
    if voiceprint_model.cfg.clue_mode != ClueMode::VoiceprintOnly {
        return Err(Error::Config("second model must be voiceprint_only".into()));
    }
    if dataset.is_empty() {
        return Err(Error::Data("evaluation dataset is empty".into()));
    }
    let evals: Vec<Result<SampleEval>> = par::map_indexed(dataset, |_, sample| {
        let on = visual_model.forward(&sample.mix, Some(&sample.lip_features), None)?;
        let off = voiceprint_model.forward(&sample.mix, None, Some(&sample.enrollment))?;
        let est = mix_outputs(&on.est, &off.est)?;
        eval_estimate(&est, None, sample, &sample.target)
    });
    let evals = evals.into_iter().collect::<Result<Vec<_>>>()?;
    let params = visual_model.count_parameters().total + voiceprint_model.count_parameters().total;
    Ok(summarize(evals, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixsim::dataset::{synthesize_dataset, IdRange};
    use crate::mixsim::MixSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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
    fn mix_outputs_edges() {
        let a = Waveform::new(vec![0.1, -0.2, 0.3], 16_000);
        let zero = Waveform::zeros(3, 16_000);
        assert_eq!(mix_outputs(&a, &zero).unwrap().samples, a.samples);
        let b = Waveform::new(vec![0.0, 0.5, -0.1], 16_000);
        let summed = mix_outputs(&a, &b).unwrap();
        assert_eq!(summed.samples, vec![0.1, 0.3, 0.19999999999999998]);
        assert!(mix_outputs(&a, &Waveform::zeros(2, 16_000)).is_err());
    }

    #[test]
    fn perfect_disjoint_estimates_reconstruct_the_target() {
        let data = toy(1, 41);
        let s = &data[0];
        let rebuilt = mix_outputs(&s.on_component, &s.off_component).unwrap();
        assert_eq!(rebuilt.samples, s.target.samples);
    }

    #[test]
    fn independent_residuals_accumulate_energy() {
        let data = toy(1, 43);
        let s = &data[0];
        let n = s.target.len();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n1 = Waveform::new((0..n).map(|_| rng.gen_range(-0.05..0.05)).collect(), 16_000);
        let n2 = Waveform::new((0..n).map(|_| rng.gen_range(-0.05..0.05)).collect(), 16_000);
        let est_on = s.on_component.add(&n1).unwrap();
        let est_off = s.off_component.add(&n2).unwrap();
        let mixed = mix_outputs(&est_on, &est_off).unwrap();
        let residual = mixed.sub(&s.target).unwrap();
        let expect = n1.energy() + n2.energy();
        let measured = residual.energy();
        assert!(
            ((measured - expect) / expect).abs() < 0.05,
            "residual energy {measured} vs component sum {expect}"
        );
    }

    #[test]
    fn baseline_report_matches_schema_and_counts() {
        let base = crate::model::ModelConfig::tiny();
        let visual = build_single_clue_model(ClueMode::VisualOnly, &base, 1).unwrap();
        let voiceprint = build_single_clue_model(ClueMode::VoiceprintOnly, &base, 2).unwrap();
        let data = toy(3, 47);
        let report = evaluate_baseline(&visual, &voiceprint, &data).unwrap();
        assert_eq!(report.n, 3);
        assert!(report.mean_si_sdri_db.is_finite());
        assert!(report.attention_accuracy.is_none());
        assert_eq!(
            report.param_count,
            visual.count_parameters().total + voiceprint.count_parameters().total
        );

        // Composite baseline carries more parameters than the single model.
        let both = Model::new(base, 3).unwrap();
        assert!(report.param_count > both.count_parameters().total);

        // Wrong clue assignment is rejected.
        assert!(evaluate_baseline(&voiceprint, &visual, &data).is_err());
    }
}
