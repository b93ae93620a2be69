//! Losses and evaluation metrics: scale-dependent SNR, SI-SDR, improvement
//! metrics, frame-level cross-entropy for activity supervision, and the
//! multi-task total loss.
//!
//! All functions here are pure; the `*_with_grad` variants return analytic
//! gradients used by the training loop.

use serde::{Deserialize, Serialize};

use crate::audio::{Decibels, Waveform, DB_CLAMP};
use crate::error::{Error, Result};

/// Relative floor applied to the distortion term so perfect estimates clamp
/// at +60 dB instead of producing infinities.
const EPS_REL: f64 = 1e-10;

/// Predicted activities are clamped into [CE_CLAMP, 1 - CE_CLAMP] before
/// taking logs.
pub const CE_CLAMP: f64 = 1e-7;

const LN10: f64 = std::f64::consts::LN_10;

/// Frame-level voice activity, either binary oracle labels or sigmoid
/// confidences from the detection head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VadKind {
    Oracle,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VadSequence {
    values: Vec<f64>,
    kind: VadKind,
}

impl VadSequence {
    /// Oracle labels must be exactly 0 or 1.
    pub fn oracle(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data("oracle VAD values must be 0 or 1".into()));
        }
        Ok(VadSequence { values, kind: VadKind::Oracle })
    }

    /// Predicted activities must lie in the closed interval [0, 1].
    pub fn predicted(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Data("predicted VAD values must be in [0, 1]".into()));
        }
        Ok(VadSequence { values, kind: VadKind::Predicted })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> VadKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Fraction of frames where the thresholded prediction matches `oracle`.
    pub fn frame_accuracy(&self, oracle: &VadSequence) -> Result<f64> {
        if self.len() != oracle.len() {
            return Err(Error::LengthMismatch(self.len(), oracle.len()));
        }
        if self.is_empty() {
            return Ok(1.0);
        }
        let hits = self
            .values
            .iter()
            .zip(&oracle.values)
            .filter(|(p, o)| (**p >= 0.5) == (**o >= 0.5))
            .count();
        Ok(hits as f64 / self.len() as f64)
    }
}

fn check_pair(est: &Waveform, reference: &Waveform) -> Result<()> {
    if est.len() != reference.len() {
        return Err(Error::LengthMismatch(est.len(), reference.len()));
    }
    if reference.is_empty() {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    if reference.energy() == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(())
}

/// Scale-dependent signal-to-noise ratio in dB:
/// 10*log10(||s||^2 / max(||s_hat - s||^2, eps)) with eps = 1e-10*||s||^2,
/// clamped to [-60, +60].
pub fn snr_db(est: &Waveform, reference: &Waveform) -> Result<Decibels> {
    check_pair(est, reference)?;
    let signal = reference.energy();
    let distortion: f64 = est
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(e, r)| (e - r) * (e - r))
        .sum();
    let floor = EPS_REL * signal;
    Ok(Decibels::clamped(10.0 * (signal / distortion.max(floor)).log10()))
}

/// Separation loss: the negated scale-dependent SNR.
pub fn loss_on_plus_off(est: &Waveform, reference: &Waveform) -> Result<f64> {
    Ok(-snr_db(est, reference)?.value())
}

/// Separation loss plus its gradient with respect to the estimate. The
/// gradient is zero wherever the dB clamp or the distortion floor is active.
pub fn loss_on_plus_off_with_grad(
    est: &Waveform,
    reference: &Waveform,
) -> Result<(f64, Vec<f64>)> {
    check_pair(est, reference)?;
    let signal = reference.energy();
    let residual: Vec<f64> = est
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(e, r)| e - r)
        .collect();
    let distortion: f64 = residual.iter().map(|x| x * x).sum();
    let floor = EPS_REL * signal;
    let snr = 10.0 * (signal / distortion.max(floor)).log10();
    let loss = -snr.clamp(-DB_CLAMP, DB_CLAMP);
    let grad = if snr.abs() >= DB_CLAMP || distortion <= floor {
        vec![0.0; est.len()]
    } else {
        let scale = 20.0 / (LN10 * distortion);
        residual.iter().map(|x| scale * x).collect()
    };
    Ok((loss, grad))
}

/// Scale-invariant signal-to-distortion ratio in dB: project the estimate
/// onto the reference, alpha = <est, ref>/||ref||^2, and return
/// 10*log10(||alpha*ref||^2 / ||est - alpha*ref||^2), clamped to [-60, +60].
pub fn si_sdr_db(est: &Waveform, reference: &Waveform) -> Result<Decibels> {
    check_pair(est, reference)?;
    let ref_energy = reference.energy();
    let dot: f64 = est
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(e, r)| e * r)
        .sum();
    let alpha = dot / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let residual_energy: f64 = est
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(e, r)| {
            let d = e - alpha * r;
            d * d
        })
        .sum();
    if target_energy == 0.0 {
        // Orthogonal estimate: zero projection, floor of the range.
        return Ok(Decibels(-DB_CLAMP));
    }
    let floor = EPS_REL * target_energy;
    Ok(Decibels::clamped(
        10.0 * (target_energy / residual_energy.max(floor)).log10(),
    ))
}

/// Base metric for improvement reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    /// Scale-dependent SNR; also the basis of SDRi reporting.
    Snr,
    /// Scale-invariant SDR.
    SiSdr,
}

impl Metric {
    pub fn compute(&self, est: &Waveform, reference: &Waveform) -> Result<Decibels> {
        match self {
            Metric::Snr => snr_db(est, reference),
            Metric::SiSdr => si_sdr_db(est, reference),
        }
    }
}

/// Improvement over the unprocessed mixture:
/// metric(est, ref) - metric(mix, ref).
pub fn improvement(
    metric: Metric,
    est: &Waveform,
    mix: &Waveform,
    reference: &Waveform,
) -> Result<Decibels> {
    let after = metric.compute(est, reference)?;
    let before = metric.compute(mix, reference)?;
    Ok(Decibels(after.value() - before.value()))
}

/// Mean binary cross-entropy between predicted activities and oracle labels.
/// Predictions are clamped into [1e-7, 1 - 1e-7] before the logs.
pub fn vad_cross_entropy(pred: &VadSequence, oracle: &VadSequence) -> Result<f64> {
    Ok(vad_cross_entropy_with_grad(pred, oracle)?.0)
}

pub fn vad_cross_entropy_with_grad(
    pred: &VadSequence,
    oracle: &VadSequence,
) -> Result<(f64, Vec<f64>)> {
    if pred.kind() != VadKind::Predicted || oracle.kind() != VadKind::Oracle {
        return Err(Error::Data(
            "cross-entropy expects (predicted, oracle) sequences".into(),
        ));
    }
    if pred.len() != oracle.len() {
        return Err(Error::LengthMismatch(pred.len(), oracle.len()));
    }
    if pred.is_empty() {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&a_raw, &v) in pred.values().iter().zip(oracle.values()) {
        let a = a_raw.clamp(CE_CLAMP, 1.0 - CE_CLAMP);
        total -= v * a.ln() + (1.0 - v) * (1.0 - a).ln();
        if !(CE_CLAMP..=1.0 - CE_CLAMP).contains(&a_raw) {
            grad.push(0.0);
        } else {
            grad.push((-v / a + (1.0 - v) / (1.0 - a)) / n);
        }
    }
    Ok((total / n, grad))
}

/// Multi-task objective: separation loss plus lambda-weighted activity
/// cross-entropy.
pub fn total_loss(l_sep: f64, l_ce: f64, lambda: f64) -> Result<f64> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(l_sep + lambda * l_ce)
}
