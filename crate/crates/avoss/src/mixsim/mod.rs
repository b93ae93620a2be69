//! Dataset synthesis: SNR-controlled three-source mixing, off-screen
//! cropping and placement, oracle activity labels, enrollment selection and
//! the muting strategy.

pub mod corpus;
pub mod dataset;
pub mod synth;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{FrameGrid, Waveform};
use crate::error::{Error, Result};
use crate::metrics::VadSequence;
use crate::model::LipFeatures;

pub use dataset::{load_dataset, write_dataset, DatasetIndex};
pub use synth::{synth_noise_clip, synth_speaker_clip, SynthParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipKind {
    OnScreen,
    OffScreen,
    Noise,
}

/// One source recording: on-screen speech (with synchronized lip features),
/// off-screen speech (with a speaker identity), or environmental noise.
#[derive(Debug, Clone)]
pub struct SourceClip {
    pub id: String,
    pub kind: ClipKind,
    pub speaker_id: Option<String>,
    pub wave: Waveform,
    pub lip_features: Option<LipFeatures>,
}

/// Which sounds contaminate the target mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum InterferenceMode {
    #[default]
    #[serde(rename = "noise")]
    Noise,
    #[serde(rename = "spk")]
    Speaker,
    #[serde(rename = "noise+spk")]
    NoiseSpeaker,
    #[serde(rename = "2spk")]
    TwoSpeakers,
}

impl InterferenceMode {
    /// (speech interferers, noise interferers)
    pub fn counts(self) -> (usize, usize) {
        match self {
            InterferenceMode::Noise => (0, 1),
            InterferenceMode::Speaker => (1, 0),
            InterferenceMode::NoiseSpeaker => (1, 1),
            InterferenceMode::TwoSpeakers => (2, 0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            InterferenceMode::Noise => "noise",
            InterferenceMode::Speaker => "spk",
            InterferenceMode::NoiseSpeaker => "noise+spk",
            InterferenceMode::TwoSpeakers => "2spk",
        }
    }
}

fn default_window_s() -> f64 {
    4.0
}

fn default_snr_range() -> [f64; 2] {
    [-2.5, 2.5]
}

fn default_off_duration() -> [f64; 2] {
    [2.0, 4.0]
}

fn default_sr() -> u32 {
    16_000
}

fn default_vad_window() -> usize {
    32
}

fn default_vad_hop() -> usize {
    16
}

/// Mixture generation parameters. The VAD grid fields pin the latent frame
/// grid that oracle labels are generated on; they must match the model
/// configuration the samples are consumed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixSpec {
    pub window_s: f64,
    pub snr_range_db: [f64; 2],
    pub off_duration_range_s: [f64; 2],
    pub interference_mode: InterferenceMode,
    pub sample_rate: u32,
    pub vad_window_len: usize,
    pub vad_hop: usize,
    pub seed: u64,
}

impl Default for MixSpec {
    fn default() -> Self {
        MixSpec {
            window_s: default_window_s(),
            snr_range_db: default_snr_range(),
            off_duration_range_s: default_off_duration(),
            interference_mode: InterferenceMode::Noise,
            sample_rate: default_sr(),
            vad_window_len: default_vad_window(),
            vad_hop: default_vad_hop(),
            seed: 0,
        }
    }
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window_s <= 0.0 || !self.window_s.is_finite() {
            return Err(Error::Config("window_s must be > 0".into()));
        }
        if self.snr_range_db[0] > self.snr_range_db[1] {
            return Err(Error::Config("snr_range_db: lo > hi".into()));
        }
        if self.off_duration_range_s[0] > self.off_duration_range_s[1]
            || self.off_duration_range_s[0] < 0.0
        {
            return Err(Error::Config("off_duration_range_s: invalid range".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be > 0".into()));
        }
        if self.vad_window_len == 0 || self.vad_hop == 0 || self.vad_hop > self.vad_window_len {
            return Err(Error::Config("invalid vad frame grid".into()));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.window_s * self.sample_rate as f64).round() as usize
    }

    pub fn frame_grid(&self) -> FrameGrid {
        FrameGrid::new(self.vad_window_len, self.vad_hop, self.sample_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MuteFlag {
    #[default]
    None,
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    pub condition: InterferenceMode,
    pub on_speaker: String,
    pub off_speaker: String,
    pub interferer_ids: Vec<String>,
    /// None when the off-screen crop came out empty.
    pub snr_off_db: Option<f64>,
    pub snr_interferers_db: Vec<f64>,
    /// Off-screen support [start_s, end_s).
    pub off_interval_s: (f64, f64),
    pub mute: MuteFlag,
}

/// One training/evaluation item. The components are kept so muting and the
/// mixing-linearity checks stay sample-exact: mix == target + interference
/// and target == on + off, composed in exactly that order.
#[derive(Debug, Clone)]
pub struct MixtureSample {
    pub mix: Waveform,
    pub lip_features: LipFeatures,
    pub enrollment: Waveform,
    pub target: Waveform,
    pub on_component: Waveform,
    pub off_component: Waveform,
    /// Sum of the scaled interferers. Rebuilt as mix - target when loaded
    /// from disk.
    pub interference: Waveform,
    pub oracle_vad: VadSequence,
    pub meta: SampleMeta,
}

/// Scales `signal` so that 10*log10(P_ref / P_scaled) equals `snr_db`, with
/// powers measured over the full reference window.
pub fn scale_to_snr(signal: &Waveform, reference: &Waveform, snr_db: f64) -> Result<Waveform> {
    let p_ref = reference.power();
    let p_sig = signal.power();
    if p_ref == 0.0 {
        return Err(Error::ZeroReference);
    }
    if p_sig == 0.0 {
        return Err(Error::ZeroPower);
    }
    let gain = (p_ref / (p_sig * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(signal.scaled(gain))
}

/// Crops a random-duration segment of `off` and places it at a random offset
/// inside a window of `window_s` seconds. Returns the placed waveform and
/// its support interval [start_s, end_s); a zero duration yields silence and
/// an empty interval.
pub fn crop_and_place(
    off: &Waveform,
    duration_range_s: [f64; 2],
    window_s: f64,
    rng: &mut ChaCha8Rng,
) -> (Waveform, (f64, f64)) {
    let sr = off.sample_rate as f64;
    let window = (window_s * sr).round() as usize;
    let dur_s = if duration_range_s[0] == duration_range_s[1] {
        duration_range_s[0]
    } else {
        rng.gen_range(duration_range_s[0]..duration_range_s[1])
    };
    let mut dur = (dur_s * sr).round() as usize;
    dur = dur.min(window).min(off.len());
    if dur == 0 {
        return (Waveform::zeros(window, off.sample_rate), (0.0, 0.0));
    }
    let src_start = if off.len() > dur { rng.gen_range(0..=off.len() - dur) } else { 0 };
    let dst_start = if window > dur { rng.gen_range(0..=window - dur) } else { 0 };
    let mut placed = vec![0.0; window];
    placed[dst_start..dst_start + dur]
        .copy_from_slice(&off.samples[src_start..src_start + dur]);
    let interval = (dst_start as f64 / sr, (dst_start + dur) as f64 / sr);
    (Waveform::new(placed, off.sample_rate), interval)
}

/// Frame-level oracle activity: 1 exactly on frames whose time span overlaps
/// the interval.
pub fn oracle_vad(interval: (f64, f64), t_frames: usize, grid: &FrameGrid) -> VadSequence {
    let (a, b) = interval;
    let values = (0..t_frames)
        .map(|t| {
            let (s, e) = grid.span(t);
            f64::from(a < b && s < b && e > a)
        })
        .collect();
    VadSequence::oracle(values).expect("binary labels")
}

/// Builds one mixture: place and scale the off-screen speech, scale each
/// interferer, and sum everything into the on-screen window.
pub fn make_sample(
    on: &SourceClip,
    off: &SourceClip,
    interferers: &[SourceClip],
    enrollment: &SourceClip,
    spec: &MixSpec,
    rng: &mut ChaCha8Rng,
) -> Result<MixtureSample> {
    spec.validate()?;
    if on.kind != ClipKind::OnScreen {
        return Err(Error::Data(format!("{}: expected an on-screen clip", on.id)));
    }
    let lips = on
        .lip_features
        .as_ref()
        .ok_or_else(|| Error::Data(format!("{}: on-screen clip lacks lip features", on.id)))?;
    if off.kind != ClipKind::OffScreen {
        return Err(Error::Data(format!("{}: expected an off-screen clip", off.id)));
    }
    if enrollment.speaker_id.is_none() || enrollment.speaker_id != off.speaker_id {
        return Err(Error::Data(format!(
            "enrollment speaker {:?} does not match off-screen speaker {:?}",
            enrollment.speaker_id, off.speaker_id
        )));
    }
    if enrollment.id == off.id {
        return Err(Error::Data(format!(
            "{}: enrollment must be a different utterance of the off-screen speaker",
            enrollment.id
        )));
    }
    let window = spec.window_samples();
    if on.wave.len() < window {
        return Err(Error::Data(format!(
            "{}: on-screen clip is {} samples, window needs {}",
            on.id,
            on.wave.len(),
            window
        )));
    }
    let on_window = Waveform::new(on.wave.samples[..window].to_vec(), spec.sample_rate);

    let (off_placed, interval) =
        crop_and_place(&off.wave, spec.off_duration_range_s, spec.window_s, rng);
    let (off_scaled, snr_off) = if interval.0 < interval.1 {
        let snr = rng.gen_range(spec.snr_range_db[0]..=spec.snr_range_db[1]);
        (scale_to_snr(&off_placed, &on_window, snr)?, Some(snr))
    } else {
        (off_placed, None)
    };

    let mut interference = Waveform::zeros(window, spec.sample_rate);
    let mut snr_interferers = Vec::with_capacity(interferers.len());
    let mut interferer_ids = Vec::with_capacity(interferers.len());
    for clip in interferers {
        if clip.wave.len() < window {
            return Err(Error::Data(format!(
                "{}: interferer is shorter than the window",
                clip.id
            )));
        }
        let cut = Waveform::new(clip.wave.samples[..window].to_vec(), spec.sample_rate);
        let snr = rng.gen_range(spec.snr_range_db[0]..=spec.snr_range_db[1]);
        interference = interference.add(&scale_to_snr(&cut, &on_window, snr)?)?;
        snr_interferers.push(snr);
        interferer_ids.push(clip.id.clone());
    }

    let target = on_window.add(&off_scaled)?;
    let mix = target.add(&interference)?;
    let grid = spec.frame_grid();
    let t_frames = grid.num_frames(window)?;
    let oracle = oracle_vad(interval, t_frames, &grid);

    Ok(MixtureSample {
        mix,
        lip_features: lips.clone(),
        enrollment: enrollment.wave.clone(),
        target,
        on_component: on_window,
        off_component: off_scaled,
        interference,
        oracle_vad: oracle,
        meta: SampleMeta {
            id: String::new(),
            condition: spec.interference_mode,
            on_speaker: on.speaker_id.clone().unwrap_or_default(),
            off_speaker: off.speaker_id.clone().unwrap_or_default(),
            interferer_ids,
            snr_off_db: snr_off,
            snr_interferers_db: snr_interferers,
            off_interval_s: interval,
            mute: MuteFlag::None,
        },
    })
}

/// Training-time muting: with probability `p_on` remove the on-screen speech
/// from mix and target, with probability `p_off` remove the off-screen
/// speech (and zero the oracle labels). A single draw makes the two branches
/// mutually exclusive; the clues always stay in the sample.
pub fn apply_muting(
    sample: &MixtureSample,
    p_on: f64,
    p_off: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MixtureSample> {
    if !(0.0..=1.0).contains(&p_on) || !(0.0..=1.0).contains(&p_off) || p_on + p_off > 1.0 {
        return Err(Error::Config(format!(
            "mute probabilities must satisfy p_on + p_off <= 1 (got {p_on} + {p_off})"
        )));
    }
    let u: f64 = rng.gen();
    let mut out = sample.clone();
    if u < p_on {
        out.mix = sample.mix.sub(&sample.on_component)?;
        out.target = sample.off_component.clone();
        out.on_component = Waveform::zeros(sample.mix.len(), sample.mix.sample_rate);
        out.meta.mute = MuteFlag::On;
    } else if u < p_on + p_off {
        out.mix = sample.mix.sub(&sample.off_component)?;
        out.target = sample.on_component.clone();
        out.off_component = Waveform::zeros(sample.mix.len(), sample.mix.sample_rate);
        out.oracle_vad =
            VadSequence::oracle(vec![0.0; sample.oracle_vad.len()]).expect("zeros");
        out.meta.mute = MuteFlag::Off;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn spec_1s() -> MixSpec {
        MixSpec { window_s: 1.0, ..MixSpec::default() }
    }

    fn speaker(id: u64, kind: ClipKind, seed: u64, dur: f64) -> SourceClip {
        synth_speaker_clip(id, kind, dur, &SynthParams::default(), seed)
    }

    #[test]
    fn scale_to_snr_power_algebra() {
        let reference = Waveform::new(vec![1.0; 100], 16_000);
        let signal = Waveform::new(vec![0.1; 100], 16_000);
        let scaled = scale_to_snr(&signal, &reference, 0.0).unwrap();
        assert!((scaled.samples[0] - 1.0).abs() < 1e-12, "gain should be 10");

        let equal = scale_to_snr(&reference, &reference, 0.0).unwrap();
        assert!((equal.samples[0] - 1.0).abs() < 1e-12);

        assert!(matches!(
            scale_to_snr(&Waveform::zeros(100, 16_000), &reference, 0.0),
            Err(Error::ZeroPower)
        ));
        assert!(matches!(
            scale_to_snr(&signal, &Waveform::zeros(100, 16_000), 0.0),
            Err(Error::ZeroReference)
        ));
    }

    #[test]
    fn scale_to_snr_hits_requested_snr() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reference = Waveform::new((0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000);
        let signal = Waveform::new((0..1000).map(|_| rng.gen_range(-0.3..0.3)).collect(), 16_000);
        for snr in [-2.5, 0.0, 2.5, 10.0] {
            let scaled = scale_to_snr(&signal, &reference, snr).unwrap();
            let measured = 10.0 * (reference.power() / scaled.power()).log10();
            assert!((measured - snr).abs() < 1e-9);
        }
    }

    #[test]
    fn crop_and_place_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let off = Waveform::new((0..64_000).map(|i| (i as f64 * 0.001).sin()).collect(), 16_000);

        let (full, interval) = crop_and_place(&off, [4.0, 4.0], 4.0, &mut rng);
        assert_eq!(full.len(), 64_000);
        assert_eq!(interval, (0.0, 4.0));
        assert_eq!(full.samples[0..100], off.samples[0..100]);

        let (empty, interval) = crop_and_place(&off, [0.0, 0.0], 4.0, &mut rng);
        assert_eq!(interval, (0.0, 0.0));
        assert!(empty.samples.iter().all(|&v| v == 0.0));

        // Short source: crop shortened to available length.
        let short = Waveform::new(vec![0.5; 8_000], 16_000);
        let (placed, interval) = crop_and_place(&short, [4.0, 4.0], 4.0, &mut rng);
        assert_eq!(placed.len(), 64_000);
        assert!(((interval.1 - interval.0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn crop_start_covers_feasible_range_uniformly() {
        // Kolmogorov-Smirnov check of the placement offset against U[0, 2].
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let off = Waveform::new(vec![0.3; 64_000], 16_000);
        let n = 1000;
        let mut starts: Vec<f64> = (0..n)
            .map(|_| crop_and_place(&off, [2.0, 2.0], 4.0, &mut rng).1 .0 / 2.0)
            .collect();
        starts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = starts
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let hi = ((i + 1) as f64 / n as f64 - x).abs();
                let lo = (x - i as f64 / n as f64).abs();
                hi.max(lo)
            })
            .fold(0.0f64, f64::max);
        // Asymptotic Kolmogorov p-value.
        let lambda = (n as f64).sqrt() * d;
        let p: f64 = 2.0
            * (1..100)
                .map(|k| {
                    (-1.0f64).powi(k - 1) * (-2.0 * (k as f64 * lambda).powi(2)).exp()
                })
                .sum::<f64>();
        assert!(p > 0.01, "KS p-value {p} too small (D = {d})");
    }

    #[test]
    fn oracle_vad_edges_and_frame_arithmetic() {
        let grid = FrameGrid::new(32, 16, 16_000);
        let t = grid.num_frames(64_000).unwrap();

        let empty = oracle_vad((0.0, 0.0), t, &grid);
        assert!(empty.values().iter().all(|&v| v == 0.0));

        let full = oracle_vad((0.0, 4.0), t, &grid);
        assert!(full.values().iter().all(|&v| v == 1.0));

        let mid = oracle_vad((1.0, 3.0), t, &grid);
        let ones = mid.values().iter().filter(|&&v| v == 1.0).count();
        assert!((ones as i64 - 2000).unsigned_abs() <= 2, "got {ones} active frames");
        for (t_idx, &v) in mid.values().iter().enumerate() {
            let (s, e) = grid.span(t_idx);
            assert_eq!(v == 1.0, s < 3.0 && e > 1.0);
        }
    }

    #[test]
    fn make_sample_mixing_linearity_and_snr() {
        let spec = spec_1s();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let on = speaker(1, ClipKind::OnScreen, 100, 1.0);
        let off = speaker(2, ClipKind::OffScreen, 200, 1.0);
        let enroll = speaker(2, ClipKind::OffScreen, 201, 1.0);
        let noise = synth_noise_clip(9, 1.0, &SynthParams::default(), 300);
        let sample = make_sample(&on, &off, &[noise], &enroll, &spec, &mut rng).unwrap();

        // Mixing linearity, sample-exact: target + interference == mix and
        // on + off == target under the generator's summation order.
        let rebuilt = sample.target.add(&sample.interference).unwrap();
        assert_eq!(rebuilt.samples, sample.mix.samples);
        let direct = sample.on_component.add(&sample.off_component).unwrap();
        assert_eq!(direct.samples, sample.target.samples);

        // Requested SNR is realized over the window.
        let snr = sample.meta.snr_off_db.unwrap();
        let measured =
            10.0 * (sample.on_component.power() / sample.off_component.power()).log10();
        assert!((measured - snr).abs() < 0.05);

        // Oracle labels match the off-screen support.
        let grid = spec.frame_grid();
        for (t, &v) in sample.oracle_vad.values().iter().enumerate() {
            let (s, e) = grid.span(t);
            let (a, b) = sample.meta.off_interval_s;
            assert_eq!(v == 1.0, s < b && e > a);
        }
    }

    #[test]
    fn make_sample_interference_modes() {
        let mut spec = spec_1s();
        spec.interference_mode = InterferenceMode::TwoSpeakers;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let on = speaker(1, ClipKind::OnScreen, 100, 1.0);
        let off = speaker(2, ClipKind::OffScreen, 200, 1.0);
        let enroll = speaker(2, ClipKind::OffScreen, 201, 1.0);
        let i1 = speaker(3, ClipKind::OffScreen, 300, 1.0);
        let i2 = speaker(4, ClipKind::OffScreen, 301, 1.0);
        let sample = make_sample(&on, &off, &[i1, i2], &enroll, &spec, &mut rng).unwrap();
        assert_eq!(sample.meta.interferer_ids.len(), 2);
        assert_eq!(sample.meta.snr_interferers_db.len(), 2);
    }

    #[test]
    fn make_sample_zero_duration_off() {
        let mut spec = spec_1s();
        spec.off_duration_range_s = [0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let on = speaker(1, ClipKind::OnScreen, 100, 1.0);
        let off = speaker(2, ClipKind::OffScreen, 200, 1.0);
        let enroll = speaker(2, ClipKind::OffScreen, 201, 1.0);
        let noise = synth_noise_clip(9, 1.0, &SynthParams::default(), 300);
        let sample = make_sample(&on, &off, &[noise], &enroll, &spec, &mut rng).unwrap();
        assert_eq!(sample.target.samples, sample.on_component.samples);
        assert!(sample.oracle_vad.values().iter().all(|&v| v == 0.0));
        assert!(sample.meta.snr_off_db.is_none());
    }

    #[test]
    fn make_sample_rejects_bad_enrollment() {
        let spec = spec_1s();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let on = speaker(1, ClipKind::OnScreen, 100, 1.0);
        let off = speaker(2, ClipKind::OffScreen, 200, 1.0);
        let noise = synth_noise_clip(9, 1.0, &SynthParams::default(), 300);

        // Wrong speaker.
        let wrong = speaker(3, ClipKind::OffScreen, 201, 1.0);
        assert!(make_sample(&on, &off, std::slice::from_ref(&noise), &wrong, &spec, &mut rng).is_err());

        // Same utterance.
        assert!(make_sample(&on, &off, &[noise], &off, &spec, &mut rng).is_err());
    }

    #[test]
    fn muting_branches() {
        let spec = spec_1s();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let on = speaker(1, ClipKind::OnScreen, 100, 1.0);
        let off = speaker(2, ClipKind::OffScreen, 200, 1.0);
        let enroll = speaker(2, ClipKind::OffScreen, 201, 1.0);
        let noise = synth_noise_clip(9, 1.0, &SynthParams::default(), 300);
        let sample = make_sample(&on, &off, &[noise], &enroll, &spec, &mut rng).unwrap();

        let unchanged = apply_muting(&sample, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(unchanged.mix.samples, sample.mix.samples);
        assert_eq!(unchanged.meta.mute, MuteFlag::None);

        let muted_on = apply_muting(&sample, 1.0, 0.0, &mut rng).unwrap();
        assert_eq!(muted_on.meta.mute, MuteFlag::On);
        assert_eq!(muted_on.target.samples, sample.off_component.samples);
        assert!(muted_on.on_component.samples.iter().all(|&v| v == 0.0));
        // Clues kept intact.
        assert_eq!(muted_on.lip_features, sample.lip_features);
        assert_eq!(muted_on.enrollment.samples, sample.enrollment.samples);

        let muted_off = apply_muting(&sample, 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(muted_off.meta.mute, MuteFlag::Off);
        assert_eq!(muted_off.target.samples, sample.on_component.samples);
        assert!(muted_off.oracle_vad.values().iter().all(|&v| v == 0.0));

        assert!(apply_muting(&sample, 0.6, 0.6, &mut rng).is_err());
    }

    #[test]
    fn muting_rates_match_probabilities() {
        let spec = spec_1s();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let on = speaker(1, ClipKind::OnScreen, 100, 1.0);
        let off = speaker(2, ClipKind::OffScreen, 200, 1.0);
        let enroll = speaker(2, ClipKind::OffScreen, 201, 1.0);
        let noise = synth_noise_clip(9, 1.0, &SynthParams::default(), 300);
        let sample = make_sample(&on, &off, &[noise], &enroll, &spec, &mut rng).unwrap();

        let n = 10_000;
        let mut on_count = 0;
        let mut off_count = 0;
        for _ in 0..n {
            match apply_muting(&sample, 0.2, 0.2, &mut rng).unwrap().meta.mute {
                MuteFlag::On => on_count += 1,
                MuteFlag::Off => off_count += 1,
                MuteFlag::None => {}
            }
        }
        let on_rate = on_count as f64 / n as f64;
        let off_rate = off_count as f64 / n as f64;
        assert!((on_rate - 0.2).abs() < 0.02, "on rate {on_rate}");
        assert!((off_rate - 0.2).abs() < 0.02, "off rate {off_rate}");
    }
}
