//! Whole-dataset synthesis and the on-disk layout: one directory per sample
//! (float32 WAVs plus lip features) under an index JSON carrying every meta
//! field. Generation is a pure function of (spec, per-sample seed), so
//! samples can be produced in parallel in any order.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, write_wav, FrameGrid};
use crate::error::{Error, Result};
use crate::par;

use super::corpus::{read_lip_features, write_lip_features};
use super::synth::{synth_noise_clip, synth_speaker_clip, SynthParams};
use super::{make_sample, oracle_vad, ClipKind, MixSpec, MixtureSample, SampleMeta};

pub const INDEX_FILE: &str = "index.json";
const INDEX_VERSION: u32 = 1;

/// Splitmix-style seed derivation for independent per-sample streams.
pub fn derive_seed(base: u64, idx: u64) -> u64 {
    let mut z = base ^ idx.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A contiguous pool of synthetic identities. Disjoint pools across splits
/// keep test speakers unseen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdRange {
    pub start: u64,
    pub count: u64,
}

impl IdRange {
    pub fn new(start: u64, count: u64) -> Self {
        IdRange { start, count }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        self.start + rng.gen_range(0..self.count)
    }

    fn draw_excluding(&self, rng: &mut ChaCha8Rng, taken: &[u64]) -> Result<u64> {
        if taken.len() as u64 >= self.count {
            return Err(Error::Config(format!(
                "speaker pool of {} ids cannot supply {} distinct speakers",
                self.count,
                taken.len() + 1
            )));
        }
        loop {
            let id = self.draw(rng);
            if !taken.contains(&id) {
                return Ok(id);
            }
        }
    }

    pub fn overlaps(&self, other: &IdRange) -> bool {
        self.start < other.start + other.count && other.start < self.start + self.count
    }
}

/// Generates one sample from its derived seed. Pure: identical inputs give a
/// bit-identical sample.
pub fn synthesize_sample(
    spec: &MixSpec,
    lip_dim: usize,
    speakers: &IdRange,
    noises: &IdRange,
    index: usize,
    seed: u64,
) -> Result<MixtureSample> {
    let params = SynthParams {
        sample_rate: spec.sample_rate,
        video_fps: 25.0,
        lip_dim,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let on_spk = speakers.draw(&mut rng);
    let off_spk = speakers.draw_excluding(&mut rng, &[on_spk])?;
    let (speech_n, noise_n) = spec.interference_mode.counts();

    let on_seed = rng.gen::<u64>();
    let off_seed = rng.gen::<u64>();
    let enroll_seed = rng.gen::<u64>();
    let on = synth_speaker_clip(on_spk, ClipKind::OnScreen, spec.window_s, &params, on_seed);
    let off = synth_speaker_clip(off_spk, ClipKind::OffScreen, spec.window_s, &params, off_seed);
    let enroll =
        synth_speaker_clip(off_spk, ClipKind::OffScreen, spec.window_s, &params, enroll_seed);

    let mut interferers = Vec::with_capacity(speech_n + noise_n);
    let mut taken = vec![on_spk, off_spk];
    for _ in 0..speech_n {
        let spk = speakers.draw_excluding(&mut rng, &taken)?;
        taken.push(spk);
        let seed = rng.gen::<u64>();
        interferers.push(synth_speaker_clip(
            spk,
            ClipKind::OffScreen,
            spec.window_s,
            &params,
            seed,
        ));
    }
    for _ in 0..noise_n {
        let noise_id = noises.draw(&mut rng);
        let seed = rng.gen::<u64>();
        interferers.push(synth_noise_clip(noise_id, spec.window_s, &params, seed));
    }

    let mut sample = make_sample(&on, &off, &interferers, &enroll, spec, &mut rng)?;
    sample.meta.id = format!("{index:06}");
    Ok(sample)
}

/// Synthesizes `count` samples in parallel.
pub fn synthesize_dataset(
    spec: &MixSpec,
    lip_dim: usize,
    speakers: &IdRange,
    noises: &IdRange,
    count: usize,
) -> Result<Vec<MixtureSample>> {
    spec.validate()?;
    let (speech_n, _) = spec.interference_mode.counts();
    if (speakers.count as usize) < 2 + speech_n {
        return Err(Error::Config(format!(
            "pool of {} speakers cannot host on + off + {speech_n} interferers",
            speakers.count
        )));
    }
    par::map_range(count, |i| {
        synthesize_sample(spec, lip_dim, speakers, noises, i, derive_seed(spec.seed, i as u64))
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub format_version: u32,
    pub mix_spec: MixSpec,
    pub lip_dim: usize,
    pub samples: Vec<SampleMeta>,
}

/// Writes samples plus the index JSON under `dir`.
pub fn write_dataset(dir: &Path, samples: &[MixtureSample], spec: &MixSpec) -> Result<()> {
    fs::create_dir_all(dir)?;
    let lip_dim = samples
        .first()
        .map(|s| s.lip_features.frames.ncols())
        .unwrap_or(0);
    for sample in samples {
        let sdir = dir.join("samples").join(&sample.meta.id);
        fs::create_dir_all(&sdir)?;
        write_wav(&sdir.join("mix.wav"), &sample.mix)?;
        write_wav(&sdir.join("on.wav"), &sample.on_component)?;
        write_wav(&sdir.join("off.wav"), &sample.off_component)?;
        write_wav(&sdir.join("enroll.wav"), &sample.enrollment)?;
        write_lip_features(&sdir.join("lips.f32"), &sample.lip_features)?;
    }
    let index = DatasetIndex {
        format_version: INDEX_VERSION,
        mix_spec: spec.clone(),
        lip_dim,
        samples: samples.iter().map(|s| s.meta.clone()).collect(),
    };
    fs::write(dir.join(INDEX_FILE), serde_json::to_string_pretty(&index)?)?;
    Ok(())
}

/// Loads a dataset directory. Oracle labels are regenerated from the stored
/// off-screen interval on `grid` (defaults to the grid recorded in the
/// index), and the target is rebuilt as on + off.
pub fn load_dataset(dir: &Path, grid: Option<FrameGrid>) -> Result<(Vec<MixtureSample>, DatasetIndex)> {
    let index_path = dir.join(INDEX_FILE);
    let index: DatasetIndex = serde_json::from_str(&fs::read_to_string(&index_path)?)?;
    if index.format_version != INDEX_VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported dataset version {}",
            index_path.display(),
            index.format_version
        )));
    }
    let grid = grid.unwrap_or_else(|| index.mix_spec.frame_grid());
    let samples: Vec<Result<MixtureSample>> = par::map_indexed(&index.samples, |_, meta| {
        let sdir = dir.join("samples").join(&meta.id);
        let mix = read_wav(&sdir.join("mix.wav"))?;
        let on = read_wav(&sdir.join("on.wav"))?;
        let off = read_wav(&sdir.join("off.wav"))?;
        let enrollment = read_wav(&sdir.join("enroll.wav"))?;
        let lips = read_lip_features(&sdir.join("lips.f32"))?;
        let target = on.add(&off)?;
        let interference = mix.sub(&target)?;
        let t_frames = grid.num_frames(mix.len())?;
        let vad = oracle_vad(meta.off_interval_s, t_frames, &grid);
        Ok(MixtureSample {
            mix,
            lip_features: lips,
            enrollment,
            target,
            on_component: on,
            off_component: off,
            interference,
            oracle_vad: vad,
            meta: meta.clone(),
        })
    });
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((samples, index))
}
