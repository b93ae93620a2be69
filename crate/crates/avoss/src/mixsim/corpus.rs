//! Optional real-data ingestion: a JSON-lines manifest pointing at WAV files
//! (with raw float32 lip-feature sidecars for on-screen entries), resampled
//! to 16 kHz mono on load.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, resample};
use crate::error::{Error, Result};
use crate::model::LipFeatures;

use super::{ClipKind, SourceClip};

pub const CORPUS_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    #[serde(default)]
    pub speaker_id: Option<String>,
    pub kind: ClipKind,
    #[serde(default)]
    pub lip_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LipSidecar {
    pub frames: usize,
    pub dims: usize,
    pub fps: f64,
}

/// Reads a raw little-endian float32 matrix plus its JSON sidecar.
pub fn read_lip_features(data_path: &Path) -> Result<LipFeatures> {
    let sidecar_path = data_path.with_extension("json");
    let sidecar: LipSidecar = serde_json::from_str(&fs::read_to_string(&sidecar_path)?)?;
    let mut bytes = Vec::new();
    fs::File::open(data_path)?.read_to_end(&mut bytes)?;
    let expect = sidecar.frames * sidecar.dims * 4;
    if bytes.len() != expect {
        return Err(Error::Data(format!(
            "{}: expected {} bytes for {}x{} float32, found {}",
            data_path.display(),
            expect,
            sidecar.frames,
            sidecar.dims,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let frames = Array2::from_shape_vec((sidecar.frames, sidecar.dims), values)
        .map_err(|e| Error::Data(format!("{}: {e}", data_path.display())))?;
    Ok(LipFeatures { frames, fps: sidecar.fps })
}

pub fn write_lip_features(data_path: &Path, lips: &LipFeatures) -> Result<()> {
    let sidecar = LipSidecar {
        frames: lips.frames.nrows(),
        dims: lips.frames.ncols(),
        fps: lips.fps,
    };
    fs::write(
        data_path.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    let mut bytes = Vec::with_capacity(lips.frames.len() * 4);
    for v in lips.frames.iter() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(data_path, bytes)?;
    Ok(())
}

/// Loads a clip manifest (one JSON object per line). All audio is resampled
/// to 16 kHz mono; on-screen entries must carry a lip-feature sidecar and
/// off-screen speakers need at least two utterances so an enrollment can
/// always be drawn.
pub fn load_corpus(manifest_path: &Path) -> Result<Vec<SourceClip>> {
    let text = fs::read_to_string(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut clips = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| {
            Error::Data(format!(
                "{}:{}: bad manifest entry: {e}",
                manifest_path.display(),
                lineno + 1
            ))
        })?;
        clips.push(load_entry(base, &entry, lineno)?);
    }
    validate_corpus(&clips)?;
    Ok(clips)
}

fn load_entry(base: &Path, entry: &ManifestEntry, lineno: usize) -> Result<SourceClip> {
    let wav_path = base.join(&entry.path);
    let wave = resample(&read_wav(&wav_path)?, CORPUS_SAMPLE_RATE)?;
    let lip_features = match (entry.kind, &entry.lip_path) {
        (ClipKind::OnScreen, Some(p)) => Some(read_lip_features(&base.join(p))?),
        (ClipKind::OnScreen, None) => {
            return Err(Error::Data(format!(
                "manifest line {}: on_screen entry {} lacks a lip sidecar",
                lineno + 1,
                entry.path.display()
            )))
        }
        _ => None,
    };
    if entry.kind == ClipKind::OffScreen && entry.speaker_id.is_none() {
        return Err(Error::Data(format!(
            "manifest line {}: off_screen entry {} lacks a speaker_id",
            lineno + 1,
            entry.path.display()
        )));
    }
    Ok(SourceClip {
        id: entry.path.display().to_string(),
        kind: entry.kind,
        speaker_id: entry.speaker_id.clone(),
        wave,
        lip_features,
    })
}

fn validate_corpus(clips: &[SourceClip]) -> Result<()> {
    use std::collections::HashMap;
    let mut per_speaker: HashMap<&str, usize> = HashMap::new();
    for clip in clips {
        if clip.kind == ClipKind::OffScreen {
            *per_speaker
                .entry(clip.speaker_id.as_deref().unwrap_or_default())
                .or_default() += 1;
        }
    }
    let lonely: Vec<&str> = per_speaker
        .iter()
        .filter(|(_, &n)| n < 2)
        .map(|(s, _)| *s)
        .collect();
    if !lonely.is_empty() {
        return Err(Error::Data(format!(
            "off-screen speakers need at least 2 clips for enrollment, violated by: {}",
            lonely.join(", ")
        )));
    }
    Ok(())
}
