//! Model hyperparameters and presets.

use serde::{Deserialize, Serialize};

use crate::audio::FrameGrid;
use crate::error::{Error, Result};

/// Which conditioning clue the extractor consumes. `Both` is the full model;
/// the single-clue variants make up the mixing baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClueMode {
    #[default]
    Both,
    VisualOnly,
    VoiceprintOnly,
}

impl ClueMode {
    pub fn uses_visual(self) -> bool {
        matches!(self, ClueMode::Both | ClueMode::VisualOnly)
    }

    pub fn uses_voiceprint(self) -> bool {
        matches!(self, ClueMode::Both | ClueMode::VoiceprintOnly)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpsampleKind {
    #[default]
    Nearest,
    Linear,
}

fn default_sample_rate() -> u32 {
    16_000
}

fn default_fps() -> f64 {
    25.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Encoder analysis window in samples.
    pub window_len: usize,
    /// Encoder stride in samples.
    pub hop: usize,
    /// Latent width of the audio representation.
    pub d_in: usize,
    /// Visual embedding width.
    pub d_v: usize,
    /// Voiceprint embedding width.
    pub d_a: usize,
    /// Fused audio-visual clue width.
    pub d_av: usize,
    /// Number of extractor blocks (R).
    pub num_blocks: usize,
    /// Dilated conv layers inside each block's TCN stack.
    pub tcn_layers_per_block: usize,
    /// Channel width after the block bottleneck.
    pub tcn_channels: usize,
    /// Enables the off-screen activity attention path.
    pub use_attention: bool,
    #[serde(default = "default_fps")]
    pub video_fps: f64,
    /// Input lip-feature dimensionality.
    pub lip_dim: usize,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    pub upsample: UpsampleKind,
    pub clue_mode: ClueMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}

impl ModelConfig {
    /// Desk-scale defaults: small enough to train on a laptop CPU.
    pub fn desk() -> Self {
        ModelConfig {
            window_len: 32,
            hop: 16,
            d_in: 64,
            d_v: 16,
            d_a: 32,
            d_av: 64,
            num_blocks: 2,
            tcn_layers_per_block: 4,
            tcn_channels: 64,
            use_attention: true,
            video_fps: 25.0,
            lip_dim: 8,
            sample_rate: 16_000,
            upsample: UpsampleKind::Nearest,
            clue_mode: ClueMode::Both,
        }
    }

    /// Reference-scale configuration (D^av = D^in = 256, R = 4). Far too
    /// slow to train here; kept for parameter accounting.
    pub fn paper() -> Self {
        ModelConfig {
            window_len: 32,
            hop: 16,
            d_in: 256,
            d_v: 512,
            d_a: 256,
            d_av: 256,
            num_blocks: 4,
            tcn_layers_per_block: 8,
            tcn_channels: 256,
            use_attention: true,
            video_fps: 25.0,
            lip_dim: 8,
            sample_rate: 16_000,
            upsample: UpsampleKind::Nearest,
            clue_mode: ClueMode::Both,
        }
    }

    /// Minimal configuration used by gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            window_len: 16,
            hop: 8,
            d_in: 8,
            d_v: 4,
            d_a: 6,
            d_av: 8,
            num_blocks: 1,
            tcn_layers_per_block: 2,
            tcn_channels: 8,
            use_attention: true,
            video_fps: 25.0,
            lip_dim: 3,
            sample_rate: 16_000,
            upsample: UpsampleKind::Nearest,
            clue_mode: ClueMode::Both,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window_len", self.window_len),
            ("hop", self.hop),
            ("d_in", self.d_in),
            ("d_v", self.d_v),
            ("d_a", self.d_a),
            ("d_av", self.d_av),
            ("num_blocks", self.num_blocks),
            ("tcn_layers_per_block", self.tcn_layers_per_block),
            ("tcn_channels", self.tcn_channels),
            ("lip_dim", self.lip_dim),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.hop > self.window_len {
            return Err(Error::Config(format!(
                "hop ({}) must not exceed window_len ({})",
                self.hop, self.window_len
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be > 0".into()));
        }
        if self.video_fps <= 0.0 || !self.video_fps.is_finite() {
            return Err(Error::Config("video_fps must be > 0".into()));
        }
        Ok(())
    }

    pub fn frame_grid(&self) -> FrameGrid {
        FrameGrid::new(self.window_len, self.hop, self.sample_rate)
    }

    /// Latent frame count for an input of `n` samples.
    pub fn num_frames(&self, n: usize) -> Result<usize> {
        self.frame_grid().num_frames(n)
    }

    /// Hidden width inside TCN layers.
    pub fn tcn_hidden(&self) -> usize {
        self.tcn_channels * 2
    }

    /// The attention head multiplies the voiceprint clue into the latent
    /// audio; a learned projection is only needed when the widths differ.
    pub fn vad_needs_projection(&self) -> bool {
        self.d_in != self.d_av
    }
}
