//! The five-part extractor model: audio encoder, visual encoder, voiceprint
//! encoder, multi-speaker extractor (R extractor blocks with TCN stacks and
//! optional off-screen activity attention), and audio decoder.

pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod net;
pub mod params;

pub use config::{ClueMode, ModelConfig, UpsampleKind};
pub use net::{fuse_clues, ForwardOutput, LatentSequence, LipFeatures, Model, SpeakerEmbedding};
pub use params::{ModelParams, ParamCount};
