//! Audio-visual speech enhancement with selective off-screen speech
//! extraction.
//!
//! A single time-domain model estimates the mixture of the on-screen target
//! speech (tracked by a lip-movement clue) and a chosen off-screen target
//! speech (tracked by a voiceprint clue from an enrollment utterance) from a
//! noisy input. The crate bundles the model, losses and metrics, a dataset
//! simulator, a training harness with a plateau learning-rate schedule, and
//! the mixing-based two-model baseline used for comparisons.

pub mod audio;
pub mod baseline;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod mixsim;
pub mod model;
pub mod par;
pub mod train;

pub use audio::{Decibels, FrameGrid, Waveform};
pub use error::{Error, Result};
