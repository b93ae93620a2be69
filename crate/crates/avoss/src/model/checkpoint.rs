//! Versioned checkpoint container: a fixed magic, a JSON metadata document
//! (config, epoch, schedule and RNG state, tensor manifest) followed by the
//! named parameter tensors as raw little-endian f64 arrays. Parameters are
//! stored at full precision so a save/load round trip reproduces the forward
//! pass bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ModelConfig;
use super::net::Model;
use super::params::ModelParams;

const MAGIC: &[u8; 8] = b"AVOSSCKP";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Metadata {
    format_version: u32,
    dtype: String,
    config: ModelConfig,
    epoch: u64,
    schedule: serde_json::Value,
    rng: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// A model snapshot plus training bookkeeping. The schedule and RNG states
/// are opaque JSON owned by the training harness.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub epoch: u64,
    pub schedule: serde_json::Value,
    pub rng: serde_json::Value,
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Checkpoint {
            model,
            epoch: 0,
            schedule: serde_json::Value::Null,
            rng: serde_json::Value::Null,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tensors = self.model.params.tensors();
        let meta = Metadata {
            format_version: FORMAT_VERSION,
            dtype: "f64le".into(),
            config: self.model.cfg.clone(),
            epoch: self.epoch,
            schedule: self.schedule.clone(),
            rng: self.rng.clone(),
            tensors: tensors
                .iter()
                .map(|(name, t)| TensorEntry { name: name.clone(), len: t.len() })
                .collect(),
        };
        let meta_bytes = serde_json::to_vec(&meta)?;
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(meta_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&meta_bytes)?;
        for (_, t) in &tensors {
            for v in t.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{}: not a checkpoint file",
                path.display()
            )));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let mut len8 = [0u8; 8];
        r.read_exact(&mut len8)?;
        let meta_len = u64::from_le_bytes(len8) as usize;
        let mut meta_bytes = vec![0u8; meta_len];
        r.read_exact(&mut meta_bytes)?;
        let meta: Metadata = serde_json::from_slice(&meta_bytes)?;
        if meta.dtype != "f64le" {
            return Err(Error::Checkpoint(format!("unsupported dtype {}", meta.dtype)));
        }
        meta.config.validate()?;

        let mut params = ModelParams::init(&meta.config, 0);
        {
            let mut slots = params.tensors_mut();
            if slots.len() != meta.tensors.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor count mismatch: file has {}, config implies {}",
                    meta.tensors.len(),
                    slots.len()
                )));
            }
            for ((name, slot), entry) in slots.iter_mut().zip(&meta.tensors) {
                if *name != entry.name || slot.len() != entry.len {
                    return Err(Error::Checkpoint(format!(
                        "tensor mismatch: file has {} ({}), config implies {} ({})",
                        entry.name,
                        entry.len,
                        name,
                        slot.len()
                    )));
                }
                let mut buf = vec![0u8; entry.len * 8];
                r.read_exact(&mut buf)?;
                for (v, chunk) in slot.iter_mut().zip(buf.chunks_exact(8)) {
                    *v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
                }
            }
        }
        Ok(Checkpoint {
            model: Model { cfg: meta.config, params },
            epoch: meta.epoch,
            schedule: meta.schedule,
            rng: meta.rng,
        })
    }
}
