//! Model persistence: a JSON manifest plus raw tensor payloads in one file.
//!
//! Layout: 8 magic bytes, a little-endian u64 header length, the header JSON
//! (config, seed, model spec, task class counts, and one entry per tensor
//! with name/shape/flags), then every tensor's values as little-endian f64
//! in manifest order. Round trips are byte-exact: saving a loaded checkpoint
//! reproduces the file, and loaded models evaluate bit-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, ModelState};
use crate::rng::Rng;

pub const MAGIC: &[u8; 8] = b"MVPCKPT1";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub trainable: bool,
    pub frozen: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub model: ModelSpec,
    /// Classes per registered task pathway, in session order.
    pub task_classes: Vec<usize>,
    pub trained_sessions: usize,
    pub ablate_prompts: bool,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub state: ModelState,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub trained_sessions: usize,
}

/// Serializes `state` to `path`. Optimizer moments are deliberately not
/// persisted; a checkpoint captures values and freeze flags only.
pub fn save_checkpoint(
    path: &Path,
    state: &ModelState,
    config: &ExperimentConfig,
    seed: u64,
    trained_sessions: usize,
) -> Result<()> {
    let tensors: Vec<TensorEntry> = state
        .params()
        .iter()
        .map(|p| TensorEntry {
            name: p.name.clone(),
            rows: p.value.rows(),
            cols: p.value.cols(),
            trainable: p.trainable,
            frozen: p.frozen,
        })
        .collect();
    let header = CheckpointHeader {
        config: config.clone(),
        seed,
        model: state.spec.clone(),
        task_classes: state.tasks.iter().map(|t| t.num_classes).collect(),
        trained_sessions,
        ablate_prompts: state.ablate_prompts,
        tensors,
    };
    let header_json = serde_json::to_string(&header)
        .map_err(|e| Error::Checkpoint(format!("header serialization: {e}")))?;

    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(header_json.as_bytes());
    for p in state.params() {
        for &x in p.value.data() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let header_len =
        u64::from_le_bytes(bytes[MAGIC.len()..MAGIC.len() + 8].try_into().unwrap()) as usize;
    let header_start = MAGIC.len() + 8;
    let payload_start = header_start + header_len;
    if bytes.len() < payload_start {
        return Err(Error::Checkpoint("truncated header".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[header_start..payload_start])
        .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;

    // Rebuild the skeleton; every value is overwritten from the payload, so
    // the throwaway rng never influences the result.
    let mut rng = Rng::new(0);
    let mut state = ModelState::new(header.model.clone(), &mut rng)?;
    for &classes in &header.task_classes {
        state.add_task(classes, &mut rng)?;
    }
    state.ablate_prompts = header.ablate_prompts;

    let mut offset = payload_start;
    let mut params = state.params_mut();
    if params.len() != header.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, model has {}",
            header.tensors.len(),
            params.len()
        )));
    }
    for (p, entry) in params.iter_mut().zip(&header.tensors) {
        if p.name != entry.name {
            return Err(Error::Checkpoint(format!(
                "tensor order mismatch: expected {}, manifest has {}",
                p.name, entry.name
            )));
        }
        if p.value.rows() != entry.rows || p.value.cols() != entry.cols {
            return Err(Error::Checkpoint(format!(
                "{}: model shape {}x{}, manifest {}x{}",
                entry.name,
                p.value.rows(),
                p.value.cols(),
                entry.rows,
                entry.cols
            )));
        }
        let len = entry.rows * entry.cols * 8;
        if offset + len > bytes.len() {
            return Err(Error::Checkpoint(format!(
                "payload ends inside tensor {}",
                entry.name
            )));
        }
        for (i, chunk) in bytes[offset..offset + len].chunks_exact(8).enumerate() {
            p.value.data_mut()[i] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        p.trainable = entry.trainable;
        p.frozen = entry.frozen;
        offset += len;
    }
    if offset != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after last tensor",
            bytes.len() - offset
        )));
    }

    Ok(Checkpoint {
        state,
        config: header.config,
        seed: header.seed,
        trained_sessions: header.trained_sessions,
    })
}
