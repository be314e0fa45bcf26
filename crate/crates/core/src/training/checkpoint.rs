//! Binary checkpoint container.
//!
//! Layout: the 6-byte magic `UCDMT1`, a little-endian `u64` header length,
//! a UTF-8 JSON header, then every tensor as little-endian `f32` in the
//! order given by the header's tensor table.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::models::{ModelBundle, ModelConfig};
use crate::nn::{Module, Param};
use crate::optim::Adam;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"UCDMT1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerMeta {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
}

impl OptimizerMeta {
    fn of(adam: &Adam) -> Self {
        OptimizerMeta { lr: adam.lr, beta1: adam.beta1, beta2: adam.beta2, eps: adam.eps, step: adam.step }
    }
}

/// Sampling state: epoch plans are drawn from `(seed, epoch)`, so the
/// cursor fully determines the remaining batch sequence.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RngCursor {
    seed: u64,
    epoch: u64,
    batch_in_epoch: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset in `f32` elements from the start of the blob section.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    train: TrainConfig,
    step: u64,
    rng: RngCursor,
    optimizers: [OptimizerMeta; 2],
    tensors: Vec<TensorEntry>,
}

const GEN_FIRST: &str = "adam.gen.m/";
const GEN_SECOND: &str = "adam.gen.v/";
const DIS_FIRST: &str = "adam.dis.m/";
const DIS_SECOND: &str = "adam.dis.v/";

/// Named views over every stored tensor in file order.
fn tensor_views(state: &TrainState) -> Vec<(String, &[usize], &[f32])> {
    let mut out: Vec<(String, &[usize], &[f32])> =
        state.bundle.all_params().into_iter().map(|p| (p.name.clone(), p.shape.as_slice(), p.value.as_slice())).collect();
    let groups = [
        (GEN_FIRST, state.bundle.generator_params(), &state.opt_gen.first),
        (GEN_SECOND, state.bundle.generator_params(), &state.opt_gen.second),
        (DIS_FIRST, state.bundle.discriminator.params(), &state.opt_dis.first),
        (DIS_SECOND, state.bundle.discriminator.params(), &state.opt_dis.second),
    ];
    for (prefix, params, moments) in groups {
        for (p, m) in params.into_iter().zip(moments) {
            out.push((format!("{prefix}{}", p.name), p.shape.as_slice(), m.as_slice()));
        }
    }
    out
}

/// Writes `state` to `path` (via a temporary file and rename).
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let views = tensor_views(state);
    let mut offset = 0;
    let tensors = views
        .iter()
        .map(|(name, shape, data)| {
            let entry = TensorEntry { name: name.clone(), shape: shape.to_vec(), offset };
            offset += data.len();
            entry
        })
        .collect();
    let header = Header {
        model: state.bundle.config.clone(),
        train: state.config.clone(),
        step: state.step,
        rng: RngCursor { seed: state.config.seed, epoch: state.epoch, batch_in_epoch: state.batch_in_epoch },
        optimizers: [OptimizerMeta::of(&state.opt_gen), OptimizerMeta::of(&state.opt_dis)],
        tensors,
    };
    let header = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(CHECKPOINT_MAGIC.len() + 8 + header.len() + offset * 4);
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    for (_, _, data) in &views {
        for v in *data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn corrupt(path: &Path, what: impl std::fmt::Display) -> Error {
    Error::CorruptCheckpoint(format!("{}: {what}", path.display()))
}

fn fill(target: &mut [f32], name: &str, shape: &[usize], table: &[TensorEntry], blob: &[u8], path: &Path) -> Result<()> {
    let entry = table
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| corrupt(path, format!("tensor {name} missing")))?;
    if entry.shape != shape {
        return Err(corrupt(path, format!("tensor {name} has shape {:?}, expected {shape:?}", entry.shape)));
    }
    let start = entry.offset * 4;
    let end = start + target.len() * 4;
    let bytes = blob.get(start..end).ok_or_else(|| corrupt(path, format!("tensor {name} truncated")))?;
    for (v, b) in target.iter_mut().zip(bytes.chunks_exact(4)) {
        *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    }
    Ok(())
}

fn restore_group(params: Vec<&Param>, prefix: &str, table: &[TensorEntry], blob: &[u8], path: &Path) -> Result<Vec<Vec<f32>>> {
    params
        .into_iter()
        .map(|p| {
            let mut m = vec![0.0; p.len()];
            fill(&mut m, &format!("{prefix}{}", p.name), &p.shape, table, blob, path)?;
            Ok(m)
        })
        .collect()
}

fn restore_adam(meta: &OptimizerMeta, first: Vec<Vec<f32>>, second: Vec<Vec<f32>>) -> Adam {
    Adam { lr: meta.lr, beta1: meta.beta1, beta2: meta.beta2, eps: meta.eps, step: meta.step, first, second }
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let prefix = CHECKPOINT_MAGIC.len() + 8;
    if bytes.len() < prefix || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        return Err(corrupt(path, "bad magic"));
    }
    let header_len = u64::from_le_bytes(bytes[CHECKPOINT_MAGIC.len()..prefix].try_into().expect("8 bytes")) as usize;
    let header_end = prefix.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| corrupt(path, "truncated header"))?;
    let header: Header =
        serde_json::from_slice(&bytes[prefix..header_end]).map_err(|e| corrupt(path, format!("header: {e}")))?;
    let blob = &bytes[header_end..];
    let expected: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum::<usize>() * 4;
    if blob.len() != expected {
        return Err(corrupt(path, format!("{} tensor bytes, header describes {expected}", blob.len())));
    }

    // Parameters are overwritten below; the seed here only shapes the layers.
    let mut bundle = ModelBundle::new(header.model.clone(), &mut ChaCha8Rng::seed_from_u64(0))
        .map_err(|e| corrupt(path, format!("model config: {e}")))?;
    for p in bundle.all_params_mut() {
        let (name, shape) = (p.name.clone(), p.shape.clone());
        fill(&mut p.value, &name, &shape, &header.tensors, blob, path)?;
    }
    let stored = header.tensors.len();
    let gen_count = bundle.generator_params().len();
    let dis_count = bundle.discriminator.params().len();
    if stored != gen_count * 3 + dis_count * 3 {
        return Err(corrupt(path, format!("{stored} tensors, model expects {}", 3 * (gen_count + dis_count))));
    }
    let [gen_meta, dis_meta] = &header.optimizers;
    let opt_gen = restore_adam(
        gen_meta,
        restore_group(bundle.generator_params(), GEN_FIRST, &header.tensors, blob, path)?,
        restore_group(bundle.generator_params(), GEN_SECOND, &header.tensors, blob, path)?,
    );
    let opt_dis = restore_adam(
        dis_meta,
        restore_group(bundle.discriminator.params(), DIS_FIRST, &header.tensors, blob, path)?,
        restore_group(bundle.discriminator.params(), DIS_SECOND, &header.tensors, blob, path)?,
    );
    if bundle.all_params().iter().any(|p| p.value.iter().any(|v| !v.is_finite())) {
        return Err(corrupt(path, "non-finite parameter"));
    }
    bundle.train_mode = true;
    Ok(TrainState {
        config: header.train,
        bundle,
        opt_gen,
        opt_dis,
        step: header.step,
        epoch: header.rng.epoch,
        batch_in_epoch: header.rng.batch_in_epoch,
    })
}

/// The model of a checkpoint in eval mode, with the checkpoint's hash.
pub fn load_bundle(path: &Path) -> Result<(ModelBundle, String)> {
    let mut state = load_checkpoint(path)?;
    state.bundle.train_mode = false;
    Ok((state.bundle, checkpoint_hash(path)?))
}

/// Hex SHA-256 of the checkpoint file.
pub fn checkpoint_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
