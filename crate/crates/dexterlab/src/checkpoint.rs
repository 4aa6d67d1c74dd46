//! Versioned run checkpoints.
//!
//! Layout: a text header (magic line, one JSON metadata line, one manifest
//! line per tensor, a BINARY marker) followed by the raw tensor data as
//! little-endian f32 in manifest order. The metadata embeds the full config
//! plus every piece of mutable run state (curriculum, sampler stats, env
//! runners, RNGs), so a resumed run continues bit-for-bit.

use crate::config::ExperimentConfig;
use crate::curriculum::CurriculumState;
use crate::nn::AdamState;
use crate::ppo::PolicyParams;
use crate::rollout::EnvRunner;
use crate::sampler::CellStats;
use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &str = "DEXTERLAB-CKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint metadata error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a checkpoint file (bad magic line {0:?})")]
    BadMagic(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint truncated: missing section {0}")]
    MissingSection(&'static str),
    #[error("malformed manifest line {0:?}")]
    BadManifest(String),
    #[error("tensor {name}: shape mismatch (file {found:?}, config implies {expected:?})")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("tensor {0}: binary payload truncated")]
    TruncatedTensor(String),
}

/// Everything checkpointed besides the parameter/optimizer tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub global_timestep: u64,
    pub update_index: u64,
    pub curriculum: CurriculumState,
    pub sampler_stats: CellStats,
    pub learner_rng: ChaCha8Rng,
    pub runners: Vec<EnvRunner>,
    pub adam_step: u64,
}

fn mlp_tensor_names(prefix: &str, n_layers: usize) -> Vec<String> {
    (0..n_layers)
        .flat_map(|i| [format!("{prefix}.l{i}.w"), format!("{prefix}.l{i}.b")])
        .collect()
}

/// Tensor names in the fixed manifest order for the given parameters.
pub fn tensor_names(params: &PolicyParams<f32>) -> Vec<String> {
    let mut names = mlp_tensor_names("policy", params.policy.layers.len());
    names.push("log_std".to_string());
    names.extend(mlp_tensor_names("value", params.value.layers.len()));
    let plain = names.clone();
    names.extend(plain.iter().map(|n| format!("adam_m.{n}")));
    names.extend(plain.iter().map(|n| format!("adam_v.{n}")));
    names
}

pub fn save_checkpoint(
    path: &Path,
    meta: &CheckpointMeta,
    params: &PolicyParams<f32>,
    adam: &AdamState<f32>,
) -> Result<(), CheckpointError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut tensors: Vec<&Array2<f32>> = params.tensors();
    tensors.extend(adam.m.iter());
    tensors.extend(adam.v.iter());
    let names = tensor_names(params);
    debug_assert_eq!(names.len(), tensors.len());

    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{MAGIC} v{FORMAT_VERSION}")?;
    writeln!(w, "META {}", serde_json::to_string(meta)?)?;
    for (name, t) in names.iter().zip(tensors.iter()) {
        writeln!(w, "TENSOR {name} {} {}", t.nrows(), t.ncols())?;
    }
    writeln!(w, "BINARY")?;
    for t in tensors {
        for v in t.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug)]
pub struct LoadedCheckpoint {
    pub meta: CheckpointMeta,
    pub params: PolicyParams<f32>,
    pub adam: AdamState<f32>,
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint, CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;

    // split the text header from the binary payload
    fn next_line(bytes: &[u8], pos: usize) -> Option<(usize, String)> {
        let rest = &bytes[pos..];
        let nl = rest.iter().position(|b| *b == b'\n')?;
        let line = String::from_utf8_lossy(&rest[..nl]).into_owned();
        Some((pos + nl + 1, line))
    }
    let mut pos = 0usize;

    let (p, magic_line) =
        next_line(&bytes, pos).ok_or(CheckpointError::MissingSection("magic"))?;
    pos = p;
    let expected_magic = format!("{MAGIC} v{FORMAT_VERSION}");
    if magic_line != expected_magic {
        if let Some(v) = magic_line
            .strip_prefix(&format!("{MAGIC} v"))
            .and_then(|v| v.parse::<u32>().ok())
        {
            return Err(CheckpointError::VersionMismatch {
                found: v,
                expected: FORMAT_VERSION,
            });
        }
        return Err(CheckpointError::BadMagic(magic_line));
    }

    let (p, meta_line) = next_line(&bytes, pos).ok_or(CheckpointError::MissingSection("META"))?;
    pos = p;
    let meta_json = meta_line
        .strip_prefix("META ")
        .ok_or(CheckpointError::MissingSection("META"))?;
    let meta: CheckpointMeta = serde_json::from_str(meta_json)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: meta.format_version,
            expected: FORMAT_VERSION,
        });
    }

    let mut manifest: Vec<(String, usize, usize)> = Vec::new();
    loop {
        let (p, line) = next_line(&bytes, pos).ok_or(CheckpointError::MissingSection("BINARY"))?;
        pos = p;
        if line == "BINARY" {
            break;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "TENSOR" {
            return Err(CheckpointError::BadManifest(line));
        }
        let rows = parts[2]
            .parse()
            .map_err(|_| CheckpointError::BadManifest(line.clone()))?;
        let cols = parts[3]
            .parse()
            .map_err(|_| CheckpointError::BadManifest(line.clone()))?;
        manifest.push((parts[1].to_string(), rows, cols));
    }

    // shapes implied by the embedded config
    let obs_dim = crate::arm::OBS_DIM;
    let hidden = meta.config.ppo.hidden;
    let mut reference: PolicyParams<f32> = PolicyParams {
        policy: zeros_mlp(&[obs_dim, hidden, hidden, crate::arm::N_MUSCLES]),
        log_std: Array2::zeros((1, crate::arm::N_MUSCLES)),
        value: zeros_mlp(&[obs_dim, hidden, hidden, 1]),
    };
    let mut adam = AdamState::new(&reference.tensors());
    adam.step = meta.adam_step;
    let names = tensor_names(&reference);
    if manifest.len() != names.len() {
        return Err(CheckpointError::MissingSection("tensor manifest"));
    }

    {
        let mut targets: Vec<&mut Array2<f32>> = reference.tensors_mut();
        targets.extend(adam.m.iter_mut());
        targets.extend(adam.v.iter_mut());
        for (name, (entry, target)) in names
            .iter()
            .zip(manifest.iter().zip(targets.into_iter()))
        {
            let (fname, rows, cols) = entry;
            let expected = (target.nrows(), target.ncols());
            if fname != name || (*rows, *cols) != expected {
                return Err(CheckpointError::ShapeMismatch {
                    name: name.clone(),
                    expected,
                    found: (*rows, *cols),
                });
            }
            let n_bytes = rows * cols * 4;
            if pos + n_bytes > bytes.len() {
                return Err(CheckpointError::TruncatedTensor(name.clone()));
            }
            for v in target.iter_mut() {
                *v = f32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
                pos += 4;
            }
        }
    }

    Ok(LoadedCheckpoint {
        meta,
        params: reference,
        adam,
    })
}

fn zeros_mlp(dims: &[usize]) -> crate::nn::Mlp<f32> {
    crate::nn::Mlp {
        layers: dims
            .windows(2)
            .map(|w| crate::nn::Linear::zeros(w[0], w[1]))
            .collect(),
    }
}
