//! Binary checkpoints for denoiser parameters and optimizer state.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "UNPRCKPT" | version u32 | seed u64 | schedule T u64 | schedule fingerprint u64
//! activation u8 | embed_dim u64 | layer count u64 | widths u64...
//! preconditioned u8 [ sigma_data_sq f64 | mean f64 x d ]
//! adam step u64 | param count u64 | theta f64 x n | m f64 x n | v f64 x n
//! ```

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::denoiser::{Activation, AdamState, Arch, DenoiserParams, Preconditioner};
use crate::diffusion::NoiseSchedule;
use crate::tensor::DenseVector;

pub const MAGIC: &[u8; 8] = b"UNPRCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("I/O failure on {path} at byte offset {offset}: {reason}")]
    IoFailure { path: PathBuf, offset: u64, reason: String },
    #[error("{path}: checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: checkpoint was written for a T={found_steps} schedule ({found:016x}), config has T={expected_steps} ({expected:016x})")]
    ScheduleMismatch { path: PathBuf, found_steps: u64, found: u64, expected_steps: u64, expected: u64 },
    #[error("{path}: corrupt checkpoint at byte offset {offset}: {reason}")]
    Corrupt { path: PathBuf, offset: u64, reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: DenoiserParams,
    pub seed: u64,
}

pub fn encode(params: &DenoiserParams, sched: &NoiseSchedule, seed: u64) -> Vec<u8> {
    let arch = params.arch();
    let n = params.theta().len();
    let mut out = Vec::with_capacity(64 + 24 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [seed, sched.steps() as u64, sched.fingerprint()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(arch.activation().tag());
    out.extend_from_slice(&(arch.embed_dim() as u64).to_le_bytes());
    out.extend_from_slice(&(arch.layers().len() as u64).to_le_bytes());
    for &w in arch.layers() {
        out.extend_from_slice(&(w as u64).to_le_bytes());
    }
    match params.preconditioner() {
        Some(p) => {
            out.push(1);
            out.extend_from_slice(&p.sigma_data_sq().to_le_bytes());
            p.mean().iter().for_each(|m| out.extend_from_slice(&m.to_le_bytes()));
        }
        None => out.push(0),
    }
    let state = params.state();
    out.extend_from_slice(&state.step.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for block in [params.theta().as_slice(), &state.m, &state.v] {
        block.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    }
    out
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn save_checkpoint(params: &DenoiserParams, sched: &NoiseSchedule, seed: u64, path: &Path) -> Result<(), CheckpointError> {
    let io = |offset: u64, e: std::io::Error| CheckpointError::IoFailure { path: path.to_path_buf(), offset, reason: e.to_string() };
    let bytes = encode(params, sched, seed);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io(0, e))?;
    }
    let tmp = path.with_extension("ckpt.partial");
    std::fs::write(&tmp, &bytes).map_err(|e| io(0, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io(bytes.len() as u64, e))
}

pub fn load_checkpoint(path: &Path, sched: &NoiseSchedule) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::IoFailure { path: path.to_path_buf(), offset: 0, reason: e.to_string() })?;
    decode(&bytes, sched, path)
}

/// Hex SHA-256 of a checkpoint file.
pub fn file_hash(path: &Path) -> Result<String, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::IoFailure { path: path.to_path_buf(), offset: 0, reason: e.to_string() })?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, len: usize, what: &str) -> Result<&[u8], CheckpointError> {
        if self.bytes.len() - self.pos < len {
            return Err(CheckpointError::IoFailure {
                path: self.path.to_path_buf(),
                offset: self.bytes.len() as u64,
                reason: format!("file truncated while reading {what} ({len} bytes needed at offset {})", self.pos),
            });
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, len: usize, what: &str) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(len.checked_mul(8).ok_or_else(|| self.corrupt("length overflow"))?, what)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn corrupt(&self, reason: &str) -> CheckpointError {
        CheckpointError::Corrupt { path: self.path.to_path_buf(), offset: self.pos as u64, reason: reason.to_string() }
    }
}

pub fn decode(bytes: &[u8], sched: &NoiseSchedule, path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8, "magic")? != MAGIC {
        return Err(CheckpointError::Corrupt { path: path.to_path_buf(), offset: 0, reason: "bad magic".into() });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch { path: path.to_path_buf(), found: version, expected: VERSION });
    }
    let seed = r.u64("seed")?;
    let steps = r.u64("schedule length")?;
    let fingerprint = r.u64("schedule fingerprint")?;
    if steps != sched.steps() as u64 || fingerprint != sched.fingerprint() {
        return Err(CheckpointError::ScheduleMismatch {
            path: path.to_path_buf(),
            found_steps: steps,
            found: fingerprint,
            expected_steps: sched.steps() as u64,
            expected: sched.fingerprint(),
        });
    }
    let activation = Activation::from_tag(r.u8("activation")?).ok_or_else(|| r.corrupt("unknown activation tag"))?;
    let embed = r.u64("embedding dimension")? as usize;
    let count = r.u64("layer count")? as usize;
    if count > 64 {
        return Err(r.corrupt("implausible layer count"));
    }
    let layers = (0..count).map(|_| r.u64("layer width").map(|w| w as usize)).collect::<Result<Vec<_>, _>>()?;
    let arch = Arch::new(layers, activation, embed).map_err(|e| r.corrupt(&e.to_string()))?;
    let precond = match r.u8("preconditioner flag")? {
        0 => None,
        1 => {
            let s2 = f64::from_le_bytes(r.take(8, "data variance")?.try_into().unwrap());
            let mean = r.f64s(arch.data_dim(), "data mean")?;
            Some(Preconditioner::new(mean, s2, sched).map_err(|e| r.corrupt(&e.to_string()))?)
        }
        _ => return Err(r.corrupt("bad preconditioner flag")),
    };
    let adam_step = r.u64("optimizer step")?;
    let n = r.u64("parameter count")? as usize;
    if n != arch.param_count() {
        return Err(r.corrupt(&format!("parameter count {n} does not match architecture ({})", arch.param_count())));
    }
    let theta = r.f64s(n, "weights")?;
    let m = r.f64s(n, "first moments")?;
    let v = r.f64s(n, "second moments")?;
    if r.pos != bytes.len() {
        return Err(r.corrupt("trailing bytes"));
    }
    let state = AdamState { m, v, step: adam_step };
    let mut params = DenoiserParams::from_parts(arch, DenseVector::from_vec(theta), state).map_err(|e| r.corrupt(&e.to_string()))?;
    if let Some(p) = precond {
        params = params.with_preconditioner(p).map_err(|e| r.corrupt(&e.to_string()))?;
    }
    Ok(Checkpoint { params, seed })
}
