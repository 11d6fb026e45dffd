//! `EEGD` dataset files.
//!
//! Little-endian header: magic `EEGD`, `u32` version, `u32` n_samples,
//! `u32` n_channels, `u32` n_timesteps, `u32` n_classes, `f32` sampling
//! rate. Each sample follows as `u32` subject id, `u32` label and
//! `n_channels * n_timesteps` channel-major `f32` values.

use std::fs;
use std::path::Path;

use super::{EegDataset, EegSample};
use crate::error::{Error, Result};

pub const EEGD_MAGIC: &[u8; 4] = b"EEGD";
pub const EEGD_VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

pub fn encode_dataset(dataset: &EegDataset) -> Vec<u8> {
    let per = dataset.n_channels * dataset.n_timesteps;
    let mut out = Vec::with_capacity(HEADER_LEN + dataset.len() * (8 + 4 * per));
    out.extend_from_slice(EEGD_MAGIC);
    for v in [EEGD_VERSION, dataset.len() as u32, dataset.n_channels as u32, dataset.n_timesteps as u32, dataset.n_classes as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&dataset.sampling_rate_hz.to_le_bytes());
    for s in &dataset.samples {
        out.extend_from_slice(&s.subject_id.to_le_bytes());
        out.extend_from_slice(&s.label.to_le_bytes());
        for v in &s.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_dataset(dataset: &EegDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_dataset(dataset))?;
    Ok(())
}

fn format(offset: usize, message: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, message: message.into() }
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Parse an `EEGD` byte buffer. `name` becomes the dataset name.
pub fn decode_dataset(bytes: &[u8], name: &str) -> Result<EegDataset> {
    if bytes.len() < 4 || &bytes[..4] != EEGD_MAGIC {
        return Err(format(0, "bad magic, expected EEGD"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(format(bytes.len(), format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len())));
    }
    let version = u32_at(bytes, 4);
    if version != EEGD_VERSION {
        return Err(format(4, format!("unsupported version {version}")));
    }
    let n_samples = u32_at(bytes, 8) as usize;
    let n_channels = u32_at(bytes, 12) as usize;
    let n_timesteps = u32_at(bytes, 16) as usize;
    let n_classes = u32_at(bytes, 20) as usize;
    let sampling_rate_hz = f32::from_le_bytes(bytes[24..28].try_into().unwrap());
    if n_classes == 0 {
        return Err(format(20, "n_classes must be positive"));
    }
    if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
        return Err(format(24, format!("sampling rate must be positive, got {sampling_rate_hz}")));
    }
    let per = n_channels
        .checked_mul(n_timesteps)
        .ok_or_else(|| format(12, "channel and timestep counts overflow"))?;
    let record = 8 + 4 * per;
    let payload = bytes.len() - HEADER_LEN;
    let expected = record as u128 * n_samples as u128;
    if (payload as u128) < expected {
        let whole = payload / record;
        return Err(format(
            HEADER_LEN + whole * record,
            format!("header declares {n_samples} samples but payload holds {whole}"),
        ));
    }
    if payload as u128 > expected {
        return Err(format(HEADER_LEN + expected as usize, "trailing bytes after last sample"));
    }
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let at = HEADER_LEN + i * record;
        let subject_id = u32_at(bytes, at);
        let label = u32_at(bytes, at + 4);
        if label as usize >= n_classes {
            return Err(format(at + 4, format!("label {label} out of range for {n_classes} classes")));
        }
        let values = &bytes[at + 8..at + record];
        let mut data = Vec::with_capacity(per);
        for (j, c) in values.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(format(at + 8 + 4 * j, "non-finite sample value"));
            }
            data.push(v);
        }
        samples.push(EegSample { subject_id, label, data });
    }
    Ok(EegDataset { name: name.to_string(), n_channels, n_timesteps, n_classes, sampling_rate_hz, samples })
}

/// Load an `EEGD` file; the dataset is named after the file stem.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<EegDataset> {
    let path = path.as_ref();
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    decode_dataset(&fs::read(path)?, name)
}
