//! `DGNW` parameter files.
//!
//! Layout (little-endian): magic `DGNW`, `u32` version, `u32` length of the
//! config JSON followed by the JSON bytes, then one block per tensor:
//! `u16` name length, name, `u8` rank, `u32` extents, `f32` payload.

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::params::{Layout, ModelParams, ParamTensor};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PARAMS_MAGIC: &[u8; 4] = b"DGNW";
pub const PARAMS_VERSION: u32 = 1;

pub fn encode_params(params: &ModelParams<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    let fingerprint = params.config().fingerprint();
    out.extend_from_slice(&(fingerprint.len() as u32).to_le_bytes());
    out.extend_from_slice(fingerprint.as_bytes());
    for t in params.tensors() {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.value.rank() as u8);
        for &e in t.value.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in t.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_params(params: &ModelParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_params(params))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Format { offset: self.pos as u64, message: message.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Parse a parameter file and return its stored config alongside the
/// tensors.
pub fn decode_params(bytes: &[u8]) -> Result<ModelParams<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != PARAMS_MAGIC {
        return Err(Error::Format { offset: 0, message: "bad magic, expected DGNW".into() });
    }
    let version = r.u32("version")?;
    if version != PARAMS_VERSION {
        return Err(Error::Format { offset: 4, message: format!("unsupported version {version}") });
    }
    let len = r.u32("config length")? as usize;
    let at = r.pos;
    let config: ModelConfig = serde_json::from_slice(r.take(len, "config")?)
        .map_err(|e| Error::Format { offset: at as u64, message: format!("bad config fingerprint: {e}") })?;
    config.validate().map_err(|e| Error::Format { offset: at as u64, message: e.to_string() })?;

    let (_, specs) = Layout::build(&config);
    let mut slots: Vec<Option<Tensor<f32>>> = vec![None; specs.len()];
    while !r.done() {
        let block_at = r.pos;
        let name_len = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?).map_err(|_| r.err("name is not UTF-8"))?;
        let idx = specs
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::Format { offset: block_at as u64, message: format!("unknown tensor {name:?}") })?;
        if slots[idx].is_some() {
            return Err(Error::Format { offset: block_at as u64, message: format!("duplicate tensor {name:?}") });
        }
        let rank = r.take(1, "rank")?[0] as usize;
        let shape = (0..rank).map(|_| r.u32("extent").map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
        if shape != specs[idx].shape {
            return Err(Error::Format {
                offset: block_at as u64,
                message: format!("tensor {name:?} has shape {shape:?}, config implies {:?}", specs[idx].shape),
            });
        }
        let n: usize = shape.iter().product();
        let payload = r.take(4 * n, "payload")?;
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        slots[idx] = Some(Tensor::new(&shape, data)?);
    }
    let mut tensors = Vec::with_capacity(specs.len());
    for (spec, slot) in specs.into_iter().zip(slots) {
        let value = slot.ok_or_else(|| r.err(format!("missing tensor {:?}", spec.name)))?;
        tensors.push(ParamTensor { name: spec.name, kind: spec.kind, value });
    }
    ModelParams::from_tensors(&config, tensors)
}

/// Load a parameter file, whatever config it was written with.
pub fn load_params(path: impl AsRef<Path>) -> Result<ModelParams<f32>> {
    decode_params(&fs::read(path)?)
}

/// Load a parameter file and reject it unless it was written for `expected`.
pub fn load_params_for(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<ModelParams<f32>> {
    let params = load_params(path)?;
    if params.config() != expected {
        return Err(Error::Format {
            offset: 12,
            message: format!(
                "config fingerprint mismatch: file has {}, expected {}",
                params.config().fingerprint(),
                expected.fingerprint()
            ),
        });
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams<f32> {
        let mut c = ModelConfig::new(2, 16, 3);
        c.hidden_depth = 2;
        c.mlp_hidden = 8;
        ModelParams::init(&c, 4).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = params();
        let bytes = encode_params(&p);
        let q = decode_params(&bytes).unwrap();
        assert_eq!(p, q);
        assert_eq!(encode_params(&q), bytes);
    }

    #[test]
    fn every_truncation_is_a_format_error() {
        let bytes = encode_params(&params());
        for cut in [0, 3, 7, 11, 20, bytes.len() / 2, bytes.len() - 1] {
            match decode_params(&bytes[..cut]) {
                Err(Error::Format { .. }) => {}
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn corrupt_magic_and_mismatched_config() {
        let p = params();
        let mut bytes = encode_params(&p);
        bytes[0] = b'X';
        assert!(matches!(decode_params(&bytes), Err(Error::Format { offset: 0, .. })));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.dgnw");
        save_params(&p, &path).unwrap();
        let mut other = p.config().clone();
        other.n_channels = 3;
        assert!(load_params_for(&path, &other).is_err());
        assert!(load_params_for(&path, p.config()).is_ok());
    }
}
