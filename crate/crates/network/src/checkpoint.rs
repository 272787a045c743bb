//! Bit-exact checkpoint format (little-endian):
//!
//! ```text
//! magic "RGAN" (4 bytes)
//! version: u32 = 1
//! config JSON byte length: u32, then UTF-8 JSON config
//! tensor count: u32
//! per tensor: name length u16, UTF-8 name, rank u8, rank x u32 dims,
//!             f32 data row-major
//! ```
//!
//! Optimizer state is appended with the same tensor framing under names
//! suffixed `.m` / `.v`, plus a step counter as a 0-rank tensor; the loader
//! separates model parameters (names in the config's layout) from such
//! extras. The decoder is hardened against truncated or hostile input:
//! every length is validated against the remaining bytes before any
//! allocation.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use rganet_tensor::{ParamStore, Scalar, Tensor4};

use crate::config::ModelConfig;
use crate::params::{physical_dims, visit_params};
use crate::NetworkError;

pub const MAGIC: &[u8; 4] = b"RGAN";
pub const VERSION: u32 = 1;
const MAX_RANK: u8 = 4;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),

    /// Structural problem in the byte stream, reported with its offset.
    #[error("checkpoint format error at byte {offset}: {detail}")]
    Format { offset: usize, detail: String },

    /// The stream parsed but does not describe a loadable model.
    #[error("checkpoint content error: {detail}")]
    Content { detail: String },
}

/// A tensor that is not a model parameter (optimizer moments, counters).
#[derive(Clone, Debug, PartialEq)]
pub struct ExtraTensor {
    pub name: String,
    pub logical_dims: Vec<u32>,
    pub data: Vec<f32>,
}

pub struct Decoded {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
    pub extras: Vec<ExtraTensor>,
}

/// Serializes config + parameters (+ extra tensors) to the wire format.
pub fn encode<S: Scalar>(
    cfg: &ModelConfig,
    store: &ParamStore<S>,
    extras: &[ExtraTensor],
) -> Vec<u8> {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let count = store.len() + extras.len();
    out.extend_from_slice(&(count as u32).to_le_bytes());
    for p in store.iter() {
        write_tensor_frame(
            &mut out,
            &p.name,
            &p.logical_dims,
            p.value.data().iter().map(|v| v.as64() as f32),
        );
    }
    for e in extras {
        write_tensor_frame(&mut out, &e.name, &e.logical_dims, e.data.iter().copied());
    }
    out
}

fn write_tensor_frame(
    out: &mut Vec<u8>,
    name: &str,
    dims: &[u32],
    data: impl Iterator<Item = f32>,
) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(dims.len() as u8);
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Format {
                offset: self.pos,
                detail: format!(
                    "truncated: need {n} bytes for {what}, {} remain",
                    self.buf.len() - self.pos
                ),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u8(&mut self, what: &str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }
}

/// Parses the wire format. Never panics on malformed input.
pub fn decode(bytes: &[u8]) -> Result<Decoded, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(CheckpointError::Format {
            offset: 0,
            detail: format!("bad magic {magic:02x?}, expected {MAGIC:02x?}"),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::Format {
            offset: 4,
            detail: format!("unsupported version {version}"),
        });
    }
    let json_off = r.pos;
    let json_len = r.u32("config length")? as usize;
    let json = r.take(json_len, "config JSON")?;
    let config: ModelConfig =
        serde_json::from_slice(json).map_err(|e| CheckpointError::Format {
            offset: json_off,
            detail: format!("config JSON: {e}"),
        })?;

    let count = r.u32("tensor count")? as usize;
    let mut tensors: Vec<ExtraTensor> = Vec::new();
    for i in 0..count {
        let name_off = r.pos;
        let name_len = r.u16("name length")? as usize;
        let name_bytes = r.take(name_len, "name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|e| CheckpointError::Format {
                offset: name_off,
                detail: format!("tensor {i} name is not UTF-8: {e}"),
            })?
            .to_string();
        let rank = r.u8("rank")?;
        if rank > MAX_RANK {
            return Err(CheckpointError::Format {
                offset: r.pos - 1,
                detail: format!("tensor {name:?} rank {rank} exceeds {MAX_RANK}"),
            });
        }
        let mut dims = Vec::with_capacity(rank as usize);
        let mut numel: u64 = 1;
        for _ in 0..rank {
            let d = r.u32("dim")?;
            if d == 0 {
                return Err(CheckpointError::Format {
                    offset: r.pos - 4,
                    detail: format!("tensor {name:?} has a zero dim"),
                });
            }
            numel = numel.saturating_mul(d as u64);
            dims.push(d);
        }
        let remaining = (r.buf.len() - r.pos) as u64;
        if numel.saturating_mul(4) > remaining {
            return Err(CheckpointError::Format {
                offset: r.pos,
                detail: format!(
                    "tensor {name:?} claims {numel} elements but only {remaining} bytes remain"
                ),
            });
        }
        let raw = r.take(numel as usize * 4, "tensor data")?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(ExtraTensor {
            name,
            logical_dims: dims,
            data,
        });
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Format {
            offset: r.pos,
            detail: format!("{} trailing bytes after last tensor", bytes.len() - r.pos),
        });
    }

    split_tensors(config, tensors)
}

/// Splits parsed tensors into the model parameter set (validated against the
/// config's layout) and loose extras.
fn split_tensors(
    config: ModelConfig,
    tensors: Vec<ExtraTensor>,
) -> Result<Decoded, CheckpointError> {
    config.validate().map_err(|e| CheckpointError::Content {
        detail: e.to_string(),
    })?;
    let mut layout: HashMap<String, Vec<u32>> = HashMap::new();
    visit_params(&config, &mut |name, dims| {
        layout.insert(name, dims);
    });

    let mut params = ParamStore::new();
    let mut extras = Vec::new();
    for t in tensors {
        match layout.remove(&t.name) {
            Some(dims) => {
                if dims != t.logical_dims {
                    return Err(CheckpointError::Content {
                        detail: format!(
                            "parameter {:?} has dims {:?}, layout expects {:?}",
                            t.name, t.logical_dims, dims
                        ),
                    });
                }
                let (n, c, h, w) =
                    physical_dims(&t.logical_dims).map_err(|e| CheckpointError::Content {
                        detail: e.to_string(),
                    })?;
                let value =
                    Tensor4::from_vec(n, c, h, w, t.data).map_err(|e| {
                        CheckpointError::Content {
                            detail: format!("parameter {:?}: {e}", t.name),
                        }
                    })?;
                params
                    .insert(t.name, value, t.logical_dims)
                    .map_err(|e| CheckpointError::Content {
                        detail: e.to_string(),
                    })?;
            }
            None => extras.push(t),
        }
    }
    if !layout.is_empty() {
        let mut missing: Vec<&String> = layout.keys().collect();
        missing.sort();
        return Err(CheckpointError::Content {
            detail: format!(
                "{} parameters missing from checkpoint (first: {})",
                missing.len(),
                missing[0]
            ),
        });
    }
    Ok(Decoded {
        config,
        params,
        extras,
    })
}

pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    cfg: &ModelConfig,
    store: &ParamStore<S>,
    extras: &[ExtraTensor],
) -> Result<(), NetworkError> {
    let bytes = encode(cfg, store, extras);
    std::fs::write(path, bytes).map_err(|e| NetworkError::Checkpoint(CheckpointError::Io(e)))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Decoded, NetworkError> {
    let bytes = std::fs::read(path).map_err(|e| NetworkError::Checkpoint(CheckpointError::Io(e)))?;
    Ok(decode(&bytes)?)
}
