//! Parameter checkpoints.
//!
//! Layout: the 8-byte magic `PBEVCKPT`, a little-endian `u64` header length,
//! a UTF-8 JSON header, then the tensor payload as little-endian `f64`.
//! Tensor offsets in the header are byte offsets into the payload.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::nn::Parameterized;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PBEVCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    #[serde(default)]
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Free-form metadata, typically the model configuration.
    pub meta: serde_json::Value,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn from_params<P: Parameterized + ?Sized>(params: &P, meta: serde_json::Value) -> Self {
        let mut tensors = Vec::new();
        params.visit_tensors(&mut |name, shape, data| {
            tensors.push(Tensor {
                name: name.to_string(),
                shape: shape.to_vec(),
                data: data.to_vec(),
            })
        });
        Self { meta, tensors }
    }

    /// Copies tensors into `params`, which must have exactly the same
    /// names and shapes.
    pub fn load_into<P: Parameterized + ?Sized>(&self, params: &mut P) -> Result<()> {
        let mut expected = Vec::new();
        params.visit_tensors(&mut |name, shape, _| expected.push((name.to_string(), shape.to_vec())));
        if expected.len() != self.tensors.len() {
            return Err(Error::invalid(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(&self.tensors) {
            if *name != t.name || *shape != t.shape {
                return Err(Error::invalid(format!(
                    "checkpoint tensor {} {:?} does not match model tensor {name} {shape:?}",
                    t.name, t.shape
                )));
            }
        }
        let mut k = 0;
        params.visit_tensors_mut(&mut |_, _, data| {
            data.copy_from_slice(&self.tensors[k].data);
            k += 1;
        });
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let mut entries = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            if shape_len(&t.shape) != Some(t.data.len()) {
                return Err(Error::invalid(format!(
                    "tensor {} has {} values for shape {:?}",
                    t.name,
                    t.data.len(),
                    t.shape
                )));
            }
            entries.push(TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                offset,
            });
            offset += 8 * t.data.len() as u64;
        }
        let header = serde_json::to_vec(&Header {
            version: VERSION,
            meta: self.meta.clone(),
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::parse("not a checkpoint (bad magic)"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let header_end = usize::try_from(header_len)
            .ok()
            .and_then(|n| n.checked_add(16))
            .filter(|end| *end <= bytes.len())
            .ok_or_else(|| Error::parse("checkpoint header length exceeds file"))?;
        let header: Header = serde_json::from_slice(&bytes[16..header_end])?;
        if header.version != VERSION {
            return Err(Error::parse(format!("unsupported checkpoint version {}", header.version)));
        }
        let payload = &bytes[header_end..];
        let mut names = BTreeSet::new();
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            if !names.insert(e.name.clone()) {
                return Err(Error::parse(format!("duplicate tensor name {:?}", e.name)));
            }
            let bad = || Error::parse(format!("tensor {:?} lies outside the payload", e.name));
            let count = shape_len(&e.shape).ok_or_else(bad)?;
            let start = usize::try_from(e.offset).map_err(|_| bad())?;
            if start % 8 != 0 {
                return Err(Error::parse(format!("tensor {:?} offset is not 8-byte aligned", e.name)));
            }
            let end = count
                .checked_mul(8)
                .and_then(|n| n.checked_add(start))
                .filter(|end| *end <= payload.len())
                .ok_or_else(bad)?;
            let data = payload[start..end]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Tensor {
                name: e.name,
                shape: e.shape,
                data,
            });
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }
}

fn shape_len(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, d| acc.checked_mul(*d))
}
