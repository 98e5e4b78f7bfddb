use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::array::Array;
use crate::error::{NdError, Result};
use crate::params::ParamStore;

const MAGIC: &[u8; 8] = b"NDIFFCK1";

/// A named parameter collection with the hash of the config that produced it.
///
/// `save` writes a binary container: the magic bytes, a little-endian `u64`
/// header length, a JSON header (hash, metadata, names and shapes in store
/// order), then every value as a little-endian `f64` in the same order.
/// `load` also accepts the plain JSON form produced by `to_json`. Both
/// round-trip bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    /// Parameter names in store order.
    pub order: Vec<String>,
    pub params: BTreeMap<String, Array>,
    /// Free-form metadata owned by the caller.
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config_hash: String,
    meta: serde_json::Value,
    shapes: Vec<(String, Vec<usize>)>,
}

fn truncated() -> NdError {
    NdError::Invalid("checkpoint is truncated".into())
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, config_hash: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            config_hash: config_hash.into(),
            order: store.names().to_vec(),
            params: store
                .iter()
                .map(|(n, a)| (n.to_string(), a.clone()))
                .collect(),
            meta,
        }
    }

    pub fn to_store(&self) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for name in &self.order {
            store.insert(name.clone(), self.param(name)?.clone())?;
        }
        Ok(store)
    }

    fn param(&self, name: &str) -> Result<&Array> {
        self.params
            .get(name)
            .ok_or_else(|| NdError::UnknownParam(name.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let shapes = self
            .order
            .iter()
            .map(|n| Ok((n.clone(), self.param(n)?.shape().to_vec())))
            .collect::<Result<Vec<_>>>()?;
        let header = serde_json::to_vec(&Header {
            config_hash: self.config_hash.clone(),
            meta: self.meta.clone(),
            shapes,
        })?;
        let total: usize = self.params.values().map(Array::len).sum();
        let mut out = Vec::with_capacity(16 + header.len() + 8 * total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for name in &self.order {
            for x in self.param(name)?.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or_else(|| NdError::Invalid("not a checkpoint".into()))?;
        let (len, rest) = rest.split_first_chunk::<8>().ok_or_else(truncated)?;
        let len = usize::try_from(u64::from_le_bytes(*len)).map_err(|_| truncated())?;
        if rest.len() < len {
            return Err(truncated());
        }
        let (header, mut body) = rest.split_at(len);
        let header: Header = serde_json::from_slice(header)?;
        let mut order = Vec::with_capacity(header.shapes.len());
        let mut params = BTreeMap::new();
        for (name, shape) in header.shapes {
            let n: usize = shape.iter().product();
            if body.len() < 8 * n {
                return Err(truncated());
            }
            let (chunk, tail) = body.split_at(8 * n);
            body = tail;
            let data = chunk
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            if params.insert(name.clone(), Array::new(shape, data)?).is_some() {
                return Err(NdError::DuplicateParam(name));
            }
            order.push(name);
        }
        if !body.is_empty() {
            return Err(NdError::Invalid("trailing bytes after checkpoint".into()));
        }
        Ok(Self {
            config_hash: header.config_hash,
            order,
            params,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(MAGIC) {
            Self::from_bytes(&bytes)
        } else {
            let text = String::from_utf8(bytes).map_err(|_| NdError::Invalid("not a checkpoint".into()))?;
            Self::from_json(&text)
        }
    }
}
