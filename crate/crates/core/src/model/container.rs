//! `.ilw` weight files: a UTF-8 manifest (config plus tensor index) followed
//! by the raw little-endian row-major float32 payload. Round-trips are
//! bit-exact.
//!
//! Layout:
//! ```text
//! ILW1 <manifest_bytes>\n
//! <manifest JSON, exactly that many bytes>
//! <payload>
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelWeights};
use crate::error::{Error, Result};
use crate::tensor::TensorF32;

const MAGIC: &str = "ILW1";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: u64,
}

/// A parsed container: typed meta plus named tensors in manifest order.
pub(crate) struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, TensorF32)>,
}

pub(crate) fn write_container(path: &Path, c: &Container) -> Result<()> {
    let mut entries = Vec::with_capacity(c.tensors.len());
    let mut offset = 0u64;
    for (name, t) in &c.tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += (t.data().len() * 4) as u64;
    }
    let manifest = Manifest {
        kind: c.kind.clone(),
        meta: c.meta.clone(),
        tensors: entries,
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{MAGIC} {}", manifest_bytes.len())?;
    f.write_all(&manifest_bytes)?;
    for (_, t) in &c.tensors {
        for v in t.data() {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

pub(crate) fn read_container(path: &Path) -> Result<Container> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Corruption("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::Corruption("header is not UTF-8".into()))?;
    let (magic, len) = header
        .split_once(' ')
        .ok_or_else(|| Error::Corruption("malformed header".into()))?;
    if magic != MAGIC {
        return Err(Error::Corruption(format!("bad magic {magic:?}")));
    }
    let manifest_len: usize = len
        .trim()
        .parse()
        .map_err(|_| Error::Corruption("bad manifest length".into()))?;
    let manifest_start = nl + 1;
    let payload_start = manifest_start + manifest_len;
    if payload_start > bytes.len() {
        return Err(Error::Corruption("manifest extends past end of file".into()));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[manifest_start..payload_start])
        .map_err(|e| Error::Corruption(format!("manifest parse failed: {e}")))?;
    let payload = &bytes[payload_start..];

    let mut expected = 0u64;
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        if e.offset != expected {
            return Err(Error::Corruption(format!(
                "tensor {} at offset {}, expected {}",
                e.name, e.offset, expected
            )));
        }
        expected += (n * 4) as u64;
    }
    if expected != payload.len() as u64 {
        return Err(Error::Corruption(format!(
            "payload is {} bytes, manifest implies {}",
            payload.len(),
            expected
        )));
    }

    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let b = &payload[start + 4 * i..start + 4 * i + 4];
            data.push(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        }
        let t = TensorF32::new(e.shape.clone(), data)
            .map_err(|err| Error::Corruption(format!("tensor {}: {err}", e.name)))?;
        tensors.push((e.name.clone(), t));
    }
    Ok(Container {
        kind: manifest.kind,
        meta: manifest.meta,
        tensors,
    })
}

pub(crate) fn save_model(weights: &ModelWeights, path: &Path) -> Result<()> {
    let tensors = weights
        .tensor_entries()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    write_container(
        path,
        &Container {
            kind: "model".into(),
            meta: serde_json::to_value(weights.config)?,
            tensors,
        },
    )
}

pub(crate) fn load_model(path: &Path) -> Result<ModelWeights> {
    let c = read_container(path)?;
    if c.kind != "model" {
        return Err(Error::Corruption(format!(
            "expected a model container, found kind {:?}",
            c.kind
        )));
    }
    let config: ModelConfig = serde_json::from_value(c.meta.clone())
        .map_err(|e| Error::Corruption(format!("bad model config: {e}")))?;
    config.validate().map_err(|e| Error::Corruption(e.to_string()))?;
    let mut weights = ModelWeights::zeros(config).map_err(|e| Error::Corruption(e.to_string()))?;
    let expected_names: std::collections::BTreeSet<String> = weights
        .tensor_entries()
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    let mut seen = std::collections::BTreeSet::new();
    for (name, tensor) in c.tensors {
        let slot = weights.tensor_slot(&name).ok_or_else(|| {
            Error::Corruption(format!("manifest lists unknown tensor {name:?}"))
        })?;
        if slot.shape() != tensor.shape() {
            return Err(Error::Corruption(format!(
                "tensor {name} has shape {:?}, config implies {:?}",
                tensor.shape(),
                slot.shape()
            )));
        }
        *slot = tensor;
        seen.insert(name);
    }
    if seen != expected_names {
        let missing: Vec<_> = expected_names.difference(&seen).collect();
        return Err(Error::Corruption(format!("missing tensors: {missing:?}")));
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    fn cfg() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            d_head: 4,
            vocab_size: 13,
            max_seq_len: 6,
            variant: Variant::Full,
        }
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let w = ModelWeights::random(cfg(), 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ilw");
        save_model(&w, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(w, loaded);
        // byte-for-byte identical when saved again
        save_model(&loaded, &dir.path().join("m2.ilw")).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(dir.path().join("m2.ilw")).unwrap()
        );
    }

    #[test]
    fn truncated_payload_is_corruption() {
        let w = ModelWeights::random(cfg(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ilw");
        save_model(&w, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Corruption(_))));
    }

    #[test]
    fn unknown_tensor_name_is_corruption() {
        let w = ModelWeights::random(cfg(), 1).unwrap();
        let mut tensors: Vec<(String, TensorF32)> = w
            .tensor_entries()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        tensors[2].0 = "layer0.head0.w_bogus".into();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ilw");
        write_container(
            &path,
            &Container {
                kind: "model".into(),
                meta: serde_json::to_value(w.config).unwrap(),
                tensors,
            },
        )
        .unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(
            matches!(&err, Error::Corruption(m) if m.contains("unknown tensor")),
            "{err}"
        );
    }

    #[test]
    fn missing_tensor_is_corruption() {
        let w = ModelWeights::random(cfg(), 1).unwrap();
        let mut tensors: Vec<(String, TensorF32)> = w
            .tensor_entries()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        tensors.pop();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ilw");
        write_container(
            &path,
            &Container {
                kind: "model".into(),
                meta: serde_json::to_value(w.config).unwrap(),
                tensors,
            },
        )
        .unwrap();
        assert!(matches!(load_model(&path), Err(Error::Corruption(_))));
    }
}
