//! Checkpoint files: a text header with a JSON manifest of
//! (name, shape, dtype, offset) entries, then raw little-endian f64 payloads.
//! Loading rebuilds weights and verifies every shape against the stored
//! model configuration.

use crate::corpus::write_atomic;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelWeights};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &str = "entlm-ckpt v1";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    num_classes: Option<usize>,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(weights: &ModelWeights, path: &Path) -> Result<()> {
    let mut entries = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    for p in weights.params() {
        entries.push(TensorEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            dtype: "f64".into(),
            offset: payload.len(),
        });
        for v in p.value.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        config: weights.config.clone(),
        num_classes: weights.num_classes,
        tensors: entries,
    };
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC.as_bytes());
    bytes.push(b'\n');
    bytes.extend_from_slice(serde_json::to_string(&manifest).expect("manifest").as_bytes());
    bytes.push(b'\n');
    bytes.extend_from_slice(&payload);
    write_atomic(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelWeights> {
    let bytes = std::fs::read(path)?;
    let first_nl = find_newline(&bytes, 0, 1)?;
    if &bytes[..first_nl] != MAGIC.as_bytes() {
        return Err(Error::Parse { line: 1, msg: "not a checkpoint file".into() });
    }
    let second_nl = find_newline(&bytes, first_nl + 1, 2)?;
    let manifest: Manifest = serde_json::from_slice(&bytes[first_nl + 1..second_nl])
        .map_err(|e| Error::Parse { line: 2, msg: e.to_string() })?;
    let payload = &bytes[second_nl + 1..];

    let mut weights = ModelWeights::init(manifest.config.clone())?;
    if let Some(c) = manifest.num_classes {
        weights.add_classifier(c);
    }

    // every expected parameter present, same shape, and nothing extra
    if manifest.tensors.len() != weights.params().len() {
        return Err(Error::Config(format!(
            "checkpoint holds {} tensors, config implies {}",
            manifest.tensors.len(),
            weights.params().len()
        )));
    }
    for entry in &manifest.tensors {
        if entry.dtype != "f64" {
            return Err(Error::Config(format!(
                "tensor {} has unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        if !weights.has(&entry.name) {
            return Err(Error::Config(format!("unexpected tensor {}", entry.name)));
        }
        let idx = weights.idx(&entry.name);
        let expect = weights.params()[idx].value.shape().to_vec();
        if entry.shape != expect {
            return Err(Error::Config(format!(
                "tensor {} has shape {:?}, config implies {:?}",
                entry.name, entry.shape, expect
            )));
        }
        let numel: usize = entry.shape.iter().product();
        let end = entry.offset + numel * 8;
        if end > payload.len() {
            return Err(Error::Config(format!(
                "tensor {} payload out of bounds",
                entry.name
            )));
        }
        let data: Vec<f64> = payload[entry.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor {} holds non-finite values", entry.name)));
        }
        weights.params_mut()[idx].value = Tensor::new(entry.shape.clone(), data).unwrap();
    }
    Ok(weights)
}

fn find_newline(bytes: &[u8], from: usize, line: usize) -> Result<usize> {
    bytes[from..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|p| from + p)
        .ok_or(Error::Parse { line, msg: "truncated checkpoint header".into() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("entlm-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_preserves_every_value() {
        let mut cfg = ModelConfig::tiny(20);
        cfg.seed = 42;
        let mut w = ModelWeights::init(cfg).unwrap();
        w.add_classifier(3);
        let path = tmp("roundtrip.ckpt");
        save_checkpoint(&w, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.value_hash(), w.value_hash());
        assert_eq!(loaded.num_classes, Some(3));
        assert_eq!(loaded.config, w.config);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn garbage_file_is_rejected() {
        let path = tmp("garbage.ckpt");
        std::fs::write(&path, b"not a checkpoint\n{}\n").unwrap();
        assert!(load_checkpoint(&path).is_err());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn shape_mismatch_fails_loudly() {
        let cfg = ModelConfig::tiny(20);
        let w = ModelWeights::init(cfg).unwrap();
        let path = tmp("mismatch.ckpt");
        save_checkpoint(&w, &path).unwrap();
        // corrupt the manifest: claim a different shape for emb.token
        let bytes = std::fs::read(&path).unwrap();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let corrupted = text.replacen("[20,16]", "[21,16]", 1);
        assert_ne!(corrupted, text, "manifest should contain the token table shape");
        std::fs::write(&path, corrupted).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Config(msg)) => assert!(msg.contains("shape")),
            other => panic!("expected shape error, got {:?}", other.map(|_| ())),
        }
        std::fs::remove_file(&path).ok();
    }
}
