//! Checkpoint file layout (all integers little-endian):
//!
//! ```text
//! offset  size  content
//! 0       8     magic "MIMICKPT"
//! 8       4     u32 format version
//! 12      4     u32 header length H
//! 16      H     UTF-8 JSON header: config, metadata, sections, param_count, blob_sha256
//! 16+H    8·N   N parameters as f64
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, Section};
use crate::error::{Error, Result};
use crate::io_util::{sha256_hex, write_atomic};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MIMICKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Provenance of the stored weights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub best_epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_mae: f64,
    pub base_seed: u64,
    pub lr: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub attention: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    metadata: TrainingMeta,
    sections: Vec<Section>,
    param_count: usize,
    blob_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub metadata: TrainingMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let blob: Vec<u8> = self.model.params().iter().flat_map(|v| v.to_le_bytes()).collect();
        let header = Header {
            config: self.model.config().clone(),
            metadata: self.metadata.clone(),
            sections: self.model.sections().to_vec(),
            param_count: self.model.param_count(),
            blob_sha256: sha256_hex(&blob),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + blob.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&blob);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
        if bytes.len() < 16 {
            return Err(bad("file too short"));
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let hdr = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(hdr).map_err(|e| bad(&format!("header: {e}")))?;
        let blob = &bytes[16 + hlen..];
        if blob.len() != header.param_count * 8 {
            return Err(bad(&format!(
                "expected {} parameter bytes, found {}",
                header.param_count * 8,
                blob.len()
            )));
        }
        if sha256_hex(blob) != header.blob_sha256 {
            return Err(Error::Integrity("checkpoint parameter checksum mismatch".into()));
        }
        let params: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let model = Model::from_parts(header.config, params).map_err(|e| bad(&e.to_string()))?;
        if model.sections() != header.sections.as_slice() {
            return Err(bad("section table does not match the configuration"));
        }
        Ok(Checkpoint {
            model,
            metadata: header.metadata,
        })
    }
}

pub fn save_checkpoint(model: &Model, metadata: &TrainingMeta, path: &Path) -> Result<()> {
    let ck = Checkpoint {
        model: model.clone(),
        metadata: metadata.clone(),
    };
    write_atomic(path, &ck.to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    fn ck(kind: ModelKind) -> Checkpoint {
        Checkpoint {
            model: Model::new(ModelConfig::new(kind, 17)).unwrap(),
            metadata: TrainingMeta {
                epochs: 3,
                lr: 1e-3,
                lambda: 0.01,
                ..Default::default()
            },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for kind in ModelKind::ALL {
            let c = ck(kind);
            let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
            assert_eq!(back, c);
            let x = vec![0.3; c.model.input_dim()];
            assert_eq!(back.model.predict(&x).unwrap(), c.model.predict(&x).unwrap());
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = ck(ModelKind::MlpBlendshape).to_bytes();
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&b), Err(Error::Format(_))));
        let mut b = bytes.clone();
        b[8] = 0;
        assert!(matches!(Checkpoint::from_bytes(&b), Err(Error::Version { found: 0, .. })));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]), Err(Error::Format(_))));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..20]), Err(Error::Format(_))));
        let mut b = bytes.clone();
        let n = b.len();
        b[n - 3] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&b), Err(Error::Integrity(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let c = ck(ModelKind::AttentionKan);
        save_checkpoint(&c.model, &c.metadata, &p).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap(), c);
    }
}
