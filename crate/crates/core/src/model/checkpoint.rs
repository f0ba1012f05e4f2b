//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! "MONOX1"                          magic
//! u32 + JSON                        header: config, vocab, tied-embedding layout
//! u32                               tensor count
//! per tensor: u32 + name, u32 ndim, ndim × u32 dims, f32 values
//! ```

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::params::{Embedding, ModelParams};
use super::vocab::Vocab;
use super::{ModelConfig, ModelError, Role};
use crate::nncore::{Real, Tensor};

pub const MAGIC: &[u8; 6] = b"MONOX1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),
    #[error("tensor {name}: stored shape {stored:?} does not match expected {expected:?}")]
    ShapeMismatch { name: String, stored: Vec<usize>, expected: Vec<usize> },
    #[error("tensor {name} expected at this position, found {found}")]
    UnexpectedTensor { name: String, found: String },
    #[error("checkpoint holds a {found:?} model, expected {expected:?}")]
    RoleMismatch { expected: Role, found: Role },
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error("trailing bytes after the last tensor")]
    TrailingBytes,
    #[error("checkpoint io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
    /// Present for tied embeddings only.
    tied: Option<TiedHeader>,
}

#[derive(Serialize, Deserialize)]
struct TiedHeader {
    num_concepts: usize,
    languages: Vec<String>,
    token_concepts: Vec<(u16, u32)>,
}

fn put_u32(buf: &mut Vec<u8>, x: usize) {
    buf.extend_from_slice(&(x as u32).to_le_bytes());
}

/// Serializes parameters (as f32) to bytes.
pub fn to_bytes<T: Real>(params: &ModelParams<T>) -> Vec<u8> {
    let header = Header {
        config: params.config.clone(),
        vocab: params.vocab.clone(),
        tied: match &params.embedding {
            Embedding::Free { .. } => None,
            Embedding::Tied(t) => Some(TiedHeader {
                num_concepts: t.num_concepts(),
                languages: t.languages.clone(),
                token_concepts: t.token_concepts.clone(),
            }),
        },
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, json.len());
    buf.extend_from_slice(&json);
    let tensors = params.named_tensors();
    put_u32(&mut buf, tensors.len());
    for (name, t, _) in tensors {
        put_u32(&mut buf, name.len());
        buf.extend_from_slice(name.as_bytes());
        put_u32(&mut buf, t.shape().len());
        for &d in t.shape() {
            put_u32(&mut buf, d);
        }
        for &x in t.data() {
            buf.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    }
    buf
}

pub fn save_checkpoint<T: Real>(params: &ModelParams<T>, path: &Path) -> Result<(), CheckpointError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, to_bytes(params))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(what.to_string()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<usize, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }
}

/// Parses a checkpoint, rebuilding the layout from its header and filling
/// every tensor in canonical order.
pub fn from_bytes<T: Real>(bytes: &[u8]) -> Result<ModelParams<T>, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: MAGIC.len() };
    let hlen = r.u32("header length")?;
    let header: Header =
        serde_json::from_slice(r.take(hlen, "header")?).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let mut params = skeleton::<T>(&header)?;
    let expected: Vec<(String, Vec<usize>)> =
        params.named_tensors().into_iter().map(|(n, t, _)| (n, t.shape().to_vec())).collect();
    let count = r.u32("tensor count")?;
    if count != expected.len() {
        return Err(CheckpointError::Header(format!("{count} tensors stored, layout needs {}", expected.len())));
    }
    for ((name, shape), slot) in expected.into_iter().zip(params.tensors_mut()) {
        let nlen = r.u32(&name)?;
        let stored_name = String::from_utf8_lossy(r.take(nlen, &name)?).into_owned();
        if stored_name != name {
            return Err(CheckpointError::UnexpectedTensor { name, found: stored_name });
        }
        let ndim = r.u32(&name)?;
        let stored = (0..ndim).map(|_| r.u32(&name)).collect::<Result<Vec<_>, _>>()?;
        if stored != shape {
            return Err(CheckpointError::ShapeMismatch { name, stored, expected: shape });
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4, &name)?;
        let data =
            raw.chunks_exact(4).map(|c| T::of_f64(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)).collect();
        *slot = Tensor::new(shape, data).map_err(|e| CheckpointError::Header(e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes);
    }
    Ok(params)
}

/// Zero-filled parameters with the layout the header describes.
fn skeleton<T: Real>(header: &Header) -> Result<ModelParams<T>, CheckpointError> {
    let cfg = &header.config;
    cfg.validate().map_err(|e| CheckpointError::Header(e.to_string()))?;
    if cfg.vocab_size != header.vocab.len() {
        return Err(CheckpointError::Header(format!(
            "vocab_size {} but {} vocabulary entries",
            cfg.vocab_size,
            header.vocab.len()
        )));
    }
    ModelParams::zeros(
        cfg,
        header.vocab.clone(),
        header.tied.as_ref().map(|t| (t.num_concepts, t.languages.clone(), t.token_concepts.clone())),
    )
    .map_err(|e: ModelError| CheckpointError::Header(e.to_string()))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<ModelParams<T>, CheckpointError> {
    from_bytes(&fs::read(path)?)
}

/// Like [`load_checkpoint`], rejecting a checkpoint of the other role.
pub fn load_checkpoint_as<T: Real>(path: &Path, role: Role) -> Result<ModelParams<T>, CheckpointError> {
    let params: ModelParams<T> = load_checkpoint(path)?;
    if params.config.role != role {
        return Err(CheckpointError::RoleMismatch { expected: role, found: params.config.role });
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_concept_space, derive_language};
    use crate::model::{init_student, init_teacher};

    fn student() -> ModelParams<f32> {
        let space = build_concept_space(20, 0.5, 8, 1).unwrap();
        let ciphers =
            vec![derive_language(&space, "en", 1, 0.0, 1).unwrap(), derive_language(&space, "fr", 3, 0.0, 2).unwrap()];
        let cfg = ModelConfig {
            num_layers: 1,
            hidden_dim: 8,
            num_heads: 2,
            ffn_dim: 16,
            max_seq_len: 6,
            vocab_size: 0,
            num_classes: 3,
            role: Role::Student,
        };
        init_student(&cfg, &space, &ciphers, 0.2, 5).unwrap()
    }

    #[test]
    fn bytes_round_trip_is_exact_for_f32() {
        let s = student();
        let back: ModelParams<f32> = from_bytes(&to_bytes(&s)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn teacher_round_trip() {
        let space = build_concept_space(20, 0.5, 8, 1).unwrap();
        let en = derive_language(&space, "en", 1, 0.0, 1).unwrap();
        let cfg = ModelConfig {
            num_layers: 1,
            hidden_dim: 8,
            num_heads: 2,
            ffn_dim: 16,
            max_seq_len: 6,
            vocab_size: 0,
            num_classes: 2,
            role: Role::Teacher,
        };
        let t: ModelParams<f32> = init_teacher(&cfg, &space, &en, 3).unwrap();
        assert_eq!(from_bytes::<f32>(&to_bytes(&t)).unwrap(), t);
    }

    #[test]
    fn distinct_errors() {
        let bytes = to_bytes(&student());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes::<f32>(&bad), Err(CheckpointError::BadMagic)));
        assert!(matches!(from_bytes::<f32>(&bytes[..bytes.len() - 3]), Err(CheckpointError::Truncated(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(from_bytes::<f32>(&extra), Err(CheckpointError::TrailingBytes)));
    }
}
