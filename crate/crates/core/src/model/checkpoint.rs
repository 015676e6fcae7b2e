//! Checkpoint files.
//!
//! Layout: magic `XQCKPT\0\0`, u32 version, u32 header length, header text,
//! 32-byte vocabulary hash, u32 tensor count, then per tensor u16 name
//! length, name, u8 rank, u32 dims, little-endian f32 data. A SHA-256 of
//! everything before it closes the file. The header is the canonical
//! config followed by `option.*` and `meta.*` lines.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{ModelOptions, StructureConfig};
use super::network::{Model, Params};
use crate::movespace::MoveVocabulary;

const MAGIC: &[u8; 8] = b"XQCKPT\0\0";
const VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("checkpoint was trained against a different move vocabulary")]
    VocabularyMismatch,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// Free-form descriptive fields stored with the weights.
pub type CheckpointMeta = BTreeMap<String, String>;

pub fn save(model: &Model<f32>, vocab: &MoveVocabulary, meta: &CheckpointMeta) -> Vec<u8> {
    let mut header = model.config.to_string();
    header.push_str(&format!(
        "option.embedding_dim={}\noption.one_hot={}\noption.hidden_divisor={}\noption.vocab_size={}\n",
        model.options.embedding_dim, model.options.one_hot, model.options.hidden_divisor, model.vocab_size
    ));
    for (k, v) in meta {
        let v = v.replace('\n', " ");
        header.push_str(&format!("meta.{k}={v}\n"));
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&vocab.hash());
    let names = model.params.names();
    out.extend_from_slice(&(names.len() as u32).to_le_bytes());
    for ((name, shape), data) in names.iter().zip(model.params.shapes()).zip(model.params.slices()) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(shape.len() as u8);
        for d in &shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() < n {
            return Err(CheckpointError::Malformed("truncated".into()));
        }
        let (a, b) = self.bytes.split_at(n);
        self.bytes = b;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses a checkpoint without checking the vocabulary; returns the model,
/// its metadata and the stored vocabulary hash.
pub fn load_any(bytes: &[u8]) -> Result<(Model<f32>, CheckpointMeta, [u8; 32]), CheckpointError> {
    if bytes.len() < MAGIC.len() + 32 {
        return Err(CheckpointError::Malformed("too short".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(CheckpointError::ChecksumMismatch);
    }
    let mut r = Reader { bytes: body };
    if r.take(8)? != MAGIC {
        return Err(CheckpointError::Malformed("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Malformed(format!("unsupported version {version}")));
    }
    let header_len = r.u32()? as usize;
    let header = std::str::from_utf8(r.take(header_len)?).map_err(|_| CheckpointError::Malformed("header".into()))?;
    let vocab_hash: [u8; 32] = r.take(32)?.try_into().unwrap();

    let mut config_text = String::new();
    let mut options = ModelOptions::default();
    let mut vocab_size = None;
    let mut meta = CheckpointMeta::new();
    let bad = |what: &str| CheckpointError::Malformed(format!("header field {what}"));
    for line in header.lines() {
        let (k, v) = line.split_once('=').ok_or_else(|| bad(line))?;
        if let Some(key) = k.strip_prefix("meta.") {
            meta.insert(key.to_string(), v.to_string());
        } else if let Some(key) = k.strip_prefix("option.") {
            match key {
                "embedding_dim" => options.embedding_dim = v.parse().map_err(|_| bad(k))?,
                "one_hot" => options.one_hot = v.parse().map_err(|_| bad(k))?,
                "hidden_divisor" => options.hidden_divisor = v.parse().map_err(|_| bad(k))?,
                "vocab_size" => vocab_size = Some(v.parse::<usize>().map_err(|_| bad(k))?),
                _ => return Err(bad(k)),
            }
        } else {
            config_text.push_str(line);
            config_text.push('\n');
        }
    }
    let mut config = StructureConfig::default();
    for line in config_text.lines() {
        let (k, v) = line.split_once('=').unwrap();
        config.set_field(k, v).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    }
    let vocab_size = vocab_size.ok_or_else(|| bad("vocab_size"))?;

    let mut params = Params::<f32>::zeros(&config, &options, vocab_size);
    let expected: Vec<(String, Vec<usize>)> = params.names().into_iter().zip(params.shapes()).collect();
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(CheckpointError::Malformed(format!("expected {} tensors, found {count}", expected.len())));
    }
    for ((name, shape), dst) in expected.iter().zip(params.slices_mut()) {
        let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let got_name = std::str::from_utf8(r.take(name_len)?).map_err(|_| bad("tensor name"))?;
        let rank = r.take(1)?[0] as usize;
        let got_shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if got_name != name || &got_shape != shape {
            return Err(CheckpointError::Malformed(format!("tensor {got_name} {got_shape:?}, expected {name} {shape:?}")));
        }
        let data = r.take(dst.len() * 4)?;
        for (d, chunk) in dst.iter_mut().zip(data.chunks_exact(4)) {
            *d = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if !r.bytes.is_empty() {
        return Err(CheckpointError::Malformed("trailing bytes".into()));
    }
    Ok((Model { config, options, vocab_size, params }, meta, vocab_hash))
}

/// Loads a checkpoint and checks it was written against `vocab`.
pub fn load(bytes: &[u8], vocab: &MoveVocabulary) -> Result<(Model<f32>, CheckpointMeta), CheckpointError> {
    let (model, meta, hash) = load_any(bytes)?;
    if hash != vocab.hash() || model.vocab_size != vocab.len() {
        return Err(CheckpointError::VocabularyMismatch);
    }
    Ok((model, meta))
}
