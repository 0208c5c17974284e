//! Checkpoint file format.
//!
//! Layout: magic bytes `LMCK`, u32 LE format version, u64 LE header
//! length, a JSON header (architecture, vocabulary, run metadata), then
//! the parameter arrays as little-endian 64-bit floats in the canonical
//! order of [`ModelParams::named_params`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;

use super::arch::ArchConfig;
use super::model::{LanguageModel, ModelParams};
use super::vocab::Vocabulary;
use super::{LmError, Result};

pub const MAGIC: &[u8; 4] = b"LMCK";
pub const FORMAT_VERSION: u32 = 1;

/// Provenance stamped into every artifact a run writes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchConfig,
    vocab: Vocabulary,
    params_version: u32,
    meta: RunMeta,
}

pub fn save(model: &LanguageModel, path: &Path, meta: &RunMeta) -> Result<()> {
    let header = Header {
        arch: model.params.arch.clone(),
        vocab: model.vocab.clone(),
        params_version: model.params.version,
        meta: meta.clone(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| LmError::BadCheckpoint(format!("header encode: {e}")))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for (_, t) in model.params.named_params() {
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(LanguageModel, RunMeta)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(LmError::BadCheckpoint(format!(
            "bad magic {magic:?} in {}",
            path.display()
        )));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(LmError::BadCheckpoint(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| LmError::BadCheckpoint(format!("header decode: {e}")))?;
    header.arch.validate()?;

    // Rebuild the parameter skeleton, then overwrite every tensor from
    // the stream in canonical order.
    let mut params = ModelParams::zeroed(&header.arch, header.vocab.size())?;
    params.version = header.params_version;
    for (name, t) in params.named_params_mut() {
        let mut buf = vec![0u8; t.numel() * 8];
        r.read_exact(&mut buf).map_err(|_| {
            LmError::BadCheckpoint(format!("truncated parameter array for {name}"))
        })?;
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            let mut word = [0u8; 8];
            word.copy_from_slice(&buf[i * 8..(i + 1) * 8]);
            *v = f64::from_le_bytes(word);
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(LmError::BadCheckpoint(
            "trailing bytes after parameter arrays".into(),
        ));
    }
    params.check_finite()?;
    Ok((
        LanguageModel {
            vocab: header.vocab,
            params,
        },
        header.meta,
    ))
}

/// Convenience used by tests: save to a fresh temp file and reload.
pub fn roundtrip(model: &LanguageModel) -> Result<LanguageModel> {
    let dir = std::env::temp_dir().join(format!("ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("roundtrip.bin");
    save(model, &path, &RunMeta::default())?;
    let (loaded, _) = load(&path)?;
    std::fs::remove_file(&path).ok();
    Ok(loaded)
}

#[allow(dead_code)]
fn tensor_bytes(t: &Tensor) -> usize {
    t.numel() * 8
}
