//! Shared artifact metadata: every file a run writes embeds the config
//! hash, the seed, and a format version so downstream commands can
//! refuse to mix incompatible artifacts.

use serde::{Deserialize, Serialize};

pub const FILE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileMeta {
    pub kind: String,
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
pub struct MetaHeader {
    pub meta: FileMeta,
}

impl FileMeta {
    pub fn new(kind: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            kind: kind.to_string(),
            format_version: FILE_FORMAT_VERSION,
            config_hash: config_hash.to_string(),
            seed,
        }
    }

    pub fn as_header(&self) -> MetaHeader {
        MetaHeader { meta: self.clone() }
    }

    pub fn from_header(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str::<MetaHeader>(line).map(|h| h.meta)
    }
}

/// Short stable digest of any serializable config.
pub fn config_digest<T: Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_vec(value).expect("config serializes");
    let hash = Sha256::digest(&json);
    hex_prefix(&hash, 16)
}

fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut out = String::with_capacity(chars);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
        if out.len() >= chars {
            break;
        }
    }
    out.truncate(chars);
    out
}
