//! Binary checkpoint format.
//!
//! All integers are little-endian `u32`; the header is 32 bytes:
//!
//! | offset | field                                  |
//! |--------|----------------------------------------|
//! | 0      | magic `b"DCCLCKPT"`                    |
//! | 8      | format version (currently 1)           |
//! | 12     | num_users                              |
//! | 16     | num_items                              |
//! | 20     | embedding dimension d                  |
//! | 24     | backbone tag (0 = mf, 1 = lightgcn)    |
//! | 28     | propagation layer count                |
//!
//! It is followed by the tables `user_int`, `user_conf`, `item_int`,
//! `item_conf`, each row-major as little-endian IEEE-754 `f32`. In-memory
//! tables are `f64`; values are rounded to `f32` on write, so a checkpoint
//! read and written again reproduces the same bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Backbone, DisentangledEmbeddings, EmbeddingTable, TableId};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"DCCLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub backbone: Backbone,
    pub layers: usize,
    pub embeddings: DisentangledEmbeddings,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let emb = &self.embeddings;
        let floats: usize = TableId::ALL
            .iter()
            .map(|&t| emb.table(t).as_slice().len())
            .sum();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * floats);
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        for v in [
            CHECKPOINT_VERSION,
            emb.num_users() as u32,
            emb.num_items() as u32,
            emb.dim() as u32,
            self.backbone.tag(),
            self.layers as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for id in TableId::ALL {
            for &v in emb.table(id).as_slice() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Checkpoint(format!(
                "{} bytes is shorter than the header",
                bytes.len()
            )));
        }
        if bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let word = |k: usize| {
            let off = 8 + 4 * k;
            u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"))
        };
        let version = word(0);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let (nu, ni, dim) = (word(1) as usize, word(2) as usize, word(3) as usize);
        let backbone = Backbone::from_tag(word(4))
            .ok_or_else(|| Error::Checkpoint(format!("unknown backbone tag {}", word(4))))?;
        let layers = word(5) as usize;
        let expected = HEADER_LEN + 4 * dim * 2 * (nu + ni);
        if bytes.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} bytes for {nu} users, {ni} items, d={dim}; got {}",
                bytes.len()
            )));
        }
        let mut cursor = HEADER_LEN;
        let mut read_table = |rows: usize| -> Result<EmbeddingTable> {
            let n = rows * dim;
            let data = bytes[cursor..cursor + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            cursor += 4 * n;
            EmbeddingTable::from_vec(rows, dim, data)
        };
        let user_int = read_table(nu)?;
        let user_conf = read_table(nu)?;
        let item_int = read_table(ni)?;
        let item_conf = read_table(ni)?;
        Ok(Self {
            backbone,
            layers,
            embeddings: DisentangledEmbeddings::from_tables(
                user_int, user_conf, item_int, item_conf,
            )?,
        })
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
