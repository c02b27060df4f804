//! Disentangled embedding tables, backbone forward passes and scoring.
//!
//! Every user and item carries two vectors: an interest vector and a
//! conformity vector. A user-item pair is scored by summing the two per-cause
//! dot products.

mod checkpoint;
mod graph;
mod table;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use graph::{build_norm_adjacency, lightgcn_propagate, propagate_pair, NormAdjacency};
pub use table::{axpy, dot, EmbeddingTable};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const DEFAULT_INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TableId {
    UserInt,
    UserConf,
    ItemInt,
    ItemConf,
}

impl TableId {
    pub const ALL: [TableId; 4] = [
        TableId::UserInt,
        TableId::UserConf,
        TableId::ItemInt,
        TableId::ItemConf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableId::UserInt => "user_int",
            TableId::UserConf => "user_conf",
            TableId::ItemInt => "item_int",
            TableId::ItemConf => "item_conf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backbone {
    #[default]
    Mf,
    LightGcn,
}

impl Backbone {
    pub fn tag(self) -> u32 {
        match self {
            Backbone::Mf => 0,
            Backbone::LightGcn => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Backbone::Mf),
            1 => Some(Backbone::LightGcn),
            _ => None,
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::Mf => "mf",
            Backbone::LightGcn => "lightgcn",
        })
    }
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mf" => Ok(Backbone::Mf),
            "lightgcn" => Ok(Backbone::LightGcn),
            other => Err(Error::InvalidArgument(format!(
                "unknown backbone {other:?}"
            ))),
        }
    }
}

/// Interest and conformity tables for users and items, all of width `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisentangledEmbeddings {
    pub user_int: EmbeddingTable,
    pub user_conf: EmbeddingTable,
    pub item_int: EmbeddingTable,
    pub item_conf: EmbeddingTable,
}

impl DisentangledEmbeddings {
    pub fn zeros(num_users: usize, num_items: usize, dim: usize) -> Self {
        Self {
            user_int: EmbeddingTable::zeros(num_users, dim),
            user_conf: EmbeddingTable::zeros(num_users, dim),
            item_int: EmbeddingTable::zeros(num_items, dim),
            item_conf: EmbeddingTable::zeros(num_items, dim),
        }
    }

    /// Checks shapes agree; used when tables are assembled by hand.
    pub fn from_tables(
        user_int: EmbeddingTable,
        user_conf: EmbeddingTable,
        item_int: EmbeddingTable,
        item_conf: EmbeddingTable,
    ) -> Result<Self> {
        let dim = user_int.dim();
        for t in [&user_conf, &item_int, &item_conf] {
            if t.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.dim(),
                });
            }
        }
        if user_conf.rows() != user_int.rows() {
            return Err(Error::DimensionMismatch {
                expected: user_int.rows(),
                got: user_conf.rows(),
            });
        }
        if item_conf.rows() != item_int.rows() {
            return Err(Error::DimensionMismatch {
                expected: item_int.rows(),
                got: item_conf.rows(),
            });
        }
        Ok(Self {
            user_int,
            user_conf,
            item_int,
            item_conf,
        })
    }

    pub fn dim(&self) -> usize {
        self.user_int.dim()
    }

    pub fn num_users(&self) -> usize {
        self.user_int.rows()
    }

    pub fn num_items(&self) -> usize {
        self.item_int.rows()
    }

    pub fn table(&self, id: TableId) -> &EmbeddingTable {
        match id {
            TableId::UserInt => &self.user_int,
            TableId::UserConf => &self.user_conf,
            TableId::ItemInt => &self.item_int,
            TableId::ItemConf => &self.item_conf,
        }
    }

    pub fn table_mut(&mut self, id: TableId) -> &mut EmbeddingTable {
        match id {
            TableId::UserInt => &mut self.user_int,
            TableId::UserConf => &mut self.user_conf,
            TableId::ItemInt => &mut self.item_int,
            TableId::ItemConf => &mut self.item_conf,
        }
    }

    pub fn is_finite(&self) -> bool {
        TableId::ALL.iter().all(|&t| self.table(t).is_finite())
    }

    /// Composed score of a user-item pair.
    pub fn score_pair(&self, user: usize, item: usize) -> f64 {
        score(
            self.user_int.row(user),
            self.user_conf.row(user),
            self.item_int.row(item),
            self.item_conf.row(item),
        )
    }
}

/// I.i.d. `N(0, scale^2)` entries from a seeded stream.
pub fn init_embeddings(
    num_users: usize,
    num_items: usize,
    dim: usize,
    seed: u64,
    scale: f64,
) -> Result<DisentangledEmbeddings> {
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "embedding dimension must be >= 1".into(),
        ));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "init scale must be positive, got {scale}"
        )));
    }
    let normal = Normal::new(0.0, scale).expect("valid normal parameters");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut emb = DisentangledEmbeddings::zeros(num_users, num_items, dim);
    for id in TableId::ALL {
        for v in emb.table_mut(id).as_mut_slice() {
            *v = normal.sample(&mut rng);
        }
    }
    Ok(emb)
}

/// Row gathers of the four tables for a batch of (user, item) indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GatheredRows {
    pub user_int: EmbeddingTable,
    pub user_conf: EmbeddingTable,
    pub item_int: EmbeddingTable,
    pub item_conf: EmbeddingTable,
}

/// Matrix-factorization forward pass: plain lookups, no propagation.
pub fn mf_forward(
    emb: &DisentangledEmbeddings,
    users: &[usize],
    items: &[usize],
) -> Result<GatheredRows> {
    Ok(GatheredRows {
        user_int: emb.user_int.gather(users)?,
        user_conf: emb.user_conf.gather(users)?,
        item_int: emb.item_int.gather(items)?,
        item_conf: emb.item_conf.gather(items)?,
    })
}

/// Dot-product similarity `w . v`.
#[inline]
pub fn similarity(w: &[f64], v: &[f64]) -> f64 {
    dot(w, v)
}

/// Interest similarity plus conformity similarity.
#[inline]
pub fn score(e_int_u: &[f64], e_conf_u: &[f64], e_int_i: &[f64], e_conf_i: &[f64]) -> f64 {
    dot(e_int_u, e_int_i) + dot(e_conf_u, e_conf_i)
}
