//! Interaction data: ingestion, binarization, k-core filtering, train/test
//! splitting, popularity statistics and popularity-intervened test sets.

mod format;
mod intervene;
mod kcore;
mod popularity;
mod raw;
mod split;

pub use format::{
    read_dataset, read_key_map, read_popularity, write_dataset, write_key_map, write_popularity,
};
pub use intervene::{build_intervened_test, IntervenedTest};
pub use kcore::k_core_filter;
pub use popularity::{compute_popularity, percentile_linear, PopularityStats};
pub use raw::{
    binarize, load_interactions, parse_interactions, InputFormat, RawInteractions, RawRecord,
};
pub use split::{split, SplitDataset};

use crate::error::{Error, Result};

/// Deduplicated binary user-item interactions over a contiguous id space.
///
/// `pairs` is kept sorted by `(user, item)` with no duplicates. Train and test
/// views produced by [`split`] share the id space (and key tables) of the
/// dataset they were split from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDataset {
    num_users: usize,
    num_items: usize,
    pairs: Vec<(u32, u32)>,
    user_keys: Vec<String>,
    item_keys: Vec<String>,
}

impl InteractionDataset {
    /// Builds a dataset whose keys are the decimal ids.
    pub fn from_pairs(
        num_users: usize,
        num_items: usize,
        pairs: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self> {
        let user_keys = (0..num_users).map(|u| u.to_string()).collect();
        let item_keys = (0..num_items).map(|i| i.to_string()).collect();
        Self::with_keys(user_keys, item_keys, pairs)
    }

    pub fn with_keys(
        user_keys: Vec<String>,
        item_keys: Vec<String>,
        pairs: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self> {
        let num_users = user_keys.len();
        let num_items = item_keys.len();
        let mut pairs: Vec<(u32, u32)> = pairs.into_iter().collect();
        for &(u, i) in &pairs {
            if u as usize >= num_users {
                return Err(Error::IndexOutOfRange {
                    what: "user id",
                    index: u as usize,
                    len: num_users,
                });
            }
            if i as usize >= num_items {
                return Err(Error::IndexOutOfRange {
                    what: "item id",
                    index: i as usize,
                    len: num_items,
                });
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(Self {
            num_users,
            num_items,
            pairs,
            user_keys,
            item_keys,
        })
    }

    /// A dataset over the same id space with a different pair set.
    pub fn view(&self, pairs: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        Self::with_keys(self.user_keys.clone(), self.item_keys.clone(), pairs)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn user_keys(&self) -> &[String] {
        &self.user_keys
    }

    pub fn item_keys(&self) -> &[String] {
        &self.item_keys
    }

    pub fn contains(&self, user: u32, item: u32) -> bool {
        self.pairs.binary_search(&(user, item)).is_ok()
    }

    /// Items of each user, ascending.
    pub fn items_by_user(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.num_users];
        for &(u, i) in &self.pairs {
            out[u as usize].push(i);
        }
        out
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_users];
        for &(u, _) in &self.pairs {
            deg[u as usize] += 1;
        }
        deg
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_items];
        for &(_, i) in &self.pairs {
            deg[i as usize] += 1;
        }
        deg
    }

    /// Fraction of the user x item matrix that is observed.
    pub fn density(&self) -> f64 {
        if self.num_users == 0 || self.num_items == 0 {
            return 0.0;
        }
        self.pairs.len() as f64 / (self.num_users as f64 * self.num_items as f64)
    }
}
