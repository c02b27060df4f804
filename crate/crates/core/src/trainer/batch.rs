use rand::Rng;

use crate::dataio::{InteractionDataset, PopularityStats};
use crate::error::{Error, Result};
use crate::losses::{BprRow, ContrastiveRow};

pub const MAX_NEGATIVE_ATTEMPTS: usize = 100;

/// Sorted per-user training items plus the pair list batches are drawn from.
#[derive(Debug, Clone)]
pub struct TrainIndex {
    pairs: Vec<(u32, u32)>,
    items_by_user: Vec<Vec<u32>>,
    num_items: usize,
}

impl TrainIndex {
    pub fn new(train: &InteractionDataset) -> Self {
        Self {
            pairs: train.pairs().to_vec(),
            items_by_user: train.items_by_user(),
            num_items: train.num_items(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    #[inline]
    pub fn interacted(&self, user: usize, item: u32) -> bool {
        self.items_by_user[user].binary_search(&item).is_ok()
    }

    pub fn items_of(&self, user: usize) -> &[u32] {
        &self.items_by_user[user]
    }
}

/// Which in-batch negative sets to materialize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchOptions {
    pub interest: bool,
    pub conformity: bool,
    /// Mask in-batch negatives the row's user interacted with in train.
    pub false_negative_filter: bool,
}

/// `B` rows of (user, positive, BPR negative) with per-row in-batch negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub users: Vec<usize>,
    pub pos_items: Vec<usize>,
    /// `None` when the user has interacted with every item.
    pub bpr_neg_items: Vec<Option<usize>>,
    pub interest_negs: Vec<Vec<usize>>,
    pub conformity_negs: Vec<Vec<usize>>,
    pub pos_pop: Vec<f64>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn bpr_rows(&self) -> Vec<BprRow> {
        (0..self.len())
            .map(|r| BprRow {
                user: self.users[r],
                pos_item: self.pos_items[r],
                neg_item: self.bpr_neg_items[r],
            })
            .collect()
    }

    pub fn interest_rows(&self) -> Vec<ContrastiveRow> {
        self.contrastive_rows(&self.interest_negs)
    }

    pub fn conformity_rows(&self) -> Vec<ContrastiveRow> {
        self.contrastive_rows(&self.conformity_negs)
    }

    fn contrastive_rows(&self, negs: &[Vec<usize>]) -> Vec<ContrastiveRow> {
        (0..self.len())
            .map(|r| ContrastiveRow {
                user: self.users[r],
                pos_item: self.pos_items[r],
                neg_items: negs.get(r).cloned().unwrap_or_default(),
                i_pop: self.pos_pop[r],
            })
            .collect()
    }
}

/// Uniform item the user has not interacted with; `None` if none exists.
pub fn sample_bpr_negative<R: Rng + ?Sized>(
    index: &TrainIndex,
    user: usize,
    rng: &mut R,
) -> Result<Option<usize>> {
    if index.items_of(user).len() >= index.num_items {
        return Ok(None);
    }
    for _ in 0..MAX_NEGATIVE_ATTEMPTS {
        let item = rng.random_range(0..index.num_items as u32);
        if !index.interacted(user, item) {
            return Ok(Some(item as usize));
        }
    }
    Err(Error::NegativeSampling {
        user,
        attempts: MAX_NEGATIVE_ATTEMPTS,
    })
}

/// Draws `batch_size` training pairs uniformly with replacement and builds
/// the BPR negatives and in-batch contrastive negatives.
///
/// Row `r`'s interest negatives are the positives of every row with a
/// different user; conformity negatives are the subset whose popularity does
/// not exceed row `r`'s positive. The random stream consumed is independent of
/// `opts`.
pub fn sample_batch<R: Rng + ?Sized>(
    index: &TrainIndex,
    stats: &PopularityStats,
    batch_size: usize,
    rng: &mut R,
    opts: BatchOptions,
) -> Result<TrainingBatch> {
    if batch_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "batch size must be >= 2, got {batch_size}"
        )));
    }
    if index.is_empty() {
        return Err(Error::EmptyDataset("no training pairs to sample".into()));
    }
    let mut users = Vec::with_capacity(batch_size);
    let mut pos_items = Vec::with_capacity(batch_size);
    let mut bpr_neg_items = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let (u, i) = index.pairs[rng.random_range(0..index.pairs.len())];
        users.push(u as usize);
        pos_items.push(i as usize);
        bpr_neg_items.push(sample_bpr_negative(index, u as usize, rng)?);
    }
    let pos_pop: Vec<f64> = pos_items.iter().map(|&i| stats.i_pop[i]).collect();

    let mut interest_negs = Vec::new();
    let mut conformity_negs = Vec::new();
    if opts.interest || opts.conformity {
        for r in 0..batch_size {
            let user = users[r];
            let mut int_row = Vec::new();
            let mut conf_row = Vec::new();
            for c in 0..batch_size {
                if users[c] == user {
                    continue;
                }
                let item = pos_items[c];
                if opts.false_negative_filter && index.interacted(user, item as u32) {
                    continue;
                }
                if opts.interest {
                    int_row.push(item);
                }
                if opts.conformity && pos_pop[c] <= pos_pop[r] {
                    conf_row.push(item);
                }
            }
            interest_negs.push(int_row);
            conformity_negs.push(conf_row);
        }
    }
    Ok(TrainingBatch {
        users,
        pos_items,
        bpr_neg_items,
        interest_negs,
        conformity_negs,
        pos_pop,
    })
}
