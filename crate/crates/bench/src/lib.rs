//! Shared fixtures for the benchmarks.

use dccl_core::trainer::{sample_batch, BatchOptions, TrainIndex, TrainingBatch};
use dccl_core::{compute_popularity, InteractionDataset, PopularityStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random interactions with a head-heavy item distribution.
pub fn skewed_dataset(
    users: usize,
    items: usize,
    per_user: usize,
    seed: u64,
) -> InteractionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..users as u32).flat_map(|u| {
        (0..per_user)
            .map(|_| {
                let x: f64 = rng.random();
                (u, ((x * x * x) * items as f64) as u32 % items as u32)
            })
            .collect::<Vec<_>>()
    });
    InteractionDataset::from_pairs(users, items, pairs.collect::<Vec<_>>()).expect("ids in range")
}

pub struct Fixture {
    pub train: InteractionDataset,
    pub stats: PopularityStats,
    pub index: TrainIndex,
}

impl Fixture {
    pub fn new(users: usize, items: usize, per_user: usize) -> Self {
        let train = skewed_dataset(users, items, per_user, 7);
        let stats = compute_popularity(&train).expect("non-empty");
        let index = TrainIndex::new(&train);
        Self {
            train,
            stats,
            index,
        }
    }

    pub fn batch(&self, size: usize, contrastive: bool, seed: u64) -> TrainingBatch {
        let opts = BatchOptions {
            interest: contrastive,
            conformity: contrastive,
            false_negative_filter: true,
        };
        sample_batch(
            &self.index,
            &self.stats,
            size,
            &mut ChaCha8Rng::seed_from_u64(seed),
            opts,
        )
        .expect("valid batch")
    }
}
