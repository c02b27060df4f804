use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::InteractionDataset;
use crate::error::{Error, Result};

/// Train/test views over one id space.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: InteractionDataset,
    pub test: InteractionDataset,
    pub seed: u64,
}

/// Per-user random holdout of `round(test_fraction * degree)` pairs.
///
/// Users that would be left without any training pair are dropped from both
/// views.
pub fn split(data: &InteractionDataset, test_fraction: f64, seed: u64) -> Result<SplitDataset> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(data.len());
    let mut test = Vec::new();
    for (user, items) in data.items_by_user().into_iter().enumerate() {
        let deg = items.len();
        if deg == 0 {
            continue;
        }
        let n_test = (test_fraction * deg as f64).round() as usize;
        if n_test >= deg {
            continue;
        }
        let mut held = vec![false; deg];
        for pos in index::sample(&mut rng, deg, n_test) {
            held[pos] = true;
        }
        for (item, is_test) in items.into_iter().zip(held) {
            if is_test {
                test.push((user as u32, item));
            } else {
                train.push((user as u32, item));
            }
        }
    }
    Ok(SplitDataset {
        train: data.view(train)?,
        test: data.view(test)?,
        seed,
    })
}
