use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{InteractionDataset, PopularityStats};
use crate::error::{Error, Result};

/// A test set whose popular-item share was pushed down to a target.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervenedTest {
    pub test: InteractionDataset,
    pub target_proportion: f64,
    pub achieved_proportion: f64,
    pub popular_kept: usize,
    pub popular_total: usize,
    pub unpopular: usize,
}

/// Largest `p <= popular` with `p / (p + unpopular) <= target`.
fn popular_budget(popular: usize, unpopular: usize, target: f64) -> usize {
    let fits = |p: usize| p == 0 || (p as f64) <= target * (p + unpopular) as f64;
    let mut p = if target >= 1.0 {
        popular
    } else {
        ((target * unpopular as f64) / (1.0 - target))
            .floor()
            .min(popular as f64) as usize
    };
    while p > 0 && !fits(p) {
        p -= 1;
    }
    while p < popular && fits(p + 1) {
        p += 1;
    }
    p
}

/// Keeps every unpopular test pair and a seeded uniform subset of the popular
/// ones so that the popular share does not exceed `target_popular_prop`.
pub fn build_intervened_test(
    test: &InteractionDataset,
    stats: &PopularityStats,
    target_popular_prop: f64,
    seed: u64,
) -> Result<IntervenedTest> {
    if !(target_popular_prop > 0.0 && target_popular_prop <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target popular proportion must lie in (0, 1], got {target_popular_prop}"
        )));
    }
    if stats.num_items() != test.num_items() {
        return Err(Error::DimensionMismatch {
            expected: test.num_items(),
            got: stats.num_items(),
        });
    }
    let (popular, unpopular): (Vec<_>, Vec<_>) = test
        .pairs()
        .iter()
        .partition(|&&(_, i)| stats.is_popular[i as usize]);
    let observed = stats.popular_share(test.pairs());
    if target_popular_prop > observed + 1e-12 {
        return Err(Error::InfeasibleProportion {
            target: target_popular_prop,
            observed,
        });
    }
    let keep = popular_budget(popular.len(), unpopular.len(), target_popular_prop);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = index::sample(&mut rng, popular.len(), keep);
    let kept = unpopular
        .iter()
        .copied()
        .chain(chosen.into_iter().map(|k| popular[k]));
    let out = test.view(kept)?;
    let achieved = if out.is_empty() {
        0.0
    } else {
        keep as f64 / out.len() as f64
    };
    log::info!(
        "intervened test: target popular share {target_popular_prop:.3}, achieved {achieved:.4} ({keep}/{} popular kept)",
        popular.len()
    );
    Ok(IntervenedTest {
        test: out,
        target_proportion: target_popular_prop,
        achieved_proportion: achieved,
        popular_kept: keep,
        popular_total: popular.len(),
        unpopular: unpopular.len(),
    })
}
