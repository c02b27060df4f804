use crate::dataio::InteractionDataset;
use crate::error::{Error, Result};

/// Percentile used to flag popular items.
pub const POPULAR_PERCENTILE: f64 = 80.0;

/// Train-side item popularity.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityStats {
    pub counts: Vec<usize>,
    /// `counts[i] / max(counts)`, in [0, 1].
    pub i_pop: Vec<f64>,
    pub popular_threshold: f64,
    /// `counts[i] > popular_threshold`.
    pub is_popular: Vec<bool>,
}

impl PopularityStats {
    /// Builds stats from per-item counts (one entry per item id).
    pub fn from_counts(counts: Vec<usize>) -> Result<Self> {
        let max = counts.iter().copied().max().unwrap_or(0);
        if max == 0 {
            return Err(Error::EmptyDataset(
                "popularity needs at least one training interaction".into(),
            ));
        }
        let i_pop = counts.iter().map(|&c| c as f64 / max as f64).collect();
        let as_real: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let popular_threshold = percentile_linear(&as_real, POPULAR_PERCENTILE);
        let is_popular = counts
            .iter()
            .map(|&c| c as f64 > popular_threshold)
            .collect();
        Ok(Self {
            counts,
            i_pop,
            popular_threshold,
            is_popular,
        })
    }

    pub fn num_items(&self) -> usize {
        self.counts.len()
    }

    /// Share of `pairs` whose item is flagged popular.
    pub fn popular_share(&self, pairs: &[(u32, u32)]) -> f64 {
        if pairs.is_empty() {
            return 0.0;
        }
        let popular = pairs
            .iter()
            .filter(|&&(_, i)| self.is_popular[i as usize])
            .count();
        popular as f64 / pairs.len() as f64
    }
}

/// Counts come from `train` only; every item of the id space participates in
/// the percentile (items without training interactions count as 0).
pub fn compute_popularity(train: &InteractionDataset) -> Result<PopularityStats> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("training set is empty".into()));
    }
    PopularityStats::from_counts(train.item_degrees())
}

/// Percentile with linear interpolation between order statistics
/// (position `q/100 * (n-1)` in the sorted sample).
pub fn percentile_linear(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
