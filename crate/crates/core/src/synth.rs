//! Synthetic interaction worlds with planted interest and conformity causes.
//!
//! Each pair interacts with probability
//! `sigmoid(a * <interest_u, content_i> + b * conformity_u * pop_i + c)`, where
//! `c` is calibrated by bisection to the target density. The OOD test set is
//! drawn after replacing every `pop_i` with the mean popularity, so its hits
//! are interest-driven.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};
use rayon::prelude::*;

use crate::dataio::{split, InteractionDataset};
use crate::error::{Error, Result};
use crate::model::{dot, DisentangledEmbeddings, EmbeddingTable};
use crate::trainer::TrainConfig;

const WORLD_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const OOD_STREAM: u64 = 3;
const SPLIT_STREAM: u64 = 0x5EED_5A17;
/// Relative density error accepted after calibration.
pub const CALIBRATION_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Latent interest dimension.
    pub dim: usize,
    pub density: f64,
    /// Power-law exponent of the item popularity draws; must exceed 1.
    pub pop_exponent: f64,
    /// `a`: weight of the interest match.
    pub interest_strength: f64,
    /// `b`: weight of the conformity term.
    pub conformity_mix: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users: 2000,
            n_items: 1000,
            dim: 16,
            density: 0.005,
            pop_exponent: 1.5,
            interest_strength: 24.0,
            conformity_mix: 7.0,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Ground truth of a generated world.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    /// Unit rows, `n_users x dim`.
    pub user_interest: EmbeddingTable,
    /// Unit rows, `n_items x dim`.
    pub item_content: EmbeddingTable,
    /// Raw power-law draws in `1..=n_items`.
    pub pop_draws: Vec<u64>,
    /// `ln(draw) / ln(max draw)`, in `[0, 1]`.
    pub item_pop: Vec<f64>,
    /// Uniform in `[0, 1]`.
    pub user_conformity: Vec<f64>,
    pub interest_strength: f64,
    pub conformity_mix: f64,
    pub offset: f64,
    pub ood_offset: f64,
}

impl SyntheticWorld {
    pub fn num_users(&self) -> usize {
        self.user_interest.rows()
    }

    pub fn num_items(&self) -> usize {
        self.item_content.rows()
    }

    fn interest_logit(&self, u: usize, i: usize) -> f64 {
        self.interest_strength * dot(self.user_interest.row(u), self.item_content.row(i))
    }

    fn conformity_logit(&self, u: usize, i: usize) -> f64 {
        self.conformity_mix * self.user_conformity[u] * self.item_pop[i]
    }

    /// Interaction probability under the observational mechanism.
    pub fn probability(&self, u: usize, i: usize) -> f64 {
        sigmoid(self.interest_logit(u, i) + self.conformity_logit(u, i) + self.offset)
    }

    /// Share of expected interactions that vanish when the conformity term is
    /// removed (offset held fixed).
    pub fn conformity_share(&self) -> f64 {
        let (full, interest): (f64, f64) = (0..self.num_users())
            .into_par_iter()
            .map(|u| {
                (0..self.num_items()).fold((0.0, 0.0), |(f, n), i| {
                    let s = self.interest_logit(u, i) + self.offset;
                    (f + sigmoid(s + self.conformity_logit(u, i)), n + sigmoid(s))
                })
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((0.0, 0.0), |(a, b), (f, n)| (a + f, b + n));
        1.0 - interest / full
    }

    /// Writes `item_truth.tsv` (item_id, true_pop) and `user_truth.tsv`
    /// (user_id, conformity) into `dir`.
    pub fn write_ground_truth(&self, dir: &Path) -> Result<()> {
        let write = |name: &str, header: &str, values: &[f64]| -> Result<()> {
            let path = dir.join(name);
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            let mut body = || -> std::io::Result<()> {
                writeln!(w, "{header}")?;
                for (id, v) in values.iter().enumerate() {
                    writeln!(w, "{id}\t{v}")?;
                }
                w.flush()
            };
            body().map_err(|e| Error::io(&path, e))
        };
        write("item_truth.tsv", "item_id\ttrue_pop", &self.item_pop)?;
        write(
            "user_truth.tsv",
            "user_id\tconformity",
            &self.user_conformity,
        )
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: InteractionDataset,
    pub test_iid: InteractionDataset,
    pub test_ood: InteractionDataset,
    pub world: SyntheticWorld,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn unit_rows(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> EmbeddingTable {
    let mut t = EmbeddingTable::zeros(rows, dim);
    for r in 0..rows {
        let row = t.row_mut(r);
        loop {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let norm = dot(row, row).sqrt();
            if norm > 1e-12 {
                row.iter_mut().for_each(|v| *v /= norm);
                break;
            }
        }
    }
    t
}

/// Offset `c` such that the mean of `sigmoid(logit + c)` over `logits` equals
/// `target`.
fn calibrate_offset(logits: &[f64], target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) || logits.is_empty() {
        return Err(Error::Calibration(format!(
            "target density {target} is not attainable"
        )));
    }
    let mean_at = |c: f64| {
        logits
            .par_chunks(4096)
            .map(|ch| ch.iter().map(|&l| sigmoid(l + c)).sum::<f64>())
            .collect::<Vec<_>>()
            .iter()
            .sum::<f64>()
            / logits.len() as f64
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    let got = mean_at(c);
    if ((got - target) / target).abs() > CALIBRATION_TOLERANCE {
        return Err(Error::Calibration(format!(
            "density {got} after calibration, target {target}"
        )));
    }
    Ok(c)
}

fn draw_pairs(
    n_items: usize,
    users: impl IndexedParallelIterator<Item = usize>,
    seed: u64,
    stream: u64,
    prob: impl Fn(usize, usize) -> f64 + Sync,
) -> Vec<(u32, u32)> {
    users
        .map(|u| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (stream << 48));
            rng.set_stream(u as u64);
            (0..n_items)
                .filter(|&i| rng.random::<f64>() < prob(u, i))
                .map(|i| (u as u32, i as u32))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Row-major `n_users x n_items` logits without the offset. Without `with_pop`
/// every item carries the mean popularity.
fn world_logits(world: &SyntheticWorld, with_pop: bool) -> Vec<f64> {
    let ni = world.num_items();
    let mean_pop = world.item_pop.iter().sum::<f64>() / ni as f64;
    (0..world.num_users())
        .into_par_iter()
        .flat_map_iter(|u| {
            (0..ni).map(move |i| {
                let pop = if with_pop {
                    world.item_pop[i]
                } else {
                    mean_pop
                };
                world.interest_logit(u, i) + world.conformity_mix * world.user_conformity[u] * pop
            })
        })
        .collect()
}

/// Samples a world and its train / IID-test / OOD-test interactions.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData> {
    if cfg.n_users == 0 || cfg.n_items == 0 || cfg.dim == 0 {
        return Err(Error::InvalidArgument(
            "synthetic world needs users, items and dim >= 1".into(),
        ));
    }
    if !(cfg.density > 0.0 && cfg.density <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "density must lie in (0, 0.5], got {}",
            cfg.density
        )));
    }
    if cfg.pop_exponent.is_nan() || cfg.pop_exponent <= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "pop_exponent must exceed 1, got {}",
            cfg.pop_exponent
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(WORLD_STREAM);
    let user_interest = unit_rows(cfg.n_users, cfg.dim, &mut rng);
    let item_content = unit_rows(cfg.n_items, cfg.dim, &mut rng);
    let zipf = Zipf::new(cfg.n_items as f64, cfg.pop_exponent)
        .map_err(|e| Error::InvalidArgument(format!("power law: {e}")))?;
    let pop_draws: Vec<u64> = (0..cfg.n_items)
        .map(|_| zipf.sample(&mut rng) as u64)
        .collect();
    let max_ln = (*pop_draws.iter().max().unwrap_or(&1) as f64).ln();
    let item_pop = pop_draws
        .iter()
        .map(|&k| {
            if max_ln > 0.0 {
                (k as f64).ln() / max_ln
            } else {
                0.0
            }
        })
        .collect();
    let user_conformity = (0..cfg.n_users).map(|_| rng.random::<f64>()).collect();
    let mut world = SyntheticWorld {
        user_interest,
        item_content,
        pop_draws,
        item_pop,
        user_conformity,
        interest_strength: cfg.interest_strength,
        conformity_mix: cfg.conformity_mix,
        offset: 0.0,
        ood_offset: 0.0,
    };

    let (nu, ni) = (cfg.n_users, cfg.n_items);
    let observed = world_logits(&world, true);
    world.offset = calibrate_offset(&observed, cfg.density)?;
    let intervened = world_logits(&world, false);
    world.ood_offset = calibrate_offset(&intervened, cfg.density * cfg.test_fraction)?;
    let offset = world.offset;
    let all = draw_pairs(
        ni,
        (0..nu).into_par_iter(),
        cfg.seed,
        TRAIN_STREAM,
        |u, i| sigmoid(observed[u * ni + i] + offset),
    );
    drop(observed);
    let full = InteractionDataset::from_pairs(nu, ni, all)?;
    if full.is_empty() {
        return Err(Error::EmptyDataset(
            "synthetic draw produced no interactions".into(),
        ));
    }
    let parts = split(&full, cfg.test_fraction, cfg.seed ^ SPLIT_STREAM)?;
    let train = parts.train;
    let test_iid = parts.test;

    let by_user = train.items_by_user();
    let ood_offset = world.ood_offset;
    let ood = draw_pairs(ni, (0..nu).into_par_iter(), cfg.seed, OOD_STREAM, |u, i| {
        if by_user[u].is_empty() || by_user[u].binary_search(&(i as u32)).is_ok() {
            0.0
        } else {
            sigmoid(intervened[u * ni + i] + ood_offset)
        }
    });
    let test_ood = train.view(ood)?;
    Ok(SyntheticData {
        train,
        test_iid,
        test_ood,
        world,
    })
}

/// Kolmogorov-Smirnov distance between the empirical distribution of `draws`
/// and the power law `P(k) ~ k^-exponent` on `1..=n`.
pub fn power_law_ks(draws: &[u64], n: usize, exponent: f64) -> f64 {
    let weights: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-exponent)).collect();
    let z: f64 = weights.iter().sum();
    let mut counts = vec![0usize; n + 1];
    for &k in draws {
        counts[(k as usize).min(n)] += 1;
    }
    let (mut cdf, mut emp, mut ks) = (0.0, 0.0, 0.0f64);
    for k in 1..=n {
        cdf += weights[k - 1] / z;
        emp += counts[k] as f64 / draws.len() as f64;
        ks = ks.max((cdf - emp).abs());
    }
    ks
}

/// Ranks starting at 1; tied values share their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disentanglement {
    pub conf_pop_corr: f64,
    pub int_pop_corr: f64,
}

/// Per-item mean of `<user_vec, item_vec>` over all users.
fn mean_item_scores(users: &EmbeddingTable, items: &EmbeddingTable) -> Vec<f64> {
    let mut centroid = vec![0.0; users.dim()];
    for row in users.iter_rows() {
        centroid.iter_mut().zip(row).for_each(|(c, v)| *c += v);
    }
    let n = users.rows().max(1) as f64;
    centroid.iter_mut().for_each(|c| *c /= n);
    items.iter_rows().map(|row| dot(&centroid, row)).collect()
}

fn check_shape(emb: &DisentangledEmbeddings, world: &SyntheticWorld) -> Result<()> {
    if emb.num_items() != world.num_items() {
        return Err(Error::DimensionMismatch {
            expected: world.num_items(),
            got: emb.num_items(),
        });
    }
    if emb.num_users() != world.num_users() {
        return Err(Error::DimensionMismatch {
            expected: world.num_users(),
            got: emb.num_users(),
        });
    }
    Ok(())
}

/// Spearman correlation of per-item mean conformity (resp. interest) scores
/// with the true popularity.
pub fn disentanglement_score(
    emb: &DisentangledEmbeddings,
    world: &SyntheticWorld,
) -> Result<Disentanglement> {
    check_shape(emb, world)?;
    Ok(Disentanglement {
        conf_pop_corr: spearman(
            &mean_item_scores(&emb.user_conf, &emb.item_conf),
            &world.item_pop,
        ),
        int_pop_corr: spearman(
            &mean_item_scores(&emb.user_int, &emb.item_int),
            &world.item_pop,
        ),
    })
}

/// The same measure for a model with one embedding per node (the concatenation
/// of both tables): both correlations are the correlation of the full score.
pub fn single_embedding_score(
    emb: &DisentangledEmbeddings,
    world: &SyntheticWorld,
) -> Result<Disentanglement> {
    check_shape(emb, world)?;
    let a = mean_item_scores(&emb.user_int, &emb.item_int);
    let b = mean_item_scores(&emb.user_conf, &emb.item_conf);
    let full: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let corr = spearman(&full, &world.item_pop);
    Ok(Disentanglement {
        conf_pop_corr: corr,
        int_pop_corr: corr,
    })
}

/// Training settings used for the synthetic benchmark worlds.
pub fn experiment_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        alpha: 2.0,
        beta: 8.0,
        seed,
        ..TrainConfig::default()
    }
}
