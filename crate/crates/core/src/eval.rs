//! Full-ranking top-K evaluation: HR@K (recall form) and NDCG@K, overall, per
//! item-popularity quintile, and across popularity-intervened test sets.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::dataio::{build_intervened_test, InteractionDataset, PopularityStats};
use crate::error::{Error, Result};
use crate::model::{dot, DisentangledEmbeddings};

pub const DEFAULT_K: usize = 20;
pub const NUM_POP_GROUPS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupMetrics {
    /// `q1` (least popular) .. `q5` (most popular).
    pub label: String,
    pub hr: f64,
    pub ndcg: f64,
    /// Items of the catalog in this group.
    pub items: usize,
    /// Test pairs whose item falls in this group.
    pub pairs: usize,
    /// User-normalized pair mass: each evaluated user spreads a total weight
    /// of 1 evenly over its test pairs. Weighting group metrics by this mass
    /// recovers the overall metric exactly.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub k: usize,
    /// Mean over evaluated users, in [0, 1].
    pub hr: f64,
    pub ndcg: f64,
    pub per_group: Vec<GroupMetrics>,
    pub num_users_evaluated: usize,
    pub num_users_skipped: usize,
    pub config_hash: String,
    pub seed: u64,
}

/// Item scores for one user under the composed score.
pub fn score_items(emb: &DisentangledEmbeddings, user: usize) -> Vec<f64> {
    let ui = emb.user_int.row(user);
    let uc = emb.user_conf.row(user);
    emb.item_int
        .iter_rows()
        .zip(emb.item_conf.iter_rows())
        .map(|(ii, ic)| dot(ui, ii) + dot(uc, ic))
        .collect()
}

#[inline]
fn rank_order(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Top `k` items by score, highest first; ties go to the smaller item id.
/// `exclude` must be sorted ascending.
pub fn top_k_from_scores(scores: &[f64], k: usize, exclude: &[u32]) -> Vec<u32> {
    let mut cand: Vec<(f64, u32)> = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| exclude.binary_search(&(i as u32)).is_err())
        // +0.0 folds -0.0 into 0.0 so signed zeros tie
        .map(|(i, &s)| (s + 0.0, i as u32))
        .collect();
    if k == 0 || cand.is_empty() {
        return Vec::new();
    }
    if cand.len() > k {
        cand.select_nth_unstable_by(k - 1, rank_order);
        cand.truncate(k);
    }
    cand.sort_unstable_by(rank_order);
    cand.into_iter().map(|(_, i)| i).collect()
}

/// Ranks the whole catalog for `user`, skipping `exclude` (sorted ascending).
pub fn rank_topk(emb: &DisentangledEmbeddings, user: usize, k: usize, exclude: &[u32]) -> Vec<u32> {
    top_k_from_scores(&score_items(emb, user), k, exclude)
}

/// `|topk ∩ test| / min(k, |test|)`.
pub fn hr_at_k(topk: &[u32], test: &[u32], k: usize) -> f64 {
    let denom = k.min(test.len());
    if denom == 0 {
        return 0.0;
    }
    let hits = topk.iter().take(k).filter(|i| test.contains(i)).count();
    hits as f64 / denom as f64
}

#[inline]
fn discount(pos: usize) -> f64 {
    // pos is 1-based
    1.0 / ((pos + 1) as f64).log2()
}

fn ideal_dcg(n: usize) -> f64 {
    (1..=n).map(discount).sum()
}

/// Binary-relevance NDCG with the ideal ranking of `min(k, |test|)` hits.
pub fn ndcg_at_k(topk: &[u32], test: &[u32], k: usize) -> f64 {
    let idcg = ideal_dcg(k.min(test.len()));
    if idcg == 0.0 {
        return 0.0;
    }
    let dcg: f64 = topk
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| test.contains(i))
        .map(|(p, _)| discount(p + 1))
        .sum();
    dcg / idcg
}

/// Item -> quintile index by ascending train count (ties by item id).
pub fn popularity_groups(stats: &PopularityStats) -> Vec<usize> {
    let n = stats.num_items();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (stats.counts[i], i));
    let mut group = vec![0; n];
    for (rank, &item) in order.iter().enumerate() {
        group[item] = rank * NUM_POP_GROUPS / n.max(1);
    }
    group
}

#[derive(Default, Clone, Copy)]
struct GroupAcc {
    hr: f64,
    ndcg: f64,
    weight: f64,
    pairs: usize,
}

struct UserResult {
    hr: f64,
    ndcg: f64,
    groups: [GroupAcc; NUM_POP_GROUPS],
}

fn evaluate_user(
    emb: &DisentangledEmbeddings,
    user: usize,
    test_items: &[u32],
    exclude: &[u32],
    k: usize,
    group_of: &[usize],
) -> UserResult {
    let topk = rank_topk(emb, user, k, exclude);
    let n_test = test_items.len();
    let m = k.min(n_test) as f64;
    let idcg = ideal_dcg(k.min(n_test));
    let mut groups = [GroupAcc::default(); NUM_POP_GROUPS];
    let mut hits = 0usize;
    let mut dcg = 0.0;
    let mut hit_pos = vec![None; n_test];
    for (p, item) in topk.iter().enumerate() {
        if let Ok(t) = test_items.binary_search(item) {
            hits += 1;
            dcg += discount(p + 1);
            hit_pos[t] = Some(p + 1);
        }
    }
    let w = 1.0 / n_test as f64;
    for (t, &item) in test_items.iter().enumerate() {
        let acc = &mut groups[group_of[item as usize]];
        acc.weight += w;
        acc.pairs += 1;
        if let Some(p) = hit_pos[t] {
            acc.hr += 1.0 / m;
            acc.ndcg += discount(p) / idcg;
        }
    }
    UserResult {
        hr: hits as f64 / m,
        ndcg: dcg / idcg,
        groups,
    }
}

/// Mean HR@K / NDCG@K over test users with full-catalog ranking, excluding
/// each user's training items. Test users outside the embedding id space are
/// skipped and counted.
pub fn evaluate(
    emb: &DisentangledEmbeddings,
    train: &InteractionDataset,
    test: &InteractionDataset,
    stats: &PopularityStats,
    k: usize,
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset("test set is empty".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    if stats.num_items() != emb.num_items() || test.num_items() > emb.num_items() {
        return Err(Error::DimensionMismatch {
            expected: emb.num_items(),
            got: stats.num_items().max(test.num_items()),
        });
    }
    let test_by_user = test.items_by_user();
    let train_by_user = train.items_by_user();
    let group_of = popularity_groups(stats);
    let mut skipped = 0;
    let users: Vec<usize> = test_by_user
        .iter()
        .enumerate()
        .filter(|(_, items)| !items.is_empty())
        .map(|(u, _)| u)
        .filter(|&u| {
            let known = u < emb.num_users();
            skipped += usize::from(!known);
            known
        })
        .collect();
    if skipped > 0 {
        log::warn!("skipped {skipped} test users outside the embedding id space");
    }
    let empty: Vec<u32> = Vec::new();
    let results: Vec<UserResult> = users
        .par_iter()
        .map(|&u| {
            let exclude = train_by_user.get(u).unwrap_or(&empty);
            evaluate_user(emb, u, &test_by_user[u], exclude, k, &group_of)
        })
        .collect();

    let n = results.len();
    let mut hr = 0.0;
    let mut ndcg = 0.0;
    let mut groups = [GroupAcc::default(); NUM_POP_GROUPS];
    for r in &results {
        hr += r.hr;
        ndcg += r.ndcg;
        for (acc, g) in groups.iter_mut().zip(&r.groups) {
            acc.hr += g.hr;
            acc.ndcg += g.ndcg;
            acc.weight += g.weight;
            acc.pairs += g.pairs;
        }
    }
    let mut items_per_group = [0usize; NUM_POP_GROUPS];
    for &g in &group_of {
        items_per_group[g] += 1;
    }
    let per_group = groups
        .iter()
        .enumerate()
        .map(|(g, acc)| {
            let norm = |x: f64| {
                if acc.weight > 0.0 {
                    x / acc.weight
                } else {
                    0.0
                }
            };
            GroupMetrics {
                label: format!("q{}", g + 1),
                hr: norm(acc.hr),
                ndcg: norm(acc.ndcg),
                items: items_per_group[g],
                pairs: acc.pairs,
                weight: acc.weight,
            }
        })
        .collect();
    let denom = n.max(1) as f64;
    Ok(MetricsReport {
        k,
        hr: hr / denom,
        ndcg: ndcg / denom,
        per_group,
        num_users_evaluated: n,
        num_users_skipped: skipped,
        config_hash: String::new(),
        seed: 0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OodEntry {
    pub proportion: f64,
    pub seed: u64,
    pub achieved_proportion: f64,
    pub test_pairs: usize,
    pub report: MetricsReport,
    /// `(HR(base) - HR(p)) / HR(base)`; NaN when the base HR is 0.
    pub hr_degradation: f64,
    pub ndcg_degradation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OodSweep {
    pub base: MetricsReport,
    pub base_popular_share: f64,
    pub entries: Vec<OodEntry>,
}

fn relative_drop(base: f64, value: f64) -> f64 {
    if base == 0.0 {
        f64::NAN
    } else {
        (base - value) / base
    }
}

/// Re-tests fixed embeddings on intervened test sets, one per proportion and
/// seed.
pub fn ood_sweep(
    emb: &DisentangledEmbeddings,
    train: &InteractionDataset,
    test: &InteractionDataset,
    stats: &PopularityStats,
    proportions: &[f64],
    seeds: &[u64],
    k: usize,
) -> Result<OodSweep> {
    let base = evaluate(emb, train, test, stats, k)?;
    let mut entries = Vec::with_capacity(proportions.len() * seeds.len());
    for &p in proportions {
        for &seed in seeds {
            let iv = build_intervened_test(test, stats, p, seed)?;
            let report = evaluate(emb, train, &iv.test, stats, k)?;
            entries.push(OodEntry {
                proportion: p,
                seed,
                achieved_proportion: iv.achieved_proportion,
                test_pairs: iv.test.len(),
                hr_degradation: relative_drop(base.hr, report.hr),
                ndcg_degradation: relative_drop(base.ndcg, report.ndcg),
                report,
            });
        }
    }
    Ok(OodSweep {
        base_popular_share: stats.popular_share(test.pairs()),
        base,
        entries,
    })
}

impl MetricsReport {
    /// Human-readable report; metric values are scaled by 100.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "k={}", self.k);
        let _ = writeln!(s, "hr@{}={:.4}", self.k, 100.0 * self.hr);
        let _ = writeln!(s, "ndcg@{}={:.4}", self.k, 100.0 * self.ndcg);
        let _ = writeln!(s, "users_evaluated={}", self.num_users_evaluated);
        let _ = writeln!(s, "users_skipped={}", self.num_users_skipped);
        let _ = writeln!(s, "config_hash={}", self.config_hash);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "scale=x100");
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "group\thr@{k}\tndcg@{k}\titems\tpairs\tweight",
            k = self.k
        );
        for g in &self.per_group {
            let _ = writeln!(
                s,
                "{}\t{:.4}\t{:.4}\t{}\t{}\t{:.4}",
                g.label,
                100.0 * g.hr,
                100.0 * g.ndcg,
                g.items,
                g.pairs,
                g.weight
            );
        }
        s
    }

    /// One `name\tgroup\tvalue` line per metric, unscaled.
    pub fn to_flat(&self) -> String {
        let mut s = String::new();
        let k = self.k;
        let _ = writeln!(s, "hr@{k}\tall\t{}", self.hr);
        let _ = writeln!(s, "ndcg@{k}\tall\t{}", self.ndcg);
        let _ = writeln!(s, "users_evaluated\tall\t{}", self.num_users_evaluated);
        for g in &self.per_group {
            let _ = writeln!(s, "hr@{k}\t{}\t{}", g.label, g.hr);
            let _ = writeln!(s, "ndcg@{k}\t{}\t{}", g.label, g.ndcg);
            let _ = writeln!(s, "pairs\t{}\t{}", g.label, g.pairs);
        }
        s
    }

    pub fn write_files(&self, text_path: &Path, flat_path: &Path) -> Result<()> {
        std::fs::write(text_path, self.to_text()).map_err(|e| Error::io(text_path, e))?;
        std::fs::write(flat_path, self.to_flat()).map_err(|e| Error::io(flat_path, e))
    }
}

impl OodSweep {
    /// Tab-separated summary with a relative-degradation column.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let k = self.base.k;
        let _ = writeln!(
            s,
            "proportion\tseed\tachieved\tpairs\thr@{k}\tndcg@{k}\thr_degradation\tndcg_degradation"
        );
        let _ = writeln!(
            s,
            "base\t-\t{:.4}\t-\t{:.4}\t{:.4}\t0\t0",
            self.base_popular_share,
            100.0 * self.base.hr,
            100.0 * self.base.ndcg
        );
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{}\t{}\t{:.4}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                e.proportion,
                e.seed,
                e.achieved_proportion,
                e.test_pairs,
                100.0 * e.report.hr,
                100.0 * e.report.ndcg,
                e.hr_degradation,
                e.ndcg_degradation
            );
        }
        s
    }
}
