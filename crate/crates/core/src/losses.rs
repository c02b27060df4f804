//! BPR main loss, the popularity-weighted interest and conformity contrastive
//! losses, the combined objective, and their analytic gradients.
//!
//! Gradients are taken with respect to the embedding rows the losses read and
//! returned as a [`SparseGrad`] keyed by `(table, row)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{axpy, dot, DisentangledEmbeddings, EmbeddingTable, TableId};

/// How the popularity factor enters the contrastive losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossMode {
    /// The per-row log-softmax term is multiplied by the popularity weight.
    #[default]
    Weighted,
    /// The popularity factor stays inside the log, which makes it an additive
    /// constant with no effect on gradients.
    Literal,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Weighted => "weighted",
            LossMode::Literal => "literal",
        })
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weighted" => Ok(LossMode::Weighted),
            "literal" => Ok(LossMode::Literal),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss mode {other:?}"
            ))),
        }
    }
}

/// Sparse per-row gradients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGrad {
    rows: BTreeMap<(TableId, usize), Vec<f64>>,
}

impl SparseGrad {
    pub fn new() -> Self {
        Self::default()
    }

    /// `grad[table, row] += scale * v`.
    pub fn add(&mut self, table: TableId, row: usize, scale: f64, v: &[f64]) {
        let slot = self
            .rows
            .entry((table, row))
            .or_insert_with(|| vec![0.0; v.len()]);
        axpy(slot, scale, v);
    }

    pub fn get(&self, table: TableId, row: usize) -> Option<&[f64]> {
        self.rows.get(&(table, row)).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TableId, usize, &[f64])> {
        self.rows.iter().map(|(&(t, r), g)| (t, r, g.as_slice()))
    }

    /// `self += coef * other`.
    pub fn merge_scaled(&mut self, other: &SparseGrad, coef: f64) {
        for (&(t, r), g) in &other.rows {
            self.add(t, r, coef, g);
        }
    }

    /// Scatters the rows of one table into a dense table of the given shape.
    pub fn to_dense(&self, table: TableId, rows: usize, dim: usize) -> EmbeddingTable {
        let mut out = EmbeddingTable::zeros(rows, dim);
        for (&(t, r), g) in self.rows.range((table, 0)..=(table, usize::MAX)) {
            debug_assert_eq!(t, table);
            out.row_mut(r).copy_from_slice(g);
        }
        out
    }

    /// Sparse view of a dense table: rows that are not identically zero.
    pub fn from_dense(table: TableId, dense: &EmbeddingTable) -> Self {
        let mut out = Self::new();
        for (r, row) in dense.iter_rows().enumerate() {
            if row.iter().any(|&v| v != 0.0) {
                out.rows.insert((table, r), row.to_vec());
            }
        }
        out
    }
}

/// Loss value with gradients and row bookkeeping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grads: SparseGrad,
    /// Rows that had no negatives (they contribute a zero log-softmax term).
    pub empty_rows: usize,
    /// Rows dropped because their weight was degenerate (literal conformity
    /// mode with zero popularity).
    pub skipped_rows: usize,
}

#[inline]
fn sigmoid_neg(x: f64) -> f64 {
    // sigma(-x) without overflow
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// `-ln sigma(s_pos - s_neg)` and its partial derivatives in `s_pos`, `s_neg`.
pub fn bpr_loss(s_pos: f64, s_neg: f64) -> (f64, f64, f64) {
    let x = s_pos - s_neg;
    // softplus(-x) = max(-x, 0) + ln(1 + e^{-|x|})
    let value = (-x).max(0.0) + (-x.abs()).exp().ln_1p();
    let g = -sigmoid_neg(x);
    (value, g, -g)
}

/// One BPR triple of row indices into the four tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BprRow {
    pub user: usize,
    pub pos_item: usize,
    /// `None` when the user has interacted with the whole catalog.
    pub neg_item: Option<usize>,
}

/// Mean BPR loss over `rows` on the composed (interest + conformity) score.
pub fn bpr_batch_loss(emb: &DisentangledEmbeddings, rows: &[BprRow]) -> LossOutput {
    let mut out = LossOutput::default();
    if rows.is_empty() {
        return out;
    }
    let inv_n = 1.0 / rows.len() as f64;
    for row in rows {
        let Some(neg) = row.neg_item else {
            out.empty_rows += 1;
            continue;
        };
        let (u, p) = (row.user, row.pos_item);
        let s_pos = emb.score_pair(u, p);
        let s_neg = emb.score_pair(u, neg);
        let (value, d_pos, d_neg) = bpr_loss(s_pos, s_neg);
        out.value += value * inv_n;
        let (gp, gn) = (d_pos * inv_n, d_neg * inv_n);
        let g = &mut out.grads;
        g.add(TableId::UserInt, u, gp, emb.item_int.row(p));
        g.add(TableId::UserInt, u, gn, emb.item_int.row(neg));
        g.add(TableId::UserConf, u, gp, emb.item_conf.row(p));
        g.add(TableId::UserConf, u, gn, emb.item_conf.row(neg));
        g.add(TableId::ItemInt, p, gp, emb.user_int.row(u));
        g.add(TableId::ItemInt, neg, gn, emb.user_int.row(u));
        g.add(TableId::ItemConf, p, gp, emb.user_conf.row(u));
        g.add(TableId::ItemConf, neg, gn, emb.user_conf.row(u));
    }
    out
}

/// One contrastive row: a user, its positive item, the in-batch negative
/// items (row indices into the item table), and the positive's popularity.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveRow {
    pub user: usize,
    pub pos_item: usize,
    pub neg_items: Vec<usize>,
    pub i_pop: f64,
}

/// `exp(-p)`: large for long-tail positives.
#[inline]
pub fn interest_weight(i_pop: f64) -> f64 {
    (-i_pop).exp()
}

/// `1 - exp(-p)`: large for popular positives.
#[inline]
pub fn conformity_weight(i_pop: f64) -> f64 {
    -(-i_pop).exp_m1()
}

/// Candidates whose popularity does not exceed the positive's, in input order.
pub fn filter_conformity_negatives(pos_pop: f64, candidates: &[(usize, f64)]) -> Vec<usize> {
    candidates
        .iter()
        .filter(|&&(_, pop)| pop <= pos_pop)
        .map(|&(idx, _)| idx)
        .collect()
}

/// Per-row InfoNCE term `t = logsumexp([s+, s-...]) - s+` and its derivative
/// coefficients: `dt/ds+ = q0 - 1`, `dt/ds-_j = q_j`.
fn infonce_term(user: &[f64], pos: &[f64], negs: &[&[f64]]) -> (f64, f64, Vec<f64>) {
    if negs.is_empty() {
        return (0.0, 0.0, Vec::new());
    }
    let s_pos = dot(user, pos);
    let s_neg: Vec<f64> = negs.iter().map(|n| dot(user, n)).collect();
    let max = s_neg.iter().copied().fold(s_pos, f64::max);
    let e_pos = (s_pos - max).exp();
    let e_neg: Vec<f64> = s_neg.iter().map(|s| (s - max).exp()).collect();
    let z = e_pos + e_neg.iter().sum::<f64>();
    let t = max + z.ln() - s_pos;
    let q: Vec<f64> = e_neg.iter().map(|e| e / z).collect();
    (t.max(0.0), e_pos / z - 1.0, q)
}

#[derive(Debug, Clone, Copy)]
enum RowWeight {
    /// Multiply the term (and its gradient).
    Scale(f64),
    /// Add a parameter-free constant to the term.
    Offset(f64),
    Skip,
}

struct RowResult {
    value: f64,
    empty: bool,
    skipped: bool,
    // gradient scale already folded in
    coef_pos: f64,
    coef_neg: Vec<f64>,
    scale: f64,
}

fn contrastive_loss(
    users: &EmbeddingTable,
    items: &EmbeddingTable,
    rows: &[ContrastiveRow],
    user_table: TableId,
    item_table: TableId,
    weight: impl Fn(f64) -> RowWeight + Sync,
) -> Result<LossOutput> {
    let mut out = LossOutput::default();
    if rows.is_empty() {
        return Ok(out);
    }
    for row in rows {
        if row.user >= users.rows() {
            return Err(Error::IndexOutOfRange {
                what: "contrastive user row",
                index: row.user,
                len: users.rows(),
            });
        }
        if let Some(&bad) = std::iter::once(&row.pos_item)
            .chain(&row.neg_items)
            .find(|&&i| i >= items.rows())
        {
            return Err(Error::IndexOutOfRange {
                what: "contrastive item row",
                index: bad,
                len: items.rows(),
            });
        }
    }
    let inv_n = 1.0 / rows.len() as f64;
    let results: Vec<RowResult> = rows
        .par_iter()
        .map(|row| {
            let w = weight(row.i_pop);
            let empty = row.neg_items.is_empty();
            if let RowWeight::Skip = w {
                return RowResult {
                    value: 0.0,
                    empty,
                    skipped: true,
                    coef_pos: 0.0,
                    coef_neg: Vec::new(),
                    scale: 0.0,
                };
            }
            let negs: Vec<&[f64]> = row.neg_items.iter().map(|&i| items.row(i)).collect();
            let (t, coef_pos, coef_neg) =
                infonce_term(users.row(row.user), items.row(row.pos_item), &negs);
            let (value, factor) = match w {
                RowWeight::Scale(s) => (s * t, s),
                RowWeight::Offset(c) => (c + t, 1.0),
                RowWeight::Skip => unreachable!(),
            };
            RowResult {
                value,
                empty,
                skipped: false,
                coef_pos,
                coef_neg,
                scale: factor * inv_n,
            }
        })
        .collect();

    for (row, res) in rows.iter().zip(&results) {
        out.empty_rows += usize::from(res.empty);
        out.skipped_rows += usize::from(res.skipped);
        out.value += res.value * inv_n;
        if res.skipped || res.empty || res.scale == 0.0 {
            continue;
        }
        let u = users.row(row.user);
        let g = &mut out.grads;
        // dt/du = (q0 - 1) p + sum_j q_j n_j
        g.add(
            user_table,
            row.user,
            res.scale * res.coef_pos,
            items.row(row.pos_item),
        );
        for (&n, &q) in row.neg_items.iter().zip(&res.coef_neg) {
            g.add(user_table, row.user, res.scale * q, items.row(n));
        }
        g.add(item_table, row.pos_item, res.scale * res.coef_pos, u);
        for (&n, &q) in row.neg_items.iter().zip(&res.coef_neg) {
            g.add(item_table, n, res.scale * q, u);
        }
    }
    Ok(out)
}

/// Plain in-batch InfoNCE, mean over rows, with no popularity factor.
pub fn infonce_loss(
    users: &EmbeddingTable,
    items: &EmbeddingTable,
    rows: &[ContrastiveRow],
    user_table: TableId,
    item_table: TableId,
) -> Result<LossOutput> {
    contrastive_loss(users, items, rows, user_table, item_table, |_| {
        RowWeight::Scale(1.0)
    })
}

/// Interest contrastive loss over interest tables (`users`, `items`).
///
/// Weighted mode scales each row's term by `exp(-i_pop)`; literal mode adds
/// `i_pop` (i.e. `-ln exp(-i_pop)`) to it.
pub fn interest_contrastive_loss(
    users: &EmbeddingTable,
    items: &EmbeddingTable,
    rows: &[ContrastiveRow],
    mode: LossMode,
) -> Result<LossOutput> {
    contrastive_loss(
        users,
        items,
        rows,
        TableId::UserInt,
        TableId::ItemInt,
        |p| match mode {
            LossMode::Weighted => RowWeight::Scale(interest_weight(p)),
            LossMode::Literal => RowWeight::Offset(p),
        },
    )
}

/// Conformity contrastive loss over conformity tables. Negatives are expected
/// to be popularity-filtered already (see [`filter_conformity_negatives`]).
///
/// Weighted mode scales by `1 - exp(-i_pop)`; literal mode adds
/// `-ln(1 - exp(-i_pop))` and skips rows with `i_pop == 0`.
pub fn conformity_contrastive_loss(
    users: &EmbeddingTable,
    items: &EmbeddingTable,
    rows: &[ContrastiveRow],
    mode: LossMode,
) -> Result<LossOutput> {
    contrastive_loss(
        users,
        items,
        rows,
        TableId::UserConf,
        TableId::ItemConf,
        |p| match mode {
            LossMode::Weighted => RowWeight::Scale(conformity_weight(p)),
            LossMode::Literal if p > 0.0 => RowWeight::Offset(-conformity_weight(p).ln()),
            LossMode::Literal => RowWeight::Skip,
        },
    )
}

/// `main + alpha * int + beta * conf`. Terms with a zero coefficient are left
/// out entirely, so `alpha = beta = 0` reproduces `main` exactly.
pub fn total_loss(
    main: &LossOutput,
    int_loss: &LossOutput,
    conf_loss: &LossOutput,
    alpha: f64,
    beta: f64,
) -> LossOutput {
    let mut out = main.clone();
    for (part, coef) in [(int_loss, alpha), (conf_loss, beta)] {
        if coef == 0.0 {
            continue;
        }
        out.value += coef * part.value;
        out.grads.merge_scaled(&part.grads, coef);
        out.empty_rows += part.empty_rows;
        out.skipped_rows += part.skipped_rows;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn table(rows: &[Vec<f64>]) -> EmbeddingTable {
        EmbeddingTable::from_rows(rows[0].len(), rows).unwrap()
    }

    /// user 0 = [0,0], items: pos [1,0], neg [0,1] -> both scores 0
    fn equal_score_setup() -> (EmbeddingTable, EmbeddingTable) {
        (
            table(&[vec![0.0, 0.0]]),
            table(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
        )
    }

    fn row(i_pop: f64, negs: Vec<usize>) -> ContrastiveRow {
        ContrastiveRow {
            user: 0,
            pos_item: 0,
            neg_items: negs,
            i_pop,
        }
    }

    #[test]
    fn bpr_values() {
        let (v, gp, gn) = bpr_loss(0.3, 0.3);
        assert!((v - LN2).abs() < 1e-15);
        assert!((gp + 0.5).abs() < 1e-15 && (gn - 0.5).abs() < 1e-15);
        let (v, _, _) = bpr_loss(1.0, 0.0);
        assert!((v - 0.313_261_687_518_222_8).abs() < 1e-12);
        let (v, gp, _) = bpr_loss(50.0, 0.0);
        assert!((0.0..1e-20).contains(&v));
        assert!(gp.is_finite());
        let (v, gp, _) = bpr_loss(-800.0, 0.0);
        assert!((v - 800.0).abs() < 1e-9);
        assert!((gp + 1.0).abs() < 1e-15);
    }

    #[test]
    fn interest_equal_scores() {
        let (u, i) = equal_score_setup();
        let out =
            interest_contrastive_loss(&u, &i, &[row(0.0, vec![1])], LossMode::Weighted).unwrap();
        assert!((out.value - LN2).abs() < 1e-15);
        let out =
            interest_contrastive_loss(&u, &i, &[row(1.0, vec![1])], LossMode::Weighted).unwrap();
        assert!((out.value - (-1.0f64).exp() * LN2).abs() < 1e-15);
        assert!((out.value - 0.254_994_6).abs() < 1e-6);
    }

    #[test]
    fn zero_negatives_contribute_nothing() {
        let (u, i) = equal_score_setup();
        let out =
            interest_contrastive_loss(&u, &i, &[row(0.4, vec![])], LossMode::Weighted).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grads.is_empty());
        assert_eq!(out.empty_rows, 1);
        let out =
            conformity_contrastive_loss(&u, &i, &[row(0.4, vec![])], LossMode::Weighted).unwrap();
        assert_eq!(out.value, 0.0);
        assert_eq!(out.empty_rows, 1);
    }

    #[test]
    fn conformity_weighting() {
        let (u, i) = equal_score_setup();
        let out =
            conformity_contrastive_loss(&u, &i, &[row(0.0, vec![1])], LossMode::Weighted).unwrap();
        assert_eq!(out.value, 0.0);
        let out =
            conformity_contrastive_loss(&u, &i, &[row(1.0, vec![1])], LossMode::Weighted).unwrap();
        assert!((out.value - (1.0 - (-1.0f64).exp()) * LN2).abs() < 1e-15);
        assert!((out.value - 0.438_152_6).abs() < 1e-6);
    }

    #[test]
    fn literal_modes_add_constants() {
        let (u, i) = equal_score_setup();
        let out =
            interest_contrastive_loss(&u, &i, &[row(0.7, vec![1])], LossMode::Literal).unwrap();
        assert!((out.value - (0.7 + LN2)).abs() < 1e-15);
        let out =
            conformity_contrastive_loss(&u, &i, &[row(0.7, vec![1])], LossMode::Literal).unwrap();
        let c = -(1.0 - (-0.7f64).exp()).ln();
        assert!((out.value - (c + LN2)).abs() < 1e-12);
        let out =
            conformity_contrastive_loss(&u, &i, &[row(0.0, vec![1])], LossMode::Literal).unwrap();
        assert_eq!(out.skipped_rows, 1);
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn filter_rule() {
        assert_eq!(
            filter_conformity_negatives(0.3, &[(0, 0.5), (1, 0.2)]),
            vec![1]
        );
        assert_eq!(
            filter_conformity_negatives(1.0, &[(4, 0.5), (2, 1.0), (9, 0.0)]),
            vec![4, 2, 9]
        );
        assert_eq!(filter_conformity_negatives(0.4, &[(3, 0.4)]), vec![3]);
        assert!(filter_conformity_negatives(0.0, &[(3, 0.1)]).is_empty());
    }

    #[test]
    fn total_loss_arithmetic_and_reduction() {
        let mk = |v: f64| LossOutput {
            value: v,
            ..Default::default()
        };
        let t = total_loss(&mk(1.0), &mk(2.0), &mk(3.0), 0.1, 0.1);
        assert!((t.value - 1.5).abs() < 1e-15);

        let mut main = mk(0.7);
        main.grads.add(TableId::UserInt, 0, 1.0, &[0.5, -0.25]);
        let mut aux = mk(9.0);
        aux.grads.add(TableId::ItemConf, 3, 1.0, &[1.0, 1.0]);
        let t = total_loss(&main, &aux, &aux, 0.0, 0.0);
        assert_eq!(t, main);
    }

    #[test]
    fn weights_are_complementary_and_monotone() {
        let mut prev = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..=100 {
            let p = k as f64 / 100.0;
            let (wi, wc) = (interest_weight(p), conformity_weight(p));
            assert!((wi + wc - 1.0).abs() < 1e-15);
            assert!(wi < prev.0 && wc > prev.1);
            prev = (wi, wc);
        }
    }

    #[test]
    fn large_scores_do_not_overflow() {
        let u = table(&[vec![1.0]]);
        let i = table(&[vec![700.0], vec![-700.0], vec![699.0]]);
        let r = ContrastiveRow {
            user: 0,
            pos_item: 1,
            neg_items: vec![0, 2],
            i_pop: 0.0,
        };
        let out = interest_contrastive_loss(&u, &i, &[r], LossMode::Weighted).unwrap();
        assert!(out.value.is_finite());
        assert!((out.value - (1400.0 + (1.0 + (-1.0f64).exp()).ln())).abs() < 1e-9);
        for (_, _, g) in out.grads.iter() {
            assert!(g.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn out_of_range_rows_are_errors() {
        let (u, i) = equal_score_setup();
        let bad = row(0.1, vec![5]);
        assert!(interest_contrastive_loss(&u, &i, &[bad], LossMode::Weighted).is_err());
    }

    fn arb_instance() -> impl Strategy<Value = (EmbeddingTable, EmbeddingTable, ContrastiveRow)> {
        (1usize..6, 0usize..7).prop_flat_map(|(d, m)| {
            (
                proptest::collection::vec(-2.0f64..2.0, d),
                proptest::collection::vec(-2.0f64..2.0, d * (m + 1)),
                0.0f64..1.0,
            )
                .prop_map(move |(u, it, p)| {
                    let users = EmbeddingTable::from_vec(1, d, u).unwrap();
                    let items = EmbeddingTable::from_vec(m + 1, d, it).unwrap();
                    let r = ContrastiveRow {
                        user: 0,
                        pos_item: 0,
                        neg_items: (1..=m).collect(),
                        i_pop: p,
                    };
                    (users, items, r)
                })
        })
    }

    proptest! {
        #[test]
        fn infonce_term_bounds((users, items, r) in arb_instance()) {
            let out = infonce_loss(&users, &items, std::slice::from_ref(&r), TableId::UserInt, TableId::ItemInt).unwrap();
            let s_pos = dot(users.row(0), items.row(0));
            let s_max = r.neg_items.iter().map(|&n| dot(users.row(0), items.row(n)))
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out.value >= 0.0);
            if !r.neg_items.is_empty() {
                let bound = (1.0 + r.neg_items.len() as f64 * (s_max - s_pos).exp()).ln();
                prop_assert!(out.value <= bound + 1e-12);
            }
        }

        #[test]
        fn negative_order_is_irrelevant((users, items, r) in arb_instance(), mode_lit in any::<bool>()) {
            let mode = if mode_lit { LossMode::Literal } else { LossMode::Weighted };
            let mut rev = r.clone();
            rev.neg_items.reverse();
            let a = conformity_contrastive_loss(&users, &items, &[r], mode).unwrap();
            let b = conformity_contrastive_loss(&users, &items, &[rev], mode).unwrap();
            prop_assert!((a.value - b.value).abs() <= 1e-12 * (1.0 + a.value.abs()));
            for (t, row, g) in a.grads.iter() {
                let h = b.grads.get(t, row).unwrap();
                for (x, y) in g.iter().zip(h) {
                    prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
                }
            }
        }
    }
}
