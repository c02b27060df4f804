use crate::error::{Error, Result};
use crate::losses::SparseGrad;
use crate::model::DisentangledEmbeddings;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moment estimates mirroring the embedding tables, plus the global step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: DisentangledEmbeddings,
    pub v: DisentangledEmbeddings,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(like: &DisentangledEmbeddings) -> Self {
        Self {
            m: DisentangledEmbeddings::zeros(like.num_users(), like.num_items(), like.dim()),
            v: DisentangledEmbeddings::zeros(like.num_users(), like.num_items(), like.dim()),
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// Lazy (sparse) Adam: only rows with a nonzero gradient touch their moments
/// and parameters; bias correction uses the global step count.
pub fn adam_step(
    emb: &mut DisentangledEmbeddings,
    grads: &SparseGrad,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    for (table, row, g) in grads.iter() {
        let rows = emb.table(table).rows();
        if row >= rows {
            return Err(Error::IndexOutOfRange {
                what: table.name(),
                index: row,
                len: rows,
            });
        }
        if g.len() != emb.dim() {
            return Err(Error::DimensionMismatch {
                expected: emb.dim(),
                got: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                table: table.name(),
                row,
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for (table, row, g) in grads.iter() {
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        let m = state.m.table_mut(table).row_mut(row);
        for (mk, &gk) in m.iter_mut().zip(g) {
            *mk = b1 * *mk + (1.0 - b1) * gk;
        }
        let v = state.v.table_mut(table).row_mut(row);
        for (vk, &gk) in v.iter_mut().zip(g) {
            *vk = b2 * *vk + (1.0 - b2) * gk * gk;
        }
        let m = state.m.table(table).row(row);
        let v = state.v.table(table).row(row);
        let p = emb.table_mut(table).row_mut(row);
        for ((pk, &mk), &vk) in p.iter_mut().zip(m).zip(v) {
            *pk -= lr * (mk / bc1) / ((vk / bc2).sqrt() + eps);
        }
    }
    Ok(())
}
