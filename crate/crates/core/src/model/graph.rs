//! Symmetric-normalized bipartite adjacency and layer-averaged linear
//! propagation over it.

use rayon::prelude::*;

use crate::dataio::InteractionDataset;
use crate::error::{Error, Result};
use crate::model::{axpy, DisentangledEmbeddings, EmbeddingTable};

/// `A[u, i] = A[i, u] = 1 / sqrt(deg(u) deg(i))` for each training pair.
///
/// Stored as two CSR halves (user rows over item columns, and the transpose),
/// which together form the symmetric `(users + items)`-node matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NormAdjacency {
    num_users: usize,
    num_items: usize,
    user_ptr: Vec<usize>,
    user_cols: Vec<u32>,
    user_vals: Vec<f64>,
    item_ptr: Vec<usize>,
    item_cols: Vec<u32>,
    item_vals: Vec<f64>,
}

/// Strict construction: every user and item must have at least one pair.
pub fn build_norm_adjacency(train: &InteractionDataset) -> Result<NormAdjacency> {
    NormAdjacency::from_dataset(train, false)
}

impl NormAdjacency {
    /// With `allow_isolated`, nodes without pairs simply get empty rows (they
    /// receive nothing from propagation). Training on a split view uses this,
    /// since a holdout can leave items without training interactions.
    pub fn from_dataset(train: &InteractionDataset, allow_isolated: bool) -> Result<Self> {
        let nu = train.num_users();
        let ni = train.num_items();
        let udeg = train.user_degrees();
        let ideg = train.item_degrees();
        if !allow_isolated {
            if let Some(u) = udeg.iter().position(|&d| d == 0) {
                return Err(Error::IsolatedNode(u));
            }
            if let Some(i) = ideg.iter().position(|&d| d == 0) {
                return Err(Error::IsolatedNode(nu + i));
            }
        }
        let weight = |u: u32, i: u32| 1.0 / ((udeg[u as usize] * ideg[i as usize]) as f64).sqrt();

        // pairs are sorted by (user, item), so the user half fills in order
        let mut user_ptr = Vec::with_capacity(nu + 1);
        user_ptr.push(0);
        let mut acc = 0;
        for &d in &udeg {
            acc += d;
            user_ptr.push(acc);
        }
        let user_cols: Vec<u32> = train.pairs().iter().map(|&(_, i)| i).collect();
        let user_vals: Vec<f64> = train.pairs().iter().map(|&(u, i)| weight(u, i)).collect();

        let mut item_ptr = Vec::with_capacity(ni + 1);
        item_ptr.push(0);
        let mut acc = 0;
        for &d in &ideg {
            acc += d;
            item_ptr.push(acc);
        }
        let mut fill = item_ptr[..ni].to_vec();
        let mut item_cols = vec![0u32; train.len()];
        let mut item_vals = vec![0.0; train.len()];
        for &(u, i) in train.pairs() {
            let slot = fill[i as usize];
            item_cols[slot] = u;
            item_vals[slot] = weight(u, i);
            fill[i as usize] += 1;
        }
        Ok(Self {
            num_users: nu,
            num_items: ni,
            user_ptr,
            user_cols,
            user_vals,
            item_ptr,
            item_cols,
            item_vals,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    /// Nonzeros of the full symmetric matrix.
    pub fn nnz(&self) -> usize {
        self.user_vals.len() + self.item_vals.len()
    }

    /// Entry `(row, col)` of the stacked matrix (users first, then items).
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let nu = self.num_users;
        if row < nu && col >= nu {
            let span = self.user_ptr[row]..self.user_ptr[row + 1];
            let target = (col - nu) as u32;
            self.user_cols[span.clone()]
                .iter()
                .position(|&c| c == target)
                .map_or(0.0, |k| self.user_vals[span.start + k])
        } else if row >= nu && col < nu {
            let r = row - nu;
            let span = self.item_ptr[r]..self.item_ptr[r + 1];
            self.item_cols[span.clone()]
                .iter()
                .position(|&c| c as usize == col)
                .map_or(0.0, |k| self.item_vals[span.start + k])
        } else {
            0.0
        }
    }

    /// Nonzero count of a stacked-matrix row.
    pub fn row_nnz(&self, row: usize) -> usize {
        if row < self.num_users {
            self.user_ptr[row + 1] - self.user_ptr[row]
        } else {
            let r = row - self.num_users;
            self.item_ptr[r + 1] - self.item_ptr[r]
        }
    }

    /// One multiplication of the stacked `[users; items]` table by the matrix.
    pub fn multiply(
        &self,
        users: &EmbeddingTable,
        items: &EmbeddingTable,
    ) -> (EmbeddingTable, EmbeddingTable) {
        let dim = users.dim();
        let mut new_users = EmbeddingTable::zeros(self.num_users, dim);
        let mut new_items = EmbeddingTable::zeros(self.num_items, dim);
        if dim == 0 {
            return (new_users, new_items);
        }
        new_users
            .as_mut_slice()
            .par_chunks_mut(dim)
            .enumerate()
            .for_each(|(u, out)| {
                for k in self.user_ptr[u]..self.user_ptr[u + 1] {
                    axpy(
                        out,
                        self.user_vals[k],
                        items.row(self.user_cols[k] as usize),
                    );
                }
            });
        new_items
            .as_mut_slice()
            .par_chunks_mut(dim)
            .enumerate()
            .for_each(|(i, out)| {
                for k in self.item_ptr[i]..self.item_ptr[i + 1] {
                    axpy(
                        out,
                        self.item_vals[k],
                        users.row(self.item_cols[k] as usize),
                    );
                }
            });
        (new_users, new_items)
    }
}

/// `(1 / (L + 1)) * sum_{l=0..L} A^l E` for the stacked user/item table `E`.
///
/// Linear and self-adjoint (the matrix is symmetric), so the same call maps
/// output gradients back to input gradients.
pub fn propagate_pair(
    adj: &NormAdjacency,
    users: &EmbeddingTable,
    items: &EmbeddingTable,
    layers: usize,
) -> (EmbeddingTable, EmbeddingTable) {
    if layers == 0 {
        return (users.clone(), items.clone());
    }
    let mut sum_u = users.clone();
    let mut sum_i = items.clone();
    let mut cur_u = users.clone();
    let mut cur_i = items.clone();
    for _ in 0..layers {
        let (nu, ni) = adj.multiply(&cur_u, &cur_i);
        sum_u.add_scaled(&nu, 1.0);
        sum_i.add_scaled(&ni, 1.0);
        cur_u = nu;
        cur_i = ni;
    }
    let norm = 1.0 / (layers + 1) as f64;
    for v in sum_u.as_mut_slice().iter_mut().chain(sum_i.as_mut_slice()) {
        *v *= norm;
    }
    (sum_u, sum_i)
}

/// Propagates the interest pair and the conformity pair independently.
pub fn lightgcn_propagate(
    emb: &DisentangledEmbeddings,
    adj: &NormAdjacency,
    layers: usize,
) -> Result<DisentangledEmbeddings> {
    if emb.num_users() != adj.num_users() || emb.num_items() != adj.num_items() {
        return Err(Error::DimensionMismatch {
            expected: adj.num_nodes(),
            got: emb.num_users() + emb.num_items(),
        });
    }
    let (user_int, item_int) = propagate_pair(adj, &emb.user_int, &emb.item_int, layers);
    let (user_conf, item_conf) = propagate_pair(adj, &emb.user_conf, &emb.item_conf, layers);
    Ok(DisentangledEmbeddings {
        user_int,
        user_conf,
        item_int,
        item_conf,
    })
}
