//! Word-pair relation table.
//!
//! Cell `(i, j)` is `relu(W [h_i; h_j; c_ij; t_ij] + b)` where `c_ij` max-pools
//! the word states between the two positions (inclusive) and `t_ij` is a
//! K-slice bilinear interaction `h_i^T W_k h_j`.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::nn;
use crate::tensor::{ParamStore, Real, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct TableConfig {
    pub d_model: usize,
    pub d_table: usize,
    /// Number of bilinear interaction slices.
    pub n_interactions: usize,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            d_model: 64,
            d_table: 64,
            n_interactions: 32,
        }
    }
}

/// `[n, n, d_table]` table on a tape.
#[derive(Debug, Clone, Copy)]
pub struct RelationTable {
    pub values: Var,
    pub n: usize,
    pub d: usize,
}

impl RelationTable {
    /// Flat index of cell `(i, j)` in the `[n * n, d]` view.
    pub fn cell(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }
}

pub fn init<T: Real>(cfg: &TableConfig, store: &mut ParamStore<T>, rng: &mut dyn RngCore) -> Result<()> {
    let d = cfg.d_model;
    let bound = (1.0 / d as f64).sqrt();
    store.insert(
        "table.interaction",
        Tensor::uniform(&[cfg.n_interactions, d, d], bound, rng),
    )?;
    nn::init_linear(store, "table.proj", 3 * d + cfg.n_interactions, cfg.d_table, rng)
}

/// Max-pool of `H` rows over `min(i, j)..=max(i, j)`, shape `[d]`.
pub fn context_pool<T: Real>(tape: &mut Tape<T>, h: Var, i: usize, j: usize) -> Result<Var> {
    let s = tape.shape(h).to_vec();
    if s.len() != 2 || i >= s[0] || j >= s[0] {
        return Err(Error::Domain(format!("pair ({i}, {j}) out of range for H of shape {s:?}")));
    }
    let rows: Vec<usize> = (i.min(j)..=i.max(j)).collect();
    let pooled = tape.max_pool_rows(h, &[rows])?;
    tape.reshape(pooled, &[s[1]])
}

/// `t[k] = h_i^T W[k] h_j` for `w: [K, d, d]`, shape `[K]`.
pub fn tensor_interaction<T: Real>(tape: &mut Tape<T>, hi: Var, hj: Var, w: Var) -> Result<Var> {
    let sw = tape.shape(w).to_vec();
    if sw.len() != 3 || tape.shape(hi) != [sw[1]] || tape.shape(hj) != [sw[2]] {
        return Err(Error::shape("tensor_interaction", tape.shape(hi), &sw));
    }
    let (k, d) = (sw[0], sw[1]);
    let w2 = tape.reshape(w, &[k * d, d])?;
    let hj_col = tape.reshape(hj, &[d, 1])?;
    let wh = tape.matmul(w2, hj_col)?;
    let wh = tape.reshape(wh, &[k, d])?;
    let hi_col = tape.reshape(hi, &[d, 1])?;
    let t = tape.matmul(wh, hi_col)?;
    tape.reshape(t, &[k])
}

/// Row sets for every ordered pair, row-major over `(i, j)`.
pub(crate) fn context_sets(n: usize) -> Vec<Vec<usize>> {
    let mut sets = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            sets.push((i.min(j)..=i.max(j)).collect());
        }
    }
    sets
}

/// Builds the initial table from word states `h: [n, d_model]`.
pub fn build_table<T: Real>(
    cfg: &TableConfig,
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    h: Var,
) -> Result<RelationTable> {
    let s = tape.shape(h).to_vec();
    if s.len() != 2 || s[1] != cfg.d_model {
        return Err(Error::shape("build_table", &s, &[cfg.d_model]));
    }
    let n = s[0];
    let context = tape.max_pool_rows(h, &context_sets(n))?;
    let w = tape.param(store, "table.interaction")?;
    let inter = tape.bilinear_pairs(h, w)?;
    let inter = tape.reshape(inter, &[n * n, cfg.n_interactions])?;
    let rows_i: Vec<usize> = (0..n * n).map(|c| c / n).collect();
    let rows_j: Vec<usize> = (0..n * n).map(|c| c % n).collect();
    let hi = tape.gather_rows(h, &rows_i)?;
    let hj = tape.gather_rows(h, &rows_j)?;
    let cat = tape.concat_cols(&[hi, hj, context, inter])?;
    let r = nn::linear(tape, store, "table.proj", cat)?;
    let r = tape.relu(r);
    let values = tape.reshape(r, &[n, n, cfg.d_table])?;
    Ok(RelationTable {
        values,
        n,
        d: cfg.d_table,
    })
}
