//! Sparse LDLᵀ factorization of quasi-definite matrices.
//!
//! Up-looking factorization driven by the elimination tree, the same scheme
//! as QDLDL. No pivoting is performed, so the caller supplies a fill-reducing
//! symmetric permutation up front (see [`minimum_degree_order`]).

use std::collections::BTreeSet;

use super::sparse::CscMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LdlError {
    #[error("matrix is not upper triangular")]
    NotUpperTriangular,
    #[error("zero pivot at column {0}: matrix is singular")]
    ZeroPivot(usize),
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
}

const NONE: usize = usize::MAX;

/// Greedy minimum-degree ordering of the symmetric pattern given by the
/// upper triangle `upper`. Ties are broken by the smaller index, so the result
/// is fully deterministic.
pub fn minimum_degree_order(upper: &CscMatrix) -> Vec<usize> {
    let n = upper.ncols;
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (r, c, _) in upper.triplets() {
        if r != c {
            adj[r].insert(c);
            adj[c].insert(r);
        }
    }
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (adj[v].len(), v)).collect();
    let mut perm = Vec::with_capacity(n);
    while let Some((_, v)) = queue.pop_first() {
        perm.push(v);
        let nbrs: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), u));
            adj[u].remove(&v);
        }
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &u in &nbrs {
            queue.insert((adj[u].len(), u));
        }
    }
    perm
}

/// Inverse of a permutation vector.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// `L D Lᵀ` factors with unit lower-triangular `L` stored column-wise
/// (diagonal omitted).
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    etree: Vec<usize>,
    lnz: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl LdlFactor {
    /// Symbolic and numeric factorization of the symmetric matrix whose upper
    /// triangle (including the diagonal) is `upper`.
    pub fn new(upper: &CscMatrix) -> Result<Self, LdlError> {
        if upper.nrows != upper.ncols {
            return Err(LdlError::NotSquare(upper.nrows, upper.ncols));
        }
        let n = upper.ncols;
        let (etree, lnz) = elimination_tree(upper)?;
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let mut f = Self {
            n,
            etree,
            lnz,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
        };
        f.refactor(upper)?;
        Ok(f)
    }

    /// Numeric refactorization for a matrix with the same pattern as the one
    /// used in [`LdlFactor::new`].
    pub fn refactor(&mut self, upper: &CscMatrix) -> Result<(), LdlError> {
        let n = self.n;
        let ap = &upper.colptr;
        let ai = &upper.rowval;
        let ax = &upper.nzval;
        let scale = ax.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let pivot_tol = scale * f64::EPSILON * 16.0;

        let mut y_used = vec![false; n];
        let mut y_vals = vec![0.0; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();

        for k in 0..n {
            self.d[k] = 0.0;
            let mut nnz_y = 0;
            for p in ap[k]..ap[k + 1] {
                let bidx = ai[p];
                if bidx == k {
                    self.d[k] = ax[p];
                    continue;
                }
                y_vals[bidx] = ax[p];
                if !y_used[bidx] {
                    y_used[bidx] = true;
                    elim[0] = bidx;
                    let mut nnz_e = 1;
                    let mut next = self.etree[bidx];
                    while next != NONE && next < k {
                        if y_used[next] {
                            break;
                        }
                        y_used[next] = true;
                        elim[nnz_e] = next;
                        nnz_e += 1;
                        next = self.etree[next];
                    }
                    while nnz_e > 0 {
                        nnz_e -= 1;
                        y_idx[nnz_y] = elim[nnz_e];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let end = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..end {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[end] = k;
                self.lx[end] = yc * self.dinv[c];
                self.d[k] -= yc * self.lx[end];
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            if !(self.d[k].abs() > pivot_tol) || !self.d[k].is_finite() {
                return Err(LdlError::ZeroPivot(k));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Solves `L D Lᵀ x = b` in place.
    pub fn solve(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..self.n {
            x[i] *= self.dinv[i];
        }
        for i in (0..self.n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros in the strictly lower part of `L`.
    pub fn nnz_l(&self) -> usize {
        self.lnz.iter().sum()
    }

    /// Number of negative pivots (inertia check for quasi-definite systems).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|d| **d < 0.0).count()
    }
}

fn elimination_tree(upper: &CscMatrix) -> Result<(Vec<usize>, Vec<usize>), LdlError> {
    let n = upper.ncols;
    let mut work = vec![NONE; n];
    let mut lnz = vec![0usize; n];
    let mut etree = vec![NONE; n];
    for j in 0..n {
        work[j] = j;
        for p in upper.colptr[j]..upper.colptr[j + 1] {
            let mut i = upper.rowval[p];
            if i > j {
                return Err(LdlError::NotUpperTriangular);
            }
            while work[i] != j {
                if etree[i] == NONE {
                    etree[i] = j;
                }
                lnz[i] += 1;
                work[i] = j;
                i = etree[i];
            }
        }
    }
    Ok((etree, lnz))
}
