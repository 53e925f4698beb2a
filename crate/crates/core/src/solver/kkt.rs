//! Regularized KKT system of the ADMM linear step:
//!
//! ```text
//! [ P + σI     Aᵀ      ] [x]   [r_x]
//! [ A      −diag(1/ρ)  ] [ν] = [r_z]
//! ```
//!
//! The matrix is quasi-definite for σ > 0 and ρ > 0, so any symmetric
//! permutation admits an LDLᵀ factorization without pivoting. The ordering is
//! computed once from the pattern and reused on every refactorization.

use super::ldl::{invert_permutation, minimum_degree_order, LdlError, LdlFactor};
use super::sparse::CscMatrix;

#[derive(Debug, Clone)]
pub struct KktSystem {
    n: usize,
    m: usize,
    pinv: Vec<usize>,
    matrix: CscMatrix,
    rho_slots: Vec<usize>,
    factor: LdlFactor,
    work: Vec<f64>,
}

impl KktSystem {
    /// Assembles, orders and factors the KKT matrix. `p_upper` is the upper
    /// triangle of the cost matrix, `rho` holds one penalty per constraint row.
    pub fn new(p_upper: &CscMatrix, a: &CscMatrix, sigma: f64, rho: &[f64]) -> Result<Self, LdlError> {
        let n = p_upper.ncols;
        let m = a.nrows;
        assert_eq!(rho.len(), m);
        let dim = n + m;

        let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(p_upper.nnz() + a.nnz() + dim);
        trip.extend(p_upper.triplets());
        trip.extend((0..n).map(|i| (i, i, sigma)));
        trip.extend(a.triplets().map(|(r, c, v)| (c, n + r, v)));
        trip.extend((0..m).map(|i| (n + i, n + i, -1.0 / rho[i])));
        let natural = CscMatrix::from_triplets(dim, dim, &trip);

        let perm = minimum_degree_order(&natural);
        let pinv = invert_permutation(&perm);
        let permuted: Vec<_> = natural
            .triplets()
            .map(|(r, c, v)| {
                let (pr, pc) = (pinv[r], pinv[c]);
                (pr.min(pc), pr.max(pc), v)
            })
            .collect();
        let matrix = CscMatrix::from_triplets(dim, dim, &permuted);
        let rho_slots = (0..m)
            .map(|i| {
                let j = pinv[n + i];
                let range = matrix.colptr[j]..matrix.colptr[j + 1];
                let pos = matrix.rowval[range.clone()]
                    .binary_search(&j)
                    .expect("KKT diagonal entry present");
                range.start + pos
            })
            .collect();
        let factor = LdlFactor::new(&matrix)?;
        Ok(Self {
            n,
            m,
            pinv,
            matrix,
            rho_slots,
            factor,
            work: vec![0.0; dim],
        })
    }

    /// Replaces the penalty diagonal and refactors numerically.
    pub fn update_rho(&mut self, rho: &[f64]) -> Result<(), LdlError> {
        for (slot, r) in self.rho_slots.iter().zip(rho) {
            self.matrix.nzval[*slot] = -1.0 / r;
        }
        self.factor.refactor(&self.matrix)
    }

    /// Solves in place; `rhs` is `[r_x; r_z]` in the original ordering.
    pub fn solve(&mut self, rhs: &mut [f64]) {
        for (i, v) in rhs.iter().enumerate() {
            self.work[self.pinv[i]] = *v;
        }
        self.factor.solve(&mut self.work);
        for (i, v) in rhs.iter_mut().enumerate() {
            *v = self.work[self.pinv[i]];
        }
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn nnz_l(&self) -> usize {
        self.factor.nnz_l()
    }

    /// Quasi-definite inertia: exactly `m` negative pivots.
    pub fn has_expected_inertia(&self) -> bool {
        self.factor.negative_pivots() == self.m
    }
}
