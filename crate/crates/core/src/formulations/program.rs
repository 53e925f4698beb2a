//! Canonical conic program and the builder used by the MPC formulations.
//!
//! Programs have the form
//!
//! ```text
//! minimize    ½ xᵀ P x + qᵀ x + constant
//! subject to  A x + s = b,   s ∈ K
//! ```
//!
//! where `K` is a product of zero, nonnegative and second-order cones, with
//! rows ordered zero cone first, then nonnegative rows, then the SOC blocks.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::solver::cones::{self, Cone};
use crate::solver::sparse::CscMatrix;

/// Named group of decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarBlock {
    State(usize),
    Input(usize),
    Xe,
    Xs,
    Xc,
    Ue,
    Us,
    Uc,
    Xa,
    Ua,
    /// Unnamed variables of a hand-written program.
    Free,
}

/// Maps each [`VarBlock`] to the index range it occupies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableLayout {
    entries: Vec<(VarBlock, Range<usize>)>,
    len: usize,
}

impl VariableLayout {
    /// Lays blocks out contiguously in the given order.
    pub fn contiguous(blocks: &[(VarBlock, usize)]) -> Self {
        let mut start = 0;
        let entries = blocks
            .iter()
            .map(|&(b, len)| {
                let r = start..start + len;
                start += len;
                (b, r)
            })
            .collect();
        Self { entries, len: start }
    }

    /// Single anonymous block of `n` variables.
    pub fn free(n: usize) -> Self {
        Self::contiguous(&[(VarBlock::Free, n)])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn range(&self, block: VarBlock) -> Option<Range<usize>> {
        self.entries.iter().find(|(b, _)| *b == block).map(|(_, r)| r.clone())
    }

    /// Like [`VariableLayout::range`] but panics on a missing block; builders
    /// only ask for blocks they created.
    pub fn expect(&self, block: VarBlock) -> Range<usize> {
        self.range(block)
            .unwrap_or_else(|| panic!("layout has no block {block:?}"))
    }

    pub fn entries(&self) -> &[(VarBlock, Range<usize>)] {
        &self.entries
    }

    pub fn contains(&self, block: VarBlock) -> bool {
        self.range(block).is_some()
    }

    /// Every index in `0..len` is covered by exactly one block.
    pub fn covers_exactly(&self) -> bool {
        let mut hits = vec![0u8; self.len];
        for (_, r) in &self.entries {
            for i in r.clone() {
                if i >= self.len {
                    return false;
                }
                hits[i] += 1;
            }
        }
        hits.iter().all(|&h| h == 1)
    }

    pub fn slice(&self, block: VarBlock, x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(&x[self.expect(block)])
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProgramError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("P must be stored as its upper triangle")]
    NotUpperTriangular,
    #[error("variable layout does not cover every index exactly once")]
    Layout,
}

/// Quadratic-objective conic program with a named variable layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeProgram {
    /// Upper triangle of the symmetric PSD cost matrix.
    pub p: CscMatrix,
    pub q: Vec<f64>,
    pub constant: f64,
    pub a: CscMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
    pub layout: VariableLayout,
    /// Base frequency of the harmonic variables, if the program has any.
    pub harmonic_frequency: Option<f64>,
}

impl ConeProgram {
    pub fn new(
        p: CscMatrix,
        q: Vec<f64>,
        constant: f64,
        a: CscMatrix,
        b: Vec<f64>,
        cones: Vec<Cone>,
        layout: VariableLayout,
    ) -> Result<Self, ProgramError> {
        let n = q.len();
        if p.nrows != n || p.ncols != n {
            return Err(ProgramError::Dimension(format!("P is {}x{}, q has {n}", p.nrows, p.ncols)));
        }
        if a.ncols != n || a.nrows != b.len() {
            return Err(ProgramError::Dimension(format!(
                "A is {}x{}, expected {}x{n}",
                a.nrows,
                a.ncols,
                b.len()
            )));
        }
        if cones::total_dim(&cones) != b.len() {
            return Err(ProgramError::Dimension(format!(
                "cones cover {} rows, b has {}",
                cones::total_dim(&cones),
                b.len()
            )));
        }
        if !p.is_upper_triangular() {
            return Err(ProgramError::NotUpperTriangular);
        }
        if layout.len() != n || !layout.covers_exactly() {
            return Err(ProgramError::Layout);
        }
        Ok(Self {
            p,
            q,
            constant,
            a,
            b,
            cones,
            layout,
            harmonic_frequency: None,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn num_soc_blocks(&self) -> usize {
        self.cones.iter().filter(|c| matches!(c, Cone::SecondOrder(_))).count()
    }

    pub fn num_equalities(&self) -> usize {
        self.cones
            .iter()
            .filter_map(|c| match c {
                Cone::Zero(k) => Some(*k),
                _ => None,
            })
            .sum()
    }

    /// `½ xᵀPx + qᵀx + constant`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; x.len()];
        self.p.sym_upper_mul_vec(x, &mut px);
        let quad: f64 = x.iter().zip(&px).map(|(a, b)| a * b).sum();
        let lin: f64 = x.iter().zip(&self.q).map(|(a, b)| a * b).sum();
        0.5 * quad + lin + self.constant
    }

    /// Largest distance (infinity norm, per row) of `b - Ax` from `K`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut s = vec![0.0; self.num_rows()];
        self.a.mul_vec(x, &mut s);
        s.iter_mut().zip(&self.b).for_each(|(si, bi)| *si = bi - *si);
        let mut proj = s.clone();
        cones::project(&self.cones, &mut proj);
        s.iter().zip(&proj).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Copy of the program with extra equality rows `x[i] = value`, inserted
    /// ahead of the existing rows.
    pub fn with_fixed_variables(&self, fixed: &[(usize, f64)]) -> Self {
        let k = fixed.len();
        let mut t: Vec<(usize, usize, f64)> = fixed.iter().enumerate().map(|(row, &(i, _))| (row, i, 1.0)).collect();
        t.extend(self.a.triplets().map(|(r, c, v)| (r + k, c, v)));
        let mut b: Vec<f64> = fixed.iter().map(|&(_, v)| v).collect();
        b.extend_from_slice(&self.b);
        let mut cones = vec![Cone::Zero(k)];
        cones.extend_from_slice(&self.cones);
        Self {
            a: CscMatrix::from_triplets(self.num_rows() + k, self.num_vars(), &t),
            b,
            cones,
            ..self.clone()
        }
    }

    /// JSON debug dump: cost data, cone sizes and sparse triplets, for
    /// cross-checking against external solvers.
    pub fn to_debug_json(&self) -> serde_json::Value {
        let trip = |m: &CscMatrix| -> Vec<(usize, usize, f64)> { m.triplets().collect() };
        serde_json::json!({
            "n": self.num_vars(),
            "m": self.num_rows(),
            "P_upper": trip(&self.p),
            "q": self.q,
            "constant": self.constant,
            "A": trip(&self.a),
            "b": self.b,
            "cones": self.cones,
            "layout": self.layout,
            "harmonic_frequency": self.harmonic_frequency,
        })
    }
}

/// Affine scalar expression `Σ cᵢ x_i + d`.
#[derive(Debug, Clone, Default)]
pub(crate) struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub offset: f64,
}

impl Affine {
    pub fn constant(offset: f64) -> Self {
        Self { terms: Vec::new(), offset }
    }

    pub fn add(mut self, idx: usize, coef: f64) -> Self {
        if coef != 0.0 {
            self.terms.push((idx, coef));
        }
        self
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.terms.iter_mut().for_each(|t| t.1 *= factor);
        self.offset *= factor;
        self
    }
}

/// Accumulates cost terms and constraints, then assembles a [`ConeProgram`]
/// with rows ordered zero → nonnegative → SOC.
#[derive(Debug)]
pub(crate) struct ProgramBuilder {
    layout: VariableLayout,
    p: Vec<(usize, usize, f64)>,
    q: Vec<f64>,
    constant: f64,
    equalities: Vec<Affine>,
    inequalities: Vec<Affine>,
    socs: Vec<Vec<Affine>>,
}

impl ProgramBuilder {
    pub fn new(layout: VariableLayout) -> Self {
        let n = layout.len();
        Self {
            layout,
            p: Vec::new(),
            q: vec![0.0; n],
            constant: 0.0,
            equalities: Vec::new(),
            inequalities: Vec::new(),
            socs: Vec::new(),
        }
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    /// Adds `‖Σ_k c_k · v_k − r‖²_W`, where each `v_k` is the variable block
    /// starting at `start_k` with the dimension of `r`.
    pub fn add_weighted_square(&mut self, blocks: &[(usize, f64)], weight: &DMatrix<f64>, target: &DVector<f64>) {
        let dim = target.len();
        debug_assert_eq!(weight.nrows(), dim);
        for &(sk, ck) in blocks {
            if ck == 0.0 {
                continue;
            }
            for &(sl, cl) in blocks {
                if cl == 0.0 {
                    continue;
                }
                for a in 0..dim {
                    for b in 0..dim {
                        let w = weight[(a, b)];
                        let (r, c) = (sk + a, sl + b);
                        if w != 0.0 && r <= c {
                            self.p.push((r, c, 2.0 * ck * cl * w));
                        }
                    }
                }
            }
            let wr = weight * target;
            for a in 0..dim {
                self.q[sk + a] -= 2.0 * ck * wr[a];
            }
        }
        self.constant += target.dot(&(weight * target));
    }

    /// `expr = 0`.
    pub fn equality(&mut self, expr: Affine) {
        self.equalities.push(expr);
    }

    /// `expr ≤ 0`.
    pub fn nonpositive(&mut self, expr: Affine) {
        self.inequalities.push(expr);
    }

    /// `(e_0, e_1, …) ∈ SOC`, i.e. `‖(e_1, …)‖ ≤ e_0`.
    pub fn second_order(&mut self, exprs: Vec<Affine>) {
        self.socs.push(exprs);
    }

    pub fn build(self) -> Result<ConeProgram, ProgramError> {
        let n = self.layout.len();
        let mut trip = Vec::new();
        let mut b = Vec::new();
        let mut row = 0;
        // equality Σc x + d = 0  →  A = c, b = −d, s = 0
        // inequality Σc x + d ≤ 0  →  A = c, b = −d, s ≥ 0
        for e in self.equalities.iter().chain(&self.inequalities) {
            trip.extend(e.terms.iter().map(|&(i, c)| (row, i, c)));
            b.push(-e.offset);
            row += 1;
        }
        // SOC member e(x) = Σc x + d  →  s = b − A x  with A = −c, b = d
        for block in &self.socs {
            for e in block {
                trip.extend(e.terms.iter().map(|&(i, c)| (row, i, -c)));
                b.push(e.offset);
                row += 1;
            }
        }
        let mut cones = Vec::new();
        if !self.equalities.is_empty() {
            cones.push(Cone::Zero(self.equalities.len()));
        }
        if !self.inequalities.is_empty() {
            cones.push(Cone::Nonnegative(self.inequalities.len()));
        }
        cones.extend(self.socs.iter().map(|s| Cone::SecondOrder(s.len())));
        ConeProgram::new(
            CscMatrix::from_triplets(n, n, &self.p),
            self.q,
            self.constant,
            CscMatrix::from_triplets(row, n, &trip),
            b,
            cones,
            self.layout,
        )
    }
}
