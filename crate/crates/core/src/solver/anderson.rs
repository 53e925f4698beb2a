//! Type-II Anderson acceleration of a fixed-point iteration `s ← T(s)`.
//!
//! Given the residual `f = T(s) − s` and a short history of differences, the
//! next point is `T(s) − ΔT γ` with `γ = argmin ‖f − ΔF γ‖₂` (Tikhonov
//! regularized). Safeguarding is left to the caller.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

const REGULARIZATION: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Anderson {
    memory: usize,
    d_f: VecDeque<Vec<f64>>,
    d_t: VecDeque<Vec<f64>>,
    last: Option<(Vec<f64>, Vec<f64>)>,
}

impl Anderson {
    pub fn new(memory: usize) -> Self {
        Self {
            memory,
            d_f: VecDeque::with_capacity(memory),
            d_t: VecDeque::with_capacity(memory),
            last: None,
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.memory > 0
    }

    pub fn reset(&mut self) {
        self.d_f.clear();
        self.d_t.clear();
        self.last = None;
    }

    /// Records `(T(s), f)` and writes the next point to `out`. Returns false
    /// (with `out = T(s)`) when no extrapolation was possible.
    pub fn step(&mut self, t: &[f64], f: &[f64], out: &mut [f64]) -> bool {
        out.copy_from_slice(t);
        if self.memory == 0 {
            return false;
        }
        if let Some((t_prev, f_prev)) = self.last.take() {
            if self.d_f.len() == self.memory {
                self.d_f.pop_front();
                self.d_t.pop_front();
            }
            self.d_f.push_back(f.iter().zip(&f_prev).map(|(a, b)| a - b).collect());
            self.d_t.push_back(t.iter().zip(&t_prev).map(|(a, b)| a - b).collect());
        }
        self.last = Some((t.to_vec(), f.to_vec()));
        let k = self.d_f.len();
        if k == 0 {
            return false;
        }

        let mut gram = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for i in 0..k {
            for j in i..k {
                let g: f64 = self.d_f[i].iter().zip(&self.d_f[j]).map(|(a, b)| a * b).sum();
                gram[(i, j)] = g;
                gram[(j, i)] = g;
            }
            rhs[i] = self.d_f[i].iter().zip(f).map(|(a, b)| a * b).sum();
        }
        let trace = gram.trace();
        if !(trace > 0.0 && trace.is_finite()) {
            return false;
        }
        for i in 0..k {
            gram[(i, i)] += REGULARIZATION * trace;
        }
        let Some(chol) = gram.cholesky() else {
            return false;
        };
        let gamma = chol.solve(&rhs);
        if gamma.iter().any(|g| !g.is_finite()) {
            return false;
        }
        for (i, g) in gamma.iter().enumerate() {
            for (o, d) in out.iter_mut().zip(&self.d_t[i]) {
                *o -= g * d;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accelerates_linear_contraction() {
        // T(s) = M s + c with slow contraction; AA recovers the fixed point
        let m = [[0.99, 0.0], [0.0, 0.5]];
        let c = [0.01, 0.5];
        let t = |s: &[f64]| vec![m[0][0] * s[0] + c[0], m[1][1] * s[1] + c[1]];
        let mut aa = Anderson::new(5);
        let mut s = vec![0.0, 0.0];
        let mut out = vec![0.0; 2];
        for _ in 0..10 {
            let ts = t(&s);
            let f: Vec<f64> = ts.iter().zip(&s).map(|(a, b)| a - b).collect();
            aa.step(&ts, &f, &mut out);
            s.copy_from_slice(&out);
        }
        assert!((s[0] - 1.0).abs() < 1e-6 && (s[1] - 1.0).abs() < 1e-6, "{s:?}");
    }

    #[test]
    fn zero_memory_is_plain_iteration() {
        let mut aa = Anderson::new(0);
        let mut out = vec![0.0; 1];
        assert!(!aa.step(&[2.0], &[1.0], &mut out));
        assert_eq!(out, vec![2.0]);
    }
}
