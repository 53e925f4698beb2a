//! Convex cones supported by the solver and their Euclidean projections.

use serde::{Deserialize, Serialize};

/// One block of the cone product `K = K_1 × … × K_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    /// `{0}^k`: equality rows.
    Zero(usize),
    /// `R_+^k`.
    Nonnegative(usize),
    /// `{(t, v) : ‖v‖₂ ≤ t}` of the given total dimension.
    SecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(k) | Cone::Nonnegative(k) | Cone::SecondOrder(k) => k,
        }
    }

    /// Projects `v` onto the cone.
    pub fn project(&self, v: &mut [f64]) {
        match self {
            Cone::Zero(_) => v.fill(0.0),
            Cone::Nonnegative(_) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            Cone::SecondOrder(_) => project_soc_slice(v),
        }
    }

    /// Projects `v` onto the dual cone. The dual of `{0}` is the whole space;
    /// the other two cones are self-dual.
    pub fn project_dual(&self, v: &mut [f64]) {
        match self {
            Cone::Zero(_) => {}
            _ => self.project(v),
        }
    }
}

/// Total dimension of a cone product.
pub fn total_dim(cones: &[Cone]) -> usize {
    cones.iter().map(Cone::dim).sum()
}

/// Applies `f` to each cone together with the matching slice of `v`.
pub fn for_each_block(cones: &[Cone], v: &mut [f64], mut f: impl FnMut(&Cone, &mut [f64])) {
    let mut start = 0;
    for cone in cones {
        let end = start + cone.dim();
        f(cone, &mut v[start..end]);
        start = end;
    }
}

/// Projection onto `K`, block by block.
pub fn project(cones: &[Cone], v: &mut [f64]) {
    for_each_block(cones, v, |c, s| c.project(s));
}

/// Projection onto the dual cone `K*`.
pub fn project_dual(cones: &[Cone], v: &mut [f64]) {
    for_each_block(cones, v, |c, s| c.project_dual(s));
}

/// Euclidean projection of a 3-vector `(t, a, b)` onto the second-order cone
/// `‖(a, b)‖ ≤ t`.
pub fn project_soc(v: [f64; 3]) -> [f64; 3] {
    let mut out = v;
    project_soc_slice(&mut out);
    out
}

fn project_soc_slice(v: &mut [f64]) {
    let (t, x) = v.split_first_mut().expect("second-order cone of dimension 0");
    let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm <= *t {
        return;
    }
    if norm <= -*t {
        *t = 0.0;
        x.fill(0.0);
        return;
    }
    let alpha = 0.5 * (*t + norm);
    let ratio = alpha / norm;
    *t = alpha;
    x.iter_mut().for_each(|a| *a *= ratio);
}
