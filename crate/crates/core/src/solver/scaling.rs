//! Ruiz equilibration of the KKT data.
//!
//! Produces diagonal `D` (variables), `E` (rows) and a cost factor `c` with
//! `P̄ = c·DPD`, `q̄ = c·Dq`, `Ā = EAD`, `b̄ = Eb`. Rows belonging to one
//! second-order cone share a single scale factor so that `E·K = K`.

use super::cones::Cone;
use super::sparse::CscMatrix;

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;

#[derive(Debug, Clone)]
pub struct Scaling {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub d_inv: Vec<f64>,
    pub e_inv: Vec<f64>,
    pub c: f64,
}

impl Scaling {
    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            d: vec![1.0; n],
            e: vec![1.0; m],
            d_inv: vec![1.0; n],
            e_inv: vec![1.0; m],
            c: 1.0,
        }
    }
}

fn limit(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else {
        v.min(MAX_SCALING)
    }
}

/// Equilibrates `p` (upper triangle), `q` and `a` in place and returns the
/// accumulated scaling.
pub fn equilibrate(p: &mut CscMatrix, q: &mut [f64], a: &mut CscMatrix, cones: &[Cone], iterations: usize) -> Scaling {
    let n = q.len();
    let m = a.nrows;
    let mut s = Scaling::identity(n, m);

    for _ in 0..iterations {
        // column norms of the symmetric KKT matrix [P Aᵀ; A 0]
        let mut col = vec![0.0f64; n];
        for (r, c, v) in p.triplets() {
            col[c] = col[c].max(v.abs());
            col[r] = col[r].max(v.abs());
        }
        for (c, v) in a.col_norms_inf().into_iter().enumerate() {
            col[c] = col[c].max(v);
        }
        let rows = a.row_norms_inf();

        let dd: Vec<f64> = col.iter().map(|v| 1.0 / limit(*v).sqrt()).collect();
        let mut ee: Vec<f64> = rows.iter().map(|v| 1.0 / limit(*v).sqrt()).collect();
        let mut start = 0;
        for cone in cones {
            let end = start + cone.dim();
            if let Cone::SecondOrder(k) = cone {
                let mean = ee[start..end].iter().sum::<f64>() / *k as f64;
                ee[start..end].fill(mean);
            }
            start = end;
        }

        p.scale(&dd, &dd);
        a.scale(&ee, &dd);
        q.iter_mut().zip(&dd).for_each(|(qi, di)| *qi *= di);
        s.d.iter_mut().zip(&dd).for_each(|(a, b)| *a *= b);
        s.e.iter_mut().zip(&ee).for_each(|(a, b)| *a *= b);

        // cost scaling
        let mut pcol = vec![0.0f64; n];
        for (r, c, v) in p.triplets() {
            pcol[c] = pcol[c].max(v.abs());
            pcol[r] = pcol[r].max(v.abs());
        }
        let mean_p = if n > 0 { pcol.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let q_norm = q.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
        let gamma = 1.0 / limit(mean_p.max(q_norm));
        p.nzval.iter_mut().for_each(|v| *v *= gamma);
        q.iter_mut().for_each(|v| *v *= gamma);
        s.c *= gamma;
    }

    s.d_inv = s.d.iter().map(|v| 1.0 / v).collect();
    s.e_inv = s.e.iter().map(|v| 1.0 / v).collect();
    s
}
