//! Frequency response of the discrete plant and selection of the harmonic
//! base frequency.
//!
//! The suggested `w` is the lowest frequency at which the gain of a chosen
//! input-to-output channel falls to the ratio of their bounds. Above it, a
//! harmonic that saturates the input can no longer saturate the output.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use nalgebra::{Complex, DMatrix};

use crate::model::{ConstraintSet, LtiModel};

/// Lower end of the default search grid (rad/sample).
pub const GRID_MIN: f64 = 1e-3;
/// Points of the default logarithmic search grid.
pub const GRID_POINTS: usize = 400;
/// Width below which the crossing bisection stops.
pub const BISECTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FreqError {
    #[error("frequency {0} outside (0, π]")]
    InvalidFrequency(f64),
    #[error("e^(j{0}) is a pole of the plant")]
    PoleOnGrid(f64),
    #[error("grid must be strictly increasing")]
    Grid,
    #[error("channel ({out_index}, {in_index}) out of range")]
    Channel { out_index: usize, in_index: usize },
    #[error("no constrained output bounds input {0} alone")]
    UnboundedInput(usize),
    #[error("output {0} must have bounds on both sides")]
    UnboundedOutput(usize),
    #[error("writing CSV: {0}")]
    Io(String),
}

/// Transfer matrices `C (e^{jw} I − A)^{−1} B + D` on a frequency grid.
#[derive(Debug, Clone)]
pub struct FrequencyResponse {
    pub grid: Vec<f64>,
    pub gains: Vec<DMatrix<Complex<f64>>>,
}

impl FrequencyResponse {
    pub fn magnitude(&self, out_index: usize, in_index: usize) -> Vec<f64> {
        self.gains.iter().map(|g| g[(out_index, in_index)].norm()).collect()
    }

    /// CSV with a `w` column and one `|G_oi|` column per channel.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), FreqError> {
        let io = |e: std::io::Error| FreqError::Io(e.to_string());
        let (nz, m) = self.gains.first().map_or((0, 0), |g| g.shape());
        let mut header = vec!["w".to_string()];
        for o in 0..nz {
            for i in 0..m {
                header.push(format!("gain_{o}_{i}"));
            }
        }
        writeln!(out, "{}", header.join(",")).map_err(io)?;
        for (w, g) in self.grid.iter().zip(&self.gains) {
            let mut row = vec![format!("{w:e}")];
            for o in 0..nz {
                for i in 0..m {
                    row.push(format!("{:e}", g[(o, i)].norm()));
                }
            }
            writeln!(out, "{}", row.join(",")).map_err(io)?;
        }
        Ok(())
    }
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|k| match k {
                    0 => lo,
                    _ if k + 1 == n => hi,
                    _ => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
                })
                .collect()
        }
    }
}

fn transfer(model: &LtiModel, w: f64) -> Result<DMatrix<Complex<f64>>, FreqError> {
    if !(w > 0.0 && w <= PI) {
        return Err(FreqError::InvalidFrequency(w));
    }
    let n = model.n();
    let z = Complex::from_polar(1.0, w);
    let cplx = |m: &DMatrix<f64>| m.map(|v| Complex::new(v, 0.0));
    let resolvent = DMatrix::from_diagonal_element(n, n, z) - cplx(model.a());
    // near-singular resolvent means a pole on or next to the unit circle
    let sv = resolvent.clone().singular_values();
    let scale = 1.0 + model.a().amax();
    if sv.min() <= 1e-12 * scale {
        return Err(FreqError::PoleOnGrid(w));
    }
    let x = resolvent.lu().solve(&cplx(model.b())).ok_or(FreqError::PoleOnGrid(w))?;
    Ok(cplx(model.c()) * x + cplx(model.d()))
}

/// `|G(e^{jw})|` of one channel.
pub fn gain_at(model: &LtiModel, w: f64, out_index: usize, in_index: usize) -> Result<f64, FreqError> {
    if out_index >= model.nz() || in_index >= model.m() {
        return Err(FreqError::Channel { out_index, in_index });
    }
    Ok(transfer(model, w)?[(out_index, in_index)].norm())
}

pub fn frequency_response(model: &LtiModel, grid: &[f64]) -> Result<FrequencyResponse, FreqError> {
    if grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(FreqError::Grid);
    }
    let gains = grid.iter().map(|&w| transfer(model, w)).collect::<Result<_, _>>()?;
    Ok(FrequencyResponse { grid: grid.to_vec(), gains })
}

/// How [`suggest_w`] arrived at its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Crossing,
    /// Gain already below the ratio at the bottom of the grid.
    BelowRatioAtLowFrequency,
    /// No crossing up to π/2; the bound itself is returned.
    NoCrossing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Suggestion {
    pub w: f64,
    pub outcome: Outcome,
    /// `|z_M(out)| / |u_M(in)|`.
    pub ratio: f64,
}

/// Bound on the input `in_index` taken from the constrained output that is
/// exactly that input.
fn input_bound(model: &LtiModel, constraints: &ConstraintSet, in_index: usize) -> Result<f64, FreqError> {
    (0..model.nz())
        .find(|&i| {
            model.c().row(i).iter().all(|v| *v == 0.0)
                && model.d().row(i).iter().enumerate().all(|(j, v)| *v == if j == in_index { 1.0 } else { 0.0 })
        })
        .map(|i| constraints.z_max()[i].abs().min(constraints.z_min()[i].abs()))
        .ok_or(FreqError::UnboundedInput(in_index))
}

/// Lowest `w ≤ π/2` where the channel gain crosses `|z_M(out)| / |u_M(in)|`.
pub fn suggest_w(
    model: &LtiModel,
    constraints: &ConstraintSet,
    out_index: usize,
    in_index: usize,
) -> Result<Suggestion, FreqError> {
    if out_index >= model.nz() || in_index >= model.m() {
        return Err(FreqError::Channel { out_index, in_index });
    }
    let (lo, hi) = (constraints.z_min()[out_index], constraints.z_max()[out_index]);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(FreqError::UnboundedOutput(out_index));
    }
    let ratio = hi.abs().min(lo.abs()) / input_bound(model, constraints, in_index)?;
    suggest_w_for_ratio(model, out_index, in_index, ratio)
}

/// [`suggest_w`] with an explicit target ratio.
pub fn suggest_w_for_ratio(model: &LtiModel, out_index: usize, in_index: usize, ratio: f64) -> Result<Suggestion, FreqError> {
    let excess = |w: f64| gain_at(model, w, out_index, in_index).map(|g| g - ratio);
    let tol = 1e-12 * ratio.abs().max(1.0);
    let grid = log_grid(GRID_MIN, FRAC_PI_2, GRID_POINTS);

    let first = excess(grid[0])?;
    if first < -tol {
        log::warn!("gain below the bound ratio {ratio} already at w = {}", grid[0]);
        return Ok(Suggestion { w: grid[0], outcome: Outcome::BelowRatioAtLowFrequency, ratio });
    }
    let mut prev = grid[0];
    for &w in &grid[1..] {
        if excess(w)? < -tol {
            let (mut a, mut b) = (prev, w);
            while b - a > BISECTION_TOL {
                let mid = 0.5 * (a + b);
                if excess(mid)? < -tol {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Ok(Suggestion { w: 0.5 * (a + b), outcome: Outcome::Crossing, ratio });
        }
        prev = w;
    }
    log::warn!("channel gain never falls to {ratio} below π/2");
    Ok(Suggestion { w: FRAC_PI_2, outcome: Outcome::NoCrossing, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Plant;

    fn scalar(a: f64) -> LtiModel {
        let one = DMatrix::from_element(1, 1, 1.0);
        LtiModel::new(DMatrix::from_element(1, 1, a), one.clone(), one, DMatrix::zeros(1, 1)).unwrap()
    }

    #[test]
    fn integrator_at_nyquist() {
        assert!((gain_at(&scalar(1.0), PI, 0, 0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pure_delay_is_all_pass() {
        for w in [0.1, 1.0, 3.0] {
            assert!((gain_at(&scalar(0.0), w, 0, 0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_frequencies() {
        let m = scalar(0.5);
        assert_eq!(gain_at(&m, 0.0, 0, 0), Err(FreqError::InvalidFrequency(0.0)));
        assert!(matches!(gain_at(&m, 4.0, 0, 0), Err(FreqError::InvalidFrequency(_))));
        assert!(matches!(gain_at(&scalar(1.0), 1e-20, 0, 0), Err(FreqError::PoleOnGrid(_))));
        assert!(matches!(gain_at(&m, 1.0, 1, 0), Err(FreqError::Channel { .. })));
    }

    #[test]
    fn grid_is_increasing_and_inclusive() {
        let g = log_grid(1e-3, FRAC_PI_2, 50);
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[49], FRAC_PI_2);
        assert!(g.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn all_pass_has_no_crossing() {
        let s = suggest_w_for_ratio(&scalar(0.0), 0, 0, 1.0).unwrap();
        assert_eq!(s.outcome, Outcome::NoCrossing);
        assert_eq!(s.w, FRAC_PI_2);
    }

    #[test]
    fn ratio_above_dc_gain() {
        // 1 / (z − 0.5) has DC gain 2
        let s = suggest_w_for_ratio(&scalar(0.5), 0, 0, 3.0).unwrap();
        assert_eq!(s.outcome, Outcome::BelowRatioAtLowFrequency);
        assert_eq!(s.w, GRID_MIN);
    }

    #[test]
    fn benchmark_channel_crossing() {
        let plant = Plant::ball_plate();
        let s = suggest_w(&plant.model, &plant.constraints, 0, 0).unwrap();
        assert_eq!(s.outcome, Outcome::Crossing);
        assert!((s.ratio - 1.25).abs() < 1e-12);
        let g = gain_at(&plant.model, s.w, 0, 0).unwrap();
        assert!((g - s.ratio).abs() < 1e-4, "{g}");
    }
}
