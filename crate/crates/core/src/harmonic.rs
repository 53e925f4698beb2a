//! Single-harmonic reference signals
//!
//! ```text
//! x_hj = x_e + x_s sin(w(j − N)) + x_c cos(w(j − N))
//! u_hj = u_e + u_s sin(w(j − N)) + u_c cos(w(j − N))
//! ```
//!
//! and the optimal artificial harmonic reference for a given set-point.

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::formulations::{self, ControllerParams};
use crate::model::{LtiModel, Plant};
use crate::solver::{self, SolveStatus, SolverSettings};

/// Absolute tolerance of [`check_harmonic_dynamics`].
pub const HARMONIC_DYNAMICS_TOL: f64 = 1e-8;

/// Target pair `(x_r, u_r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
}

impl Reference {
    pub fn new(x: DVector<f64>, u: DVector<f64>) -> Self {
        Self { x, u }
    }

    pub fn check_dims(&self, model: &LtiModel) -> Result<(), HarmonicError> {
        if self.x.len() != model.n() || self.u.len() != model.m() {
            return Err(HarmonicError::Dimension(format!(
                "reference has sizes ({}, {}), model ({}, {})",
                self.x.len(),
                self.u.len(),
                model.n(),
                model.m()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarmonicError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("frequency must be positive, got {0}")]
    Frequency(f64),
    #[error("conic solver did not converge: {0:?}")]
    SolverFailure(SolveStatus),
    #[error(transparent)]
    Formulation(#[from] formulations::FormulationError),
}

/// Harmonic coefficients, base frequency `w` and the phase origin `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicReference {
    pub x_e: DVector<f64>,
    pub x_s: DVector<f64>,
    pub x_c: DVector<f64>,
    pub u_e: DVector<f64>,
    pub u_s: DVector<f64>,
    pub u_c: DVector<f64>,
    pub w: f64,
    pub horizon: usize,
}

impl HarmonicReference {
    /// Constant signal at `(x_e, u_e)`.
    pub fn steady(x_e: DVector<f64>, u_e: DVector<f64>, w: f64, horizon: usize) -> Self {
        let (n, m) = (x_e.len(), u_e.len());
        Self {
            x_e,
            x_s: DVector::zeros(n),
            x_c: DVector::zeros(n),
            u_e,
            u_s: DVector::zeros(m),
            u_c: DVector::zeros(m),
            w,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<(), HarmonicError> {
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(HarmonicError::Frequency(self.w));
        }
        let n = self.x_e.len();
        let m = self.u_e.len();
        if self.x_s.len() != n || self.x_c.len() != n || self.u_s.len() != m || self.u_c.len() != m {
            return Err(HarmonicError::Dimension("coefficient lengths differ".into()));
        }
        Ok(())
    }

    /// `(z_e, z_s, z_c) = [C D] · [x; u]` for each coefficient.
    pub fn outputs(&self, model: &LtiModel) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let z = |x: &DVector<f64>, u: &DVector<f64>| model.c() * x + model.d() * u;
        (z(&self.x_e, &self.u_e), z(&self.x_s, &self.u_s), z(&self.x_c, &self.u_c))
    }

    /// `‖x_s‖ + ‖x_c‖ + ‖u_s‖ + ‖u_c‖`.
    pub fn oscillation_norm(&self) -> f64 {
        self.x_s.norm() + self.x_c.norm() + self.u_s.norm() + self.u_c.norm()
    }

    /// One-sample advance: same center, rotated coefficients.
    pub fn shifted(&self) -> Self {
        let (x_s, x_c) = rotate_coeffs(&self.x_s, &self.x_c, self.w);
        let (u_s, u_c) = rotate_coeffs(&self.u_s, &self.u_c, self.w);
        Self {
            x_s,
            x_c,
            u_s,
            u_c,
            ..self.clone()
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HarmonicDocument {
    x_e: Vec<f64>,
    x_s: Vec<f64>,
    x_c: Vec<f64>,
    u_e: Vec<f64>,
    u_s: Vec<f64>,
    u_c: Vec<f64>,
    w: f64,
    #[serde(rename = "N")]
    horizon: usize,
}

impl Serialize for HarmonicReference {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = |d: &DVector<f64>| d.iter().copied().collect::<Vec<_>>();
        HarmonicDocument {
            x_e: v(&self.x_e),
            x_s: v(&self.x_s),
            x_c: v(&self.x_c),
            u_e: v(&self.u_e),
            u_s: v(&self.u_s),
            u_c: v(&self.u_c),
            w: self.w,
            horizon: self.horizon,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HarmonicReference {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = HarmonicDocument::deserialize(d)?;
        let h = Self {
            x_e: doc.x_e.into(),
            x_s: doc.x_s.into(),
            x_c: doc.x_c.into(),
            u_e: doc.u_e.into(),
            u_s: doc.u_s.into(),
            u_c: doc.u_c.into(),
            w: doc.w,
            horizon: doc.horizon,
        };
        h.validate().map_err(serde::de::Error::custom)?;
        Ok(h)
    }
}

/// `(x_hj, u_hj)`.
pub fn eval_harmonic(h: &HarmonicReference, j: usize) -> (DVector<f64>, DVector<f64>) {
    let phase = h.w * (j as f64 - h.horizon as f64);
    let (s, c) = phase.sin_cos();
    (&h.x_e + &h.x_s * s + &h.x_c * c, &h.u_e + &h.u_s * s + &h.u_c * c)
}

/// `v_s⁺ = v_s cos w − v_c sin w`, `v_c⁺ = v_s sin w + v_c cos w`.
pub fn rotate_coeffs(v_s: &DVector<f64>, v_c: &DVector<f64>, w: f64) -> (DVector<f64>, DVector<f64>) {
    let (s, c) = w.sin_cos();
    (v_s * c - v_c * s, v_s * s + v_c * c)
}

/// Per-component envelope `v_e ∓ sqrt(v_s² + v_c²)`.
pub fn amplitude_bounds(v_e: &DVector<f64>, v_s: &DVector<f64>, v_c: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let amp = v_s.zip_map(v_c, |a, b| a.hypot(b));
    (v_e - &amp, v_e + &amp)
}

/// Largest residual of the three coefficient equations
/// `x_e = A x_e + B u_e`, `x_s cos w − x_c sin w = A x_s + B u_s` and
/// `x_s sin w + x_c cos w = A x_c + B u_c`.
pub fn harmonic_dynamics_residual(model: &LtiModel, h: &HarmonicReference) -> f64 {
    let (rs, rc) = rotate_coeffs(&h.x_s, &h.x_c, h.w);
    let e = &h.x_e - model.step(&h.x_e, &h.u_e);
    let s = rs - model.step(&h.x_s, &h.u_s);
    let c = rc - model.step(&h.x_c, &h.u_c);
    e.amax().max(s.amax()).max(c.amax())
}

/// True when the coefficient equations hold to [`HARMONIC_DYNAMICS_TOL`].
pub fn check_harmonic_dynamics(model: &LtiModel, h: &HarmonicReference) -> bool {
    h.x_e.len() == model.n() && h.u_e.len() == model.m() && harmonic_dynamics_residual(model, h) <= HARMONIC_DYNAMICS_TOL
}

/// Minimizes the harmonic offset cost over admissible harmonic references and
/// returns the minimizer together with the optimal cost `V_h°`.
pub fn optimal_artificial_reference(
    plant: &Plant,
    params: &ControllerParams,
    reference: &Reference,
    settings: &SolverSettings,
) -> Result<(HarmonicReference, f64), HarmonicError> {
    reference.check_dims(&plant.model)?;
    let program = formulations::build_artificial_reference(plant, params, reference)?;
    let out = solver::solve(&program, settings, None).map_err(|_| HarmonicError::SolverFailure(SolveStatus::MaxIter))?;
    if out.report.status != SolveStatus::Solved {
        return Err(HarmonicError::SolverFailure(out.report.status));
    }
    let l = &program.layout;
    use formulations::VarBlock::*;
    let h = HarmonicReference {
        x_e: l.slice(Xe, &out.x),
        x_s: l.slice(Xs, &out.x),
        x_c: l.slice(Xc, &out.x),
        u_e: l.slice(Ue, &out.x),
        u_s: l.slice(Us, &out.x),
        u_c: l.slice(Uc, &out.x),
        w: params.w,
        horizon: params.horizon,
    };
    Ok((h, out.report.objective))
}
