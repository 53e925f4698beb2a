//! MPC for tracking (QP) and harmonic MPC (SOCP) in canonical conic form.

mod builders;
pub mod program;
mod solution;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{controllability_index, LtiModel, ModelError};

pub use builders::{build, build_artificial_reference, build_hmpc, build_mpct};
pub use program::{ConeProgram, ProgramError, VarBlock, VariableLayout};
pub use solution::{extract_solution, feasibility_residual, shift_solution, Artificial, FeasibleSolution};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormulationError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid controller parameters: {0}")]
    InvalidParams(String),
    #[error("solution residual {residual:.3e} exceeds {tol:.3e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("input solution is infeasible: residual {residual:.3e} exceeds {tol:.3e}")]
    InfeasibleInput { residual: f64, tol: f64 },
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Mpct,
    Hmpc,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControllerKind::Mpct => "MPCT",
            ControllerKind::Hmpc => "HMPC",
        })
    }
}

/// Horizon, weights and base frequency shared by both controllers.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub horizon: usize,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub t_e: DMatrix<f64>,
    pub s_e: DMatrix<f64>,
    pub t_h: DMatrix<f64>,
    pub s_h: DMatrix<f64>,
    pub t_a: DMatrix<f64>,
    pub s_a: DMatrix<f64>,
    pub w: f64,
}

impl ControllerParams {
    /// Benchmark weights for the ball-and-plate model.
    pub fn ball_plate(horizon: usize) -> Self {
        let q = diag(&[10.0, 0.05, 0.05, 0.05, 10.0, 0.05, 0.05, 0.05]);
        let r = DMatrix::from_diagonal_element(2, 2, 0.5);
        let t_e = diag(&[600.0, 50.0, 50.0, 50.0, 600.0, 50.0, 50.0, 50.0]);
        let s_e = DMatrix::from_diagonal_element(2, 2, 0.3);
        Self {
            horizon,
            q,
            r,
            t_h: t_e.clone(),
            s_h: &s_e * 0.5,
            t_a: t_e.clone(),
            s_a: s_e.clone(),
            t_e,
            s_e,
            w: 0.3254,
        }
    }

    /// Copy whose harmonic center weights are the MPCT offset weights.
    pub fn with_steady_offset_weights(&self) -> Self {
        Self {
            t_e: self.t_a.clone(),
            s_e: self.s_a.clone(),
            ..self.clone()
        }
    }

    /// Checks dimensions against the model only.
    pub fn check_dims(&self, model: &LtiModel) -> Result<(), FormulationError> {
        let (n, m) = (model.n(), model.m());
        let shapes = [
            ("Q", &self.q, n),
            ("R", &self.r, m),
            ("T_e", &self.t_e, n),
            ("S_e", &self.s_e, m),
            ("T_h", &self.t_h, n),
            ("S_h", &self.s_h, m),
            ("T_a", &self.t_a, n),
            ("S_a", &self.s_a, m),
        ];
        for (name, mat, k) in shapes {
            if mat.nrows() != k || mat.ncols() != k {
                return Err(FormulationError::Dimension(format!(
                    "{name} is {}x{}, expected {k}x{k}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
        }
        Ok(())
    }

    /// Full validation. A horizon shorter than the controllability index is
    /// allowed but logged.
    pub fn validate(&self, model: &LtiModel) -> Result<(), FormulationError> {
        self.check_dims(model)?;
        if self.horizon == 0 {
            return Err(FormulationError::InvalidParams("horizon must be at least 1".into()));
        }
        if !(self.w > 0.0 && self.w.is_finite()) {
            return Err(FormulationError::InvalidParams(format!("w must be positive, got {}", self.w)));
        }
        let named = [
            ("Q", &self.q),
            ("R", &self.r),
            ("T_e", &self.t_e),
            ("S_e", &self.s_e),
            ("T_h", &self.t_h),
            ("S_h", &self.s_h),
            ("T_a", &self.t_a),
            ("S_a", &self.s_a),
        ];
        for (name, mat) in named {
            if !is_positive_definite(mat) {
                return Err(FormulationError::InvalidParams(format!("{name} is not symmetric positive definite")));
            }
        }
        for (name, mat) in [("T_h", &self.t_h), ("S_h", &self.s_h)] {
            if mat.iter().enumerate().any(|(k, v)| k % mat.nrows() != k / mat.nrows() && *v != 0.0) {
                return Err(FormulationError::InvalidParams(format!("{name} must be diagonal")));
            }
        }
        let index = controllability_index(model)?;
        if self.horizon < index {
            log::warn!("horizon {} is below the controllability index {index}", self.horizon);
        }
        Ok(())
    }
}

fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let symmetric = (m - m.transpose()).amax() <= 1e-12 * scale;
    symmetric && m.clone().cholesky().is_some()
}
