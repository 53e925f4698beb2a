//! Named solutions, their feasibility residuals and the one-step shift.

use nalgebra::DVector;

use super::program::{ConeProgram, VarBlock};
use super::{ControllerParams, FormulationError};
use crate::harmonic::{eval_harmonic, harmonic_dynamics_residual, HarmonicReference, Reference};
use crate::model::Plant;

/// Artificial reference carried by a solution.
#[derive(Debug, Clone, PartialEq)]
pub enum Artificial {
    Steady { x_a: DVector<f64>, u_a: DVector<f64> },
    Harmonic(HarmonicReference),
}

/// Predicted trajectory `x_0 … x_N`, `u_0 … u_{N−1}` plus the artificial
/// reference and the objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSolution {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub artificial: Artificial,
    pub objective: f64,
}

fn wsq(v: &DVector<f64>, w: &nalgebra::DMatrix<f64>) -> f64 {
    v.dot(&(w * v))
}

impl FeasibleSolution {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn harmonic(&self) -> Option<&HarmonicReference> {
        match &self.artificial {
            Artificial::Harmonic(h) => Some(h),
            Artificial::Steady { .. } => None,
        }
    }

    /// Artificial reference evaluated at prediction step `j`.
    pub fn reference_at(&self, j: usize) -> (DVector<f64>, DVector<f64>) {
        match &self.artificial {
            Artificial::Harmonic(h) => eval_harmonic(h, j),
            Artificial::Steady { x_a, u_a } => (x_a.clone(), u_a.clone()),
        }
    }

    /// Stage-`j` tracking term `‖x_j − x_hj‖²_Q + ‖u_j − u_hj‖²_R`.
    pub fn stage_term(&self, params: &ControllerParams, j: usize) -> f64 {
        let (xr, ur) = self.reference_at(j);
        wsq(&(&self.states[j] - xr), &params.q) + wsq(&(&self.inputs[j] - ur), &params.r)
    }

    pub fn stage_cost(&self, params: &ControllerParams) -> f64 {
        (0..self.horizon()).map(|j| self.stage_term(params, j)).sum()
    }

    /// Offset cost between the artificial reference and `reference`.
    pub fn offset_cost(&self, params: &ControllerParams, reference: &Reference) -> f64 {
        match &self.artificial {
            Artificial::Steady { x_a, u_a } => wsq(&(x_a - &reference.x), &params.t_a) + wsq(&(u_a - &reference.u), &params.s_a),
            Artificial::Harmonic(h) => {
                wsq(&(&h.x_e - &reference.x), &params.t_e)
                    + wsq(&(&h.u_e - &reference.u), &params.s_e)
                    + wsq(&h.x_s, &params.t_h)
                    + wsq(&h.x_c, &params.t_h)
                    + wsq(&h.u_s, &params.s_h)
                    + wsq(&h.u_c, &params.s_h)
            }
        }
    }

    pub fn cost(&self, params: &ControllerParams, reference: &Reference) -> f64 {
        self.stage_cost(params) + self.offset_cost(params, reference)
    }

    /// Packs the solution into the variable vector of `program`.
    pub fn to_vector(&self, program: &ConeProgram) -> Vec<f64> {
        let layout = &program.layout;
        let mut x = vec![0.0; layout.len()];
        let mut put = |block: VarBlock, v: &DVector<f64>| {
            if let Some(r) = layout.range(block) {
                x[r].copy_from_slice(v.as_slice());
            }
        };
        for (j, s) in self.states.iter().enumerate() {
            put(VarBlock::State(j), s);
        }
        for (j, u) in self.inputs.iter().enumerate() {
            put(VarBlock::Input(j), u);
        }
        match &self.artificial {
            Artificial::Steady { x_a, u_a } => {
                put(VarBlock::Xa, x_a);
                put(VarBlock::Ua, u_a);
            }
            Artificial::Harmonic(h) => {
                put(VarBlock::Xe, &h.x_e);
                put(VarBlock::Xs, &h.x_s);
                put(VarBlock::Xc, &h.x_c);
                put(VarBlock::Ue, &h.u_e);
                put(VarBlock::Us, &h.u_s);
                put(VarBlock::Uc, &h.u_c);
            }
        }
        x
    }
}

/// Largest violation of every constraint except the initial condition:
/// dynamics, stage boxes, terminal condition and the artificial-reference
/// constraints (steady state and tightened box, or coefficient dynamics and
/// amplitude cones).
pub fn feasibility_residual(plant: &Plant, sol: &FeasibleSolution) -> f64 {
    let model = &plant.model;
    let cons = &plant.constraints;
    let horizon = sol.horizon();
    let mut res = 0.0f64;
    for j in 0..horizon {
        res = res.max((&sol.states[j + 1] - model.step(&sol.states[j], &sol.inputs[j])).amax());
        let z = model.c() * &sol.states[j] + model.d() * &sol.inputs[j];
        res = res.max(cons.violation(&z));
    }
    let lo = cons.z_min_tight();
    let hi = cons.z_max_tight();
    match &sol.artificial {
        Artificial::Steady { x_a, u_a } => {
            res = res.max((&sol.states[horizon] - x_a).amax());
            res = res.max((x_a - model.step(x_a, u_a)).amax());
            let z = model.c() * x_a + model.d() * u_a;
            for i in 0..z.len() {
                res = res.max(lo[i] - z[i]).max(z[i] - hi[i]);
            }
        }
        Artificial::Harmonic(h) => {
            res = res.max((&sol.states[horizon] - &h.x_e - &h.x_c).amax());
            res = res.max(harmonic_dynamics_residual(model, h));
            let (z_e, z_s, z_c) = h.outputs(model);
            for i in 0..z_e.len() {
                let amp = z_s[i].hypot(z_c[i]);
                res = res.max(amp - (z_e[i] - lo[i])).max(amp - (hi[i] - z_e[i]));
            }
        }
    }
    res
}

/// Recovers the named quantities from a solver iterate and checks every
/// constraint of `program` to `tol`.
pub fn extract_solution(program: &ConeProgram, x: &[f64], tol: f64) -> Result<FeasibleSolution, FormulationError> {
    let layout = &program.layout;
    if x.len() != layout.len() {
        return Err(FormulationError::Dimension(format!(
            "iterate has {} entries, program {}",
            x.len(),
            layout.len()
        )));
    }
    let residual = program.max_violation(x);
    if !(residual <= tol) {
        return Err(FormulationError::ResidualTooLarge { residual, tol });
    }
    let mut states = Vec::new();
    while let Some(r) = layout.range(VarBlock::State(states.len())) {
        states.push(DVector::from_column_slice(&x[r]));
    }
    let mut inputs = Vec::new();
    while let Some(r) = layout.range(VarBlock::Input(inputs.len())) {
        inputs.push(DVector::from_column_slice(&x[r]));
    }
    if states.is_empty() || states.len() != inputs.len() + 1 {
        return Err(FormulationError::Dimension("program has no stage layout".into()));
    }
    let artificial = if layout.contains(VarBlock::Xa) {
        Artificial::Steady {
            x_a: layout.slice(VarBlock::Xa, x),
            u_a: layout.slice(VarBlock::Ua, x),
        }
    } else {
        let w = program
            .harmonic_frequency
            .ok_or_else(|| FormulationError::Dimension("harmonic program without frequency".into()))?;
        Artificial::Harmonic(HarmonicReference {
            x_e: layout.slice(VarBlock::Xe, x),
            x_s: layout.slice(VarBlock::Xs, x),
            x_c: layout.slice(VarBlock::Xc, x),
            u_e: layout.slice(VarBlock::Ue, x),
            u_s: layout.slice(VarBlock::Us, x),
            u_c: layout.slice(VarBlock::Uc, x),
            w,
            horizon: inputs.len(),
        })
    };
    Ok(FeasibleSolution {
        states,
        inputs,
        artificial,
        objective: program.objective(x),
    })
}

/// Candidate solution for the successor state `A x_0 + B u_0`: inputs moved
/// one step forward, the artificial reference's own input appended at the end,
/// states re-simulated and the harmonic advanced by one sample.
pub fn shift_solution(
    plant: &Plant,
    params: &ControllerParams,
    reference: &Reference,
    sol: &FeasibleSolution,
    tol: f64,
) -> Result<FeasibleSolution, FormulationError> {
    let residual = feasibility_residual(plant, sol);
    if !(residual <= tol) {
        return Err(FormulationError::InfeasibleInput { residual, tol });
    }
    let model = &plant.model;
    let horizon = sol.horizon();
    let (artificial, tail_input) = match &sol.artificial {
        Artificial::Steady { u_a, .. } => (sol.artificial.clone(), u_a.clone()),
        Artificial::Harmonic(h) => {
            let (u_s, u_c) = crate::harmonic::rotate_coeffs(&h.u_s, &h.u_c, h.w);
            let shifted = HarmonicReference {
                x_e: model.step(&h.x_e, &h.u_e),
                x_s: model.step(&h.x_s, &h.u_s),
                x_c: model.step(&h.x_c, &h.u_c),
                u_e: h.u_e.clone(),
                u_s,
                u_c,
                w: h.w,
                horizon: h.horizon,
            };
            (Artificial::Harmonic(shifted), &h.u_e + &h.u_c)
        }
    };
    let mut inputs: Vec<DVector<f64>> = sol.inputs[1..].to_vec();
    inputs.push(tail_input);
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(model.step(&sol.states[0], &sol.inputs[0]));
    for j in 0..horizon {
        let next = model.step(&states[j], &inputs[j]);
        states.push(next);
    }
    let mut shifted = FeasibleSolution {
        states,
        inputs,
        artificial,
        objective: 0.0,
    };
    shifted.objective = shifted.cost(params, reference);
    Ok(shifted)
}
