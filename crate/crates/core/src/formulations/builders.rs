//! Program builders. Variables are laid out as `x_0, u_0, x_1, u_1, …, x_N`
//! followed by the artificial reference, which keeps the KKT matrix banded.

use nalgebra::{DMatrix, DVector};

use super::program::{Affine, ConeProgram, ProgramBuilder, VarBlock, VariableLayout};
use super::{ControllerKind, ControllerParams, FormulationError};
use crate::harmonic::Reference;
use crate::model::Plant;

fn stage_layout(n: usize, m: usize, horizon: usize, tail: &[(VarBlock, usize)]) -> VariableLayout {
    let mut blocks = Vec::with_capacity(2 * horizon + 1 + tail.len());
    for j in 0..horizon {
        blocks.push((VarBlock::State(j), n));
        blocks.push((VarBlock::Input(j), m));
    }
    blocks.push((VarBlock::State(horizon), n));
    blocks.extend_from_slice(tail);
    VariableLayout::contiguous(&blocks)
}

/// Rows `Σ_k c_k M_k v_k + offset`, with `v_k` the block starting at `start_k`.
fn linear_rows(terms: &[(usize, &DMatrix<f64>, f64)], offset: &DVector<f64>) -> Vec<Affine> {
    (0..offset.len())
        .map(|r| {
            let mut e = Affine::constant(offset[r]);
            for &(start, mat, coef) in terms {
                for c in 0..mat.ncols() {
                    e = e.add(start + c, coef * mat[(r, c)]);
                }
            }
            e
        })
        .collect()
}

fn check_inputs(plant: &Plant, params: &ControllerParams, reference: &Reference, x0: Option<&DVector<f64>>) -> Result<(), FormulationError> {
    params.check_dims(&plant.model)?;
    if params.horizon == 0 {
        return Err(FormulationError::InvalidParams("horizon must be at least 1".into()));
    }
    let (n, m) = (plant.model.n(), plant.model.m());
    if reference.x.len() != n || reference.u.len() != m {
        return Err(FormulationError::Dimension("reference does not match the model".into()));
    }
    if let Some(x0) = x0 {
        if x0.len() != n {
            return Err(FormulationError::Dimension(format!("x0 has {} entries, expected {n}", x0.len())));
        }
    }
    Ok(())
}

/// Initial condition, dynamics and stage boxes shared by both controllers.
fn add_stage_constraints(pb: &mut ProgramBuilder, plant: &Plant, horizon: usize, x0: &DVector<f64>) {
    let model = &plant.model;
    let (n, nz) = (model.n(), model.nz());
    let eye = DMatrix::identity(n, n);
    let layout = pb.layout().clone();
    let xs = |j| layout.expect(VarBlock::State(j)).start;
    let us = |j| layout.expect(VarBlock::Input(j)).start;

    for e in linear_rows(&[(xs(0), &eye, 1.0)], &-x0) {
        pb.equality(e);
    }
    for j in 0..horizon {
        let terms = [(xs(j + 1), &eye, 1.0), (xs(j), model.a(), -1.0), (us(j), model.b(), -1.0)];
        for e in linear_rows(&terms, &DVector::zeros(n)) {
            pb.equality(e);
        }
    }
    let z_min = plant.constraints.z_min();
    let z_max = plant.constraints.z_max();
    for j in 0..horizon {
        let terms = [(xs(j), model.c(), 1.0), (us(j), model.d(), 1.0)];
        for e in linear_rows(&terms, &-z_max) {
            pb.nonpositive(e);
        }
        let terms = [(xs(j), model.c(), -1.0), (us(j), model.d(), -1.0)];
        for e in linear_rows(&terms, z_min) {
            pb.nonpositive(e);
        }
    }
    debug_assert_eq!(z_min.len(), nz);
}

/// Coefficient dynamics and the amplitude cones of a harmonic reference.
fn add_harmonic_constraints(pb: &mut ProgramBuilder, plant: &Plant, w: f64) {
    let model = &plant.model;
    let (n, nz) = (model.n(), model.nz());
    let eye = DMatrix::identity(n, n);
    let l = pb.layout().clone();
    let [xe, xs, xc, ue, us, uc] = [VarBlock::Xe, VarBlock::Xs, VarBlock::Xc, VarBlock::Ue, VarBlock::Us, VarBlock::Uc]
        .map(|b| l.expect(b).start);
    let (sw, cw) = w.sin_cos();
    let zero = DVector::zeros(n);

    // x_e = A x_e + B u_e
    for e in linear_rows(&[(xe, &eye, 1.0), (xe, model.a(), -1.0), (ue, model.b(), -1.0)], &zero) {
        pb.equality(e);
    }
    // x_s cos w − x_c sin w = A x_s + B u_s
    for e in linear_rows(
        &[(xs, &eye, cw), (xc, &eye, -sw), (xs, model.a(), -1.0), (us, model.b(), -1.0)],
        &zero,
    ) {
        pb.equality(e);
    }
    // x_s sin w + x_c cos w = A x_c + B u_c
    for e in linear_rows(
        &[(xs, &eye, sw), (xc, &eye, cw), (xc, model.a(), -1.0), (uc, model.b(), -1.0)],
        &zero,
    ) {
        pb.equality(e);
    }

    let zero_z = DVector::zeros(nz);
    let z_e = linear_rows(&[(xe, model.c(), 1.0), (ue, model.d(), 1.0)], &zero_z);
    let z_s = linear_rows(&[(xs, model.c(), 1.0), (us, model.d(), 1.0)], &zero_z);
    let z_c = linear_rows(&[(xc, model.c(), 1.0), (uc, model.d(), 1.0)], &zero_z);
    let lo = plant.constraints.z_min_tight();
    let hi = plant.constraints.z_max_tight();
    for i in 0..nz {
        // ‖(z_s, z_c)‖ ≤ z_e − ẑ_m
        let mut below = z_e[i].clone();
        below.offset -= lo[i];
        pb.second_order(vec![below, z_s[i].clone(), z_c[i].clone()]);
        // ‖(z_s, z_c)‖ ≤ ẑ_M − z_e
        let mut above = z_e[i].clone().scaled(-1.0);
        above.offset += hi[i];
        pb.second_order(vec![above, z_s[i].clone(), z_c[i].clone()]);
    }
}

/// Harmonic offset cost on the `Xe … Uc` blocks.
fn add_harmonic_offset_cost(pb: &mut ProgramBuilder, params: &ControllerParams, reference: &Reference) {
    let l = pb.layout().clone();
    let at = |b| l.expect(b).start;
    let (n, m) = (reference.x.len(), reference.u.len());
    pb.add_weighted_square(&[(at(VarBlock::Xe), 1.0)], &params.t_e, &reference.x);
    pb.add_weighted_square(&[(at(VarBlock::Ue), 1.0)], &params.s_e, &reference.u);
    pb.add_weighted_square(&[(at(VarBlock::Xs), 1.0)], &params.t_h, &DVector::zeros(n));
    pb.add_weighted_square(&[(at(VarBlock::Xc), 1.0)], &params.t_h, &DVector::zeros(n));
    pb.add_weighted_square(&[(at(VarBlock::Us), 1.0)], &params.s_h, &DVector::zeros(m));
    pb.add_weighted_square(&[(at(VarBlock::Uc), 1.0)], &params.s_h, &DVector::zeros(m));
}

fn harmonic_blocks(n: usize, m: usize) -> [(VarBlock, usize); 6] {
    [
        (VarBlock::Xe, n),
        (VarBlock::Xs, n),
        (VarBlock::Xc, n),
        (VarBlock::Ue, m),
        (VarBlock::Us, m),
        (VarBlock::Uc, m),
    ]
}

/// MPC for tracking: terminal equality to an artificial steady state
/// `(x_a, u_a)` inside the tightened box.
pub fn build_mpct(plant: &Plant, params: &ControllerParams, reference: &Reference, x0: &DVector<f64>) -> Result<ConeProgram, FormulationError> {
    check_inputs(plant, params, reference, Some(x0))?;
    let model = &plant.model;
    let (n, m, horizon) = (model.n(), model.m(), params.horizon);
    let layout = stage_layout(n, m, horizon, &[(VarBlock::Xa, n), (VarBlock::Ua, m)]);
    let xa = layout.expect(VarBlock::Xa).start;
    let ua = layout.expect(VarBlock::Ua).start;
    let mut pb = ProgramBuilder::new(layout.clone());
    add_stage_constraints(&mut pb, plant, horizon, x0);

    let eye = DMatrix::identity(n, n);
    let zero = DVector::zeros(n);
    let xn = layout.expect(VarBlock::State(horizon)).start;
    for e in linear_rows(&[(xn, &eye, 1.0), (xa, &eye, -1.0)], &zero) {
        pb.equality(e);
    }
    for e in linear_rows(&[(xa, &eye, 1.0), (xa, model.a(), -1.0), (ua, model.b(), -1.0)], &zero) {
        pb.equality(e);
    }
    let z_terms_pos = [(xa, model.c(), 1.0), (ua, model.d(), 1.0)];
    let z_terms_neg = [(xa, model.c(), -1.0), (ua, model.d(), -1.0)];
    for e in linear_rows(&z_terms_pos, &-plant.constraints.z_max_tight()) {
        pb.nonpositive(e);
    }
    for e in linear_rows(&z_terms_neg, &plant.constraints.z_min_tight()) {
        pb.nonpositive(e);
    }

    for j in 0..horizon {
        let xj = layout.expect(VarBlock::State(j)).start;
        let uj = layout.expect(VarBlock::Input(j)).start;
        pb.add_weighted_square(&[(xj, 1.0), (xa, -1.0)], &params.q, &zero);
        pb.add_weighted_square(&[(uj, 1.0), (ua, -1.0)], &params.r, &DVector::zeros(m));
    }
    pb.add_weighted_square(&[(xa, 1.0)], &params.t_a, &reference.x);
    pb.add_weighted_square(&[(ua, 1.0)], &params.s_a, &reference.u);
    Ok(pb.build()?)
}

/// Harmonic MPC: terminal state on a single-harmonic artificial reference
/// whose amplitude envelope lies inside the tightened box.
pub fn build_hmpc(plant: &Plant, params: &ControllerParams, reference: &Reference, x0: &DVector<f64>) -> Result<ConeProgram, FormulationError> {
    check_inputs(plant, params, reference, Some(x0))?;
    if !(params.w > 0.0 && params.w.is_finite()) {
        return Err(FormulationError::InvalidParams(format!("w must be positive, got {}", params.w)));
    }
    let model = &plant.model;
    let (n, m, horizon) = (model.n(), model.m(), params.horizon);
    let layout = stage_layout(n, m, horizon, &harmonic_blocks(n, m));
    let mut pb = ProgramBuilder::new(layout.clone());
    add_stage_constraints(&mut pb, plant, horizon, x0);

    let eye = DMatrix::identity(n, n);
    let at = |b| layout.expect(b).start;
    let (xe, xs, xc, ue, us, uc) = (
        at(VarBlock::Xe),
        at(VarBlock::Xs),
        at(VarBlock::Xc),
        at(VarBlock::Ue),
        at(VarBlock::Us),
        at(VarBlock::Uc),
    );
    // x_N = x_e + x_c
    let terminal = [(at(VarBlock::State(horizon)), &eye, 1.0), (xe, &eye, -1.0), (xc, &eye, -1.0)];
    for e in linear_rows(&terminal, &DVector::zeros(n)) {
        pb.equality(e);
    }
    add_harmonic_constraints(&mut pb, plant, params.w);

    for j in 0..horizon {
        let (s, c) = (params.w * (j as f64 - horizon as f64)).sin_cos();
        let xj = at(VarBlock::State(j));
        let uj = at(VarBlock::Input(j));
        pb.add_weighted_square(&[(xj, 1.0), (xe, -1.0), (xs, -s), (xc, -c)], &params.q, &DVector::zeros(n));
        pb.add_weighted_square(&[(uj, 1.0), (ue, -1.0), (us, -s), (uc, -c)], &params.r, &DVector::zeros(m));
    }
    add_harmonic_offset_cost(&mut pb, params, reference);
    let mut program = pb.build()?;
    program.harmonic_frequency = Some(params.w);
    Ok(program)
}

/// Dispatches on the controller kind.
pub fn build(
    kind: ControllerKind,
    plant: &Plant,
    params: &ControllerParams,
    reference: &Reference,
    x0: &DVector<f64>,
) -> Result<ConeProgram, FormulationError> {
    match kind {
        ControllerKind::Mpct => build_mpct(plant, params, reference, x0),
        ControllerKind::Hmpc => build_hmpc(plant, params, reference, x0),
    }
}

/// Offset-cost minimization over admissible harmonic references, the
/// subproblem whose optimum defines `V_h°`.
pub fn build_artificial_reference(plant: &Plant, params: &ControllerParams, reference: &Reference) -> Result<ConeProgram, FormulationError> {
    check_inputs(plant, params, reference, None)?;
    let (n, m) = (plant.model.n(), plant.model.m());
    let mut pb = ProgramBuilder::new(VariableLayout::contiguous(&harmonic_blocks(n, m)));
    add_harmonic_constraints(&mut pb, plant, params.w);
    add_harmonic_offset_cost(&mut pb, params, reference);
    let mut program = pb.build()?;
    program.harmonic_frequency = Some(params.w);
    Ok(program)
}
