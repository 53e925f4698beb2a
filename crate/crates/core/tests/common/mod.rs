//! Fixtures shared by the integration tests.

#![allow(dead_code)]

use hmpc::formulations::{ConeProgram, VariableLayout};
use hmpc::harmonic::Reference;
use hmpc::model::Plant;
use hmpc::solver::cones::Cone;
use hmpc::solver::sparse::CscMatrix;
use hmpc::solver::{solve, SolveStatus, SolverSettings};
use hmpc::formulations::{build_hmpc, ControllerParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Set-point of the benchmark run.
pub fn benchmark_reference() -> Reference {
    position_reference(1.8, 1.4)
}

/// Ball at rest at `(p1, p2)`: an admissible steady state for any position.
pub fn position_reference(p1: f64, p2: f64) -> Reference {
    let mut x = DVector::zeros(8);
    x[0] = p1;
    x[4] = p2;
    Reference::new(x, DVector::zeros(2))
}

/// Uniform draw from a box around the origin that extends past the
/// constraint set, so that both feasible and infeasible states occur.
pub fn random_state(rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut x = DVector::zeros(8);
    for axis in 0..2 {
        let o = 4 * axis;
        x[o] = rng.gen_range(-1.0..3.0);
        x[o + 1] = rng.gen_range(-0.4..0.4);
        x[o + 2] = rng.gen_range(-0.3..0.3);
        x[o + 3] = rng.gen_range(-0.2..0.2);
    }
    x
}

/// Rejection-samples `count` initial states for which the HMPC problem is
/// feasible. Returns the states and the number of draws needed.
pub fn feasible_starts(plant: &Plant, params: &ControllerParams, reference: &Reference, count: usize, seed: u64) -> (Vec<DVector<f64>>, usize) {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(count);
    let mut draws = 0;
    while out.len() < count {
        draws += 1;
        let x0 = random_state(&mut r);
        if plant.constraints.violation(&(plant.model.c() * &x0)) > 0.0 {
            continue;
        }
        let program = build_hmpc(plant, params, reference, &x0).expect("build");
        let status = solve(&program, &SolverSettings::default(), None).expect("solve").report.status;
        if status == SolveStatus::Solved {
            out.push(x0);
        }
    }
    (out, draws)
}

/// Random conic program with a known primal-dual optimum.
pub struct PlantedProgram {
    pub program: ConeProgram,
    pub x_star: Vec<f64>,
    pub objective: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let a: f64 = rng.gen_range(f64::EPSILON..1.0);
    let b: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * a.ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos()
}

/// Builds `min ½xᵀPx + qᵀx s.t. Ax + s = b, s ∈ K` around a chosen
/// `(x*, s*, y*)` satisfying the KKT conditions, so `x*` is optimal.
pub fn planted_program(rng: &mut ChaCha8Rng) -> PlantedProgram {
    let n = rng.gen_range(2..=20);
    let rank = rng.gen_range(0..=n);
    let n_eq = rng.gen_range(0..=n / 2);
    let n_pos = rng.gen_range(0..=n);
    let n_soc = rng.gen_range(0..=3usize);

    let mf = DMatrix::from_fn(n, rank, |_, _| normal(rng));
    let p = &mf * mf.transpose();
    let mut s = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n_eq {
        s.push(0.0);
        y.push(normal(rng));
    }
    for _ in 0..n_pos {
        match rng.gen_range(0..3) {
            0 => {
                s.push(0.0);
                y.push(rng.gen_range(0.1..2.0));
            }
            1 => {
                s.push(rng.gen_range(0.1..2.0));
                y.push(0.0);
            }
            _ => {
                // weakly active
                s.push(0.0);
                y.push(0.0);
            }
        }
    }
    for _ in 0..n_soc {
        let (a, b) = (normal(rng), normal(rng));
        let r = a.hypot(b);
        match rng.gen_range(0..3) {
            0 => {
                s.extend([r + rng.gen_range(0.1..1.0), a, b]);
                y.extend([0.0, 0.0, 0.0]);
            }
            1 => {
                // both on the boundary, opposite rays
                let mu = rng.gen_range(0.1..2.0);
                s.extend([r, a, b]);
                y.extend([mu * r, -mu * a, -mu * b]);
            }
            _ => {
                s.extend([0.0, 0.0, 0.0]);
                y.extend([r + rng.gen_range(0.1..1.0), a, b]);
            }
        }
    }
    let m = s.len();
    let a = DMatrix::from_fn(m, n, |_, _| normal(rng));
    let x_star = DVector::from_fn(n, |_, _| normal(rng));
    let y = DVector::from_vec(y);
    let q = -(&p * &x_star) - a.transpose() * &y;
    let b = &a * &x_star + DVector::from_vec(s);

    let mut cones = Vec::new();
    if n_eq > 0 {
        cones.push(Cone::Zero(n_eq));
    }
    if n_pos > 0 {
        cones.push(Cone::Nonnegative(n_pos));
    }
    cones.extend(std::iter::repeat(Cone::SecondOrder(3)).take(n_soc));

    let p_upper: Vec<_> = (0..n).flat_map(|j| (0..=j).map(move |i| (i, j))).map(|(i, j)| (i, j, p[(i, j)])).collect();
    let a_trip: Vec<_> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (i, j, a[(i, j)])).collect();
    let program = ConeProgram::new(
        CscMatrix::from_triplets(n, n, &p_upper),
        q.as_slice().to_vec(),
        0.0,
        CscMatrix::from_triplets(m, n, &a_trip),
        b.as_slice().to_vec(),
        cones,
        VariableLayout::free(n),
    )
    .expect("planted program");
    let objective = program.objective(x_star.as_slice());
    PlantedProgram {
        program,
        x_star: x_star.as_slice().to_vec(),
        objective,
    }
}
