mod common;

use hmpc::formulations::{build_hmpc, ConeProgram, ControllerParams, VariableLayout};
use hmpc::model::Plant;
use hmpc::solver::cones::Cone;
use hmpc::solver::sparse::CscMatrix;
use hmpc::solver::{linear_system_factor, project_soc, solve, SolveStatus, Solver, SolverSettings, WarmStart};
use nalgebra::DVector;
use rand::Rng;

use common::{benchmark_reference, planted_program, rng};

fn tight() -> SolverSettings {
    SolverSettings::with_tolerance(1e-9)
}

type Triplets<'a> = &'a [(usize, usize, f64)];

/// `min ½xᵀPx + qᵀx + c s.t. Ax + s = b, s ∈ K` from dense-ish triplets.
fn program(n: usize, p_upper: Triplets, q: &[f64], constant: f64, a: Triplets, b: &[f64], cones: Vec<Cone>) -> ConeProgram {
    ConeProgram::new(
        CscMatrix::from_triplets(n, n, p_upper),
        q.to_vec(),
        constant,
        CscMatrix::from_triplets(b.len(), n, a),
        b.to_vec(),
        cones,
        VariableLayout::free(n),
    )
    .unwrap()
}

#[test]
fn lower_bound_is_active() {
    // min x² s.t. x ≥ 1
    let prog = program(1, &[(0, 0, 2.0)], &[0.0], 0.0, &[(0, 0, -1.0)], &[-1.0], vec![Cone::Nonnegative(1)]);
    let out = solve(&prog, &tight(), None).unwrap();
    assert_eq!(out.report.status, SolveStatus::Solved);
    assert!((out.x[0] - 1.0).abs() < 1e-7);
    assert!((out.report.objective - 1.0).abs() < 1e-7);
    // multiplier of x ≥ 1 is 2x = 2
    assert!((out.y[0] - 2.0).abs() < 1e-6, "{:?}", out.y);
}

#[test]
fn second_order_cone_gives_the_norm() {
    // min t s.t. (t, 3, 4) ∈ SOC
    let prog = program(1, &[], &[1.0], 0.0, &[(0, 0, -1.0)], &[0.0, 3.0, 4.0], vec![Cone::SecondOrder(3)]);
    let out = solve(&prog, &tight(), None).unwrap();
    assert_eq!(out.report.status, SolveStatus::Solved);
    assert!((out.x[0] - 5.0).abs() < 1e-6);
}

#[test]
fn equality_constrained_least_squares() {
    // min ‖x − (1, 2, 3)‖² s.t. x1 + x2 + x3 = 0: shift every entry by −2
    let p = [(0, 0, 2.0), (1, 1, 2.0), (2, 2, 2.0)];
    let a = [(0, 0, 1.0), (0, 1, 1.0), (0, 2, 1.0)];
    let prog = program(3, &p, &[-2.0, -4.0, -6.0], 14.0, &a, &[0.0], vec![Cone::Zero(1)]);
    let out = solve(&prog, &tight(), None).unwrap();
    assert_eq!(out.report.status, SolveStatus::Solved);
    for (x, want) in out.x.iter().zip([-1.0, 0.0, 1.0]) {
        assert!((x - want).abs() < 1e-7, "{:?}", out.x);
    }
    assert!((out.report.objective - 12.0).abs() < 1e-6);
}

#[test]
fn projection_examples() {
    assert_eq!(project_soc([5.0, 3.0, 4.0]), [5.0, 3.0, 4.0]);
    assert_eq!(project_soc([-5.0, 3.0, 4.0]), [0.0, 0.0, 0.0]);
    let p = project_soc([0.0, 3.0, 4.0]);
    for (a, b) in p.iter().zip([2.5, 1.5, 2.0]) {
        assert!((a - b).abs() < 1e-15, "{p:?}");
    }
}

#[test]
fn projection_is_a_nearest_point() {
    let mut r = rng(21);
    for _ in 0..500 {
        let v = [r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0)];
        let p = project_soc(v);
        assert!(p[1].hypot(p[2]) <= p[0] + 1e-12);
        let d = |a: [f64; 3]| ((a[0] - v[0]).powi(2) + (a[1] - v[1]).powi(2) + (a[2] - v[2]).powi(2)).sqrt();
        // no random cone point is closer
        for _ in 0..20 {
            let (a, b) = (r.gen_range(-3.0..3.0f64), r.gen_range(-3.0..3.0f64));
            let c = [a.hypot(b) + r.gen_range(0.0..1.0), a, b];
            assert!(d(p) <= d(c) + 1e-12);
        }
    }
}

#[test]
fn planted_programs_are_recovered() {
    let mut r = rng(31);
    for i in 0..30 {
        let planted = planted_program(&mut r);
        let out = solve(&planted.program, &tight(), None).unwrap();
        assert_eq!(out.report.status, SolveStatus::Solved, "program {i}");
        let scale = planted.objective.abs().max(1.0);
        assert!((out.report.objective - planted.objective).abs() <= 1e-6 * scale, "program {i}: {} vs {}", out.report.objective, planted.objective);
        assert!(planted.program.max_violation(&out.x) <= 1e-6, "program {i}");
    }
}

#[test]
fn cones_of_the_solution() {
    let mut r = rng(41);
    let planted = planted_program(&mut r);
    let out = solve(&planted.program, &tight(), None).unwrap();
    let mut y = out.y.clone();
    hmpc::solver::cones::project_dual(&planted.program.cones, &mut y);
    let gap = out.y.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(gap < 1e-7);
    let mut s = out.s.clone();
    hmpc::solver::cones::project(&planted.program.cones, &mut s);
    assert_eq!(s, out.s);
}

fn hmpc_program(x0: &DVector<f64>) -> ConeProgram {
    build_hmpc(&Plant::ball_plate(), &ControllerParams::ball_plate(5), &benchmark_reference(), x0).unwrap()
}

#[test]
fn repeated_solves_are_identical() {
    let prog = hmpc_program(&DVector::zeros(8));
    let a = solve(&prog, &SolverSettings::default(), None).unwrap();
    let b = solve(&prog, &SolverSettings::default(), None).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.report.iterations, b.report.iterations);
    assert_eq!(a.report.objective.to_bits(), b.report.objective.to_bits());
}

#[test]
fn warm_and_cold_starts_agree() {
    let settings = tight();
    let first = hmpc_program(&DVector::zeros(8));
    let mut solver = Solver::new(&first, &settings).unwrap();
    let prev = solver.solve(None).unwrap();
    assert_eq!(prev.report.status, SolveStatus::Solved);

    let mut x0 = DVector::zeros(8);
    x0[0] = 0.05;
    x0[1] = 0.02;
    let second = hmpc_program(&x0);
    solver.update_vectors(&second).unwrap();
    let warm = WarmStart {
        x: prev.x.clone(),
        y: Some(prev.y.clone()),
    };
    let w = solver.solve(Some(&warm)).unwrap();
    let c = solve(&second, &settings, None).unwrap();
    assert_eq!(w.report.status, SolveStatus::Solved);
    assert_eq!(c.report.status, SolveStatus::Solved);
    let rel = (w.report.objective - c.report.objective).abs() / c.report.objective.abs().max(1.0);
    assert!(rel < 1e-7, "{} vs {}", w.report.objective, c.report.objective);
}

#[test]
fn update_rejects_other_structures() {
    let prog = hmpc_program(&DVector::zeros(8));
    let mut solver = Solver::new(&prog, &SolverSettings::default()).unwrap();
    assert!(solver.update_q(&[0.0; 3]).is_err());
    assert!(solver.update_b(&[0.0; 3]).is_err());
    let other = build_hmpc(&Plant::ball_plate(), &ControllerParams::ball_plate(6), &benchmark_reference(), &DVector::zeros(8)).unwrap();
    assert!(solver.update_vectors(&other).is_err());
}

#[test]
fn regularization_is_required_for_singular_cost() {
    let prog = program(2, &[(0, 0, 1.0)], &[0.0, 0.0], 0.0, &[], &[], vec![]);
    assert!(linear_system_factor(&prog, 0.1, 0.0).is_err());
    let kkt = linear_system_factor(&prog, 0.1, 1e-6).unwrap();
    assert_eq!(kkt.dim(), 2);
}

#[test]
fn factorization_of_the_benchmark_problem() {
    let prog = hmpc_program(&DVector::zeros(8));
    let kkt = linear_system_factor(&prog, 0.1, 1e-6).unwrap();
    assert_eq!(kkt.dim(), prog.num_vars() + prog.num_rows());
    assert!(kkt.has_expected_inertia());
    assert!(kkt.nnz_l() > 0);
    assert_eq!(prog.cones.iter().filter(|c| matches!(c, Cone::SecondOrder(_))).count(), 12);
}

#[test]
fn infeasible_and_unbounded_programs() {
    // x ≤ −1 and x ≥ 1
    let prog = program(1, &[(0, 0, 1.0)], &[0.0], 0.0, &[(0, 0, 1.0), (1, 0, -1.0)], &[-1.0, -1.0], vec![Cone::Nonnegative(2)]);
    let out = solve(&prog, &SolverSettings::default(), None).unwrap();
    assert_eq!(out.report.status, SolveStatus::PrimalInfeasible);

    // min −x s.t. x ≥ 0
    let prog = program(2, &[], &[-1.0, 0.0], 0.0, &[(0, 0, -1.0)], &[0.0], vec![Cone::Nonnegative(1)]);
    let out = solve(&prog, &SolverSettings::default(), None).unwrap();
    assert_eq!(out.report.status, SolveStatus::DualInfeasible);
}

#[test]
fn iteration_limit_is_reported() {
    let prog = hmpc_program(&DVector::zeros(8));
    let settings = SolverSettings {
        max_iter: 3,
        ..tight()
    };
    let out = solve(&prog, &settings, None).unwrap();
    assert_eq!(out.report.status, SolveStatus::MaxIter);
    assert_eq!(out.report.iterations, 3);
}

#[test]
fn iteration_log_is_csv() {
    let prog = hmpc_program(&DVector::zeros(8));
    let mut buf = Vec::new();
    let out = Solver::new(&prog, &SolverSettings::default()).unwrap().solve_logged(None, Some(&mut buf)).unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(reader.headers().unwrap(), vec!["iter", "r_prim", "r_dual", "objective"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert!(!rows.is_empty());
    let last: usize = rows.last().unwrap()[0].parse().unwrap();
    assert!(last <= out.report.iterations);
    for row in &rows {
        for field in row.iter().skip(1) {
            assert!(field.parse::<f64>().unwrap().is_finite());
        }
    }
}
