//! Benchmark comparison of MPCT with horizons 5, 8 and 15 against HMPC with
//! horizon 5 on the ball-and-plate set-point change.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use hmpc::formulations::{ControllerKind, ControllerParams};
use hmpc::harmonic::Reference;
use hmpc::model::Plant;
use hmpc::sim::ReferenceSchedule;
use hmpc::solver::SolverSettings;
use nalgebra::DVector;
use serde::Serialize;

use crate::error::CliError;
use crate::runner::{run_jobs, Job, RunSummary};
use crate::scenario::Resolved;

pub const N_ITER: usize = 50;
/// Ball at rest at `(1.8, 1.4)`.
pub const SET_POINT: [f64; 8] = [1.8, 0.0, 0.0, 0.0, 1.4, 0.0, 0.0, 0.0];

/// Controller, horizon and published performance index.
pub const CASES: [(ControllerKind, usize, f64); 4] = [
    (ControllerKind::Mpct, 5, 2014.1),
    (ControllerKind::Mpct, 8, 844.1),
    (ControllerKind::Mpct, 15, 488.9),
    (ControllerKind::Hmpc, 5, 511.1),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamsEcho {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub t_e: Vec<f64>,
    pub s_e: Vec<f64>,
    pub t_h: Vec<f64>,
    pub s_h: Vec<f64>,
    pub t_a: Vec<f64>,
    pub s_a: Vec<f64>,
    pub w: f64,
    pub x_r: Vec<f64>,
    pub n_iter: usize,
}

impl ParamsEcho {
    /// Diagonals of the weights actually handed to the controllers.
    pub fn from_params(p: &ControllerParams) -> Self {
        let diag = |m: &nalgebra::DMatrix<f64>| m.diagonal().iter().copied().collect();
        Self {
            q: diag(&p.q),
            r: diag(&p.r),
            t_e: diag(&p.t_e),
            s_e: diag(&p.s_e),
            t_h: diag(&p.t_h),
            s_h: diag(&p.s_h),
            t_a: diag(&p.t_a),
            s_a: diag(&p.s_a),
            w: p.w,
            x_r: SET_POINT.to_vec(),
            n_iter: N_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub controller: ControllerKind,
    pub horizon: usize,
    pub phi: f64,
    pub published: f64,
    pub relative_difference: f64,
    pub mean_solve_ms: f64,
    pub max_solve_ms: f64,
    pub total_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub params: ParamsEcho,
    pub rows: Vec<Row>,
    pub wall_secs: f64,
}

impl Report {
    /// `Φ(MPCT 5) > Φ(MPCT 8) > Φ(HMPC 5) > 0` and `Φ(MPCT 15) < Φ(MPCT 8)`.
    pub fn ordering_holds(&self) -> bool {
        let phi = |kind, n| self.rows.iter().find(|r| r.controller == kind && r.horizon == n).map(|r| r.phi);
        match (
            phi(ControllerKind::Mpct, 5),
            phi(ControllerKind::Mpct, 8),
            phi(ControllerKind::Mpct, 15),
            phi(ControllerKind::Hmpc, 5),
        ) {
            (Some(m5), Some(m8), Some(m15), Some(h5)) => m5 > m8 && m8 > h5 && h5 > 0.0 && m15 < m8,
            _ => false,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let list = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "Parameters");
        for (name, v) in [
            ("Q", &p.q),
            ("R", &p.r),
            ("T_e", &p.t_e),
            ("S_e", &p.s_e),
            ("T_h", &p.t_h),
            ("S_h", &p.s_h),
            ("T_a", &p.t_a),
            ("S_a", &p.s_a),
        ] {
            let _ = writeln!(s, "  {name:<4} diag({})", list(v));
        }
        let _ = writeln!(s, "  w    {}", p.w);
        let _ = writeln!(s, "  x_r  ({})", list(&p.x_r));
        let _ = writeln!(s, "  N_iter {}", p.n_iter);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<10} {:>3} {:>10} {:>10} {:>8} {:>9} {:>9} {:>8}",
            "controller", "N", "Phi", "published", "diff", "mean ms", "max ms", "iters"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:>3} {:>10.2} {:>10.1} {:>+7.2}% {:>9.3} {:>9.3} {:>8}",
                r.controller.to_string(),
                r.horizon,
                r.phi,
                r.published,
                100.0 * r.relative_difference,
                r.mean_solve_ms,
                r.max_solve_ms,
                r.total_iterations
            );
        }
        let _ = writeln!(s, "ordering {}", if self.ordering_holds() { "reproduced" } else { "NOT reproduced" });
        let _ = writeln!(s, "wall time {:.1} s", self.wall_secs);
        s
    }
}

fn case(kind: ControllerKind, horizon: usize, out: &std::path::Path) -> Job {
    let reference = Reference::new(DVector::from_column_slice(&SET_POINT), DVector::zeros(2));
    let name = format!("{}_n{horizon}", kind.to_string().to_lowercase());
    let params = ControllerParams::ball_plate(horizon);
    Job {
        w: params.w,
        dir: out.join(&name),
        scenario: Resolved {
            name,
            plant: Plant::ball_plate(),
            kind,
            params,
            x0: DVector::zeros(8),
            schedule: ReferenceSchedule::constant(reference),
            n_iter: N_ITER,
            output_dir: None,
            sweep_w: Vec::new(),
            snapshots: Vec::new(),
            settings: SolverSettings::default(),
        },
        snapshots: vec![15],
        solver_log: false,
    }
}

/// Runs the four cases on up to `threads` threads, writing each run's
/// artifacts under `out` and the report to `out/table2.json`.
pub fn run_table2(out: &std::path::Path, threads: usize) -> Result<Report, CliError> {
    let start = Instant::now();
    let jobs: Vec<Job> = CASES.iter().map(|(k, n, _)| case(*k, *n, out)).collect();
    let results: Vec<RunSummary> = run_jobs(&jobs, threads).into_iter().collect::<Result<_, _>>()?;
    let rows = CASES
        .iter()
        .zip(&results)
        .map(|((kind, horizon, published), s)| Row {
            controller: *kind,
            horizon: *horizon,
            phi: s.phi,
            published: *published,
            relative_difference: (s.phi - published) / published,
            mean_solve_ms: s.mean_solve_ms,
            max_solve_ms: s.max_solve_ms,
            total_iterations: s.total_iterations,
        })
        .collect();
    let report = Report {
        params: ParamsEcho::from_params(&ControllerParams::ball_plate(5)),
        rows,
        wall_secs: start.elapsed().as_secs_f64(),
    };
    crate::runner::write_json(&PathBuf::from(out).join("table2.json"), &report)?;
    Ok(report)
}
