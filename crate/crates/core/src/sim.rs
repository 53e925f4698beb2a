//! Closed-loop simulation of the linear plant under a receding-horizon law,
//! with the trace diagnostics used to assess the controllers.

use std::io::Write;

use nalgebra::DVector;

use crate::formulations::{self, extract_solution, shift_solution, ControllerKind, ControllerParams, FeasibleSolution, FormulationError};
use crate::harmonic::{optimal_artificial_reference, HarmonicError, Reference};
use crate::model::Plant;
use crate::solver::{SolveReport, SolveStatus, Solver, SolverError, SolverSettings, WarmStart};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("initial state is infeasible (solver status {0:?})")]
    InitialInfeasible(SolveStatus),
    #[error("step {k}: solver status {status:?}")]
    StepInfeasible { k: usize, status: SolveStatus },
    #[error("invalid reference schedule: {0}")]
    Schedule(String),
    #[error("step {0} is outside the trace")]
    IndexOutOfRange(usize),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Harmonic(#[from] HarmonicError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Piecewise-constant reference: entry `(k, r)` is active from step `k` on.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSchedule {
    entries: Vec<(usize, Reference)>,
}

impl ReferenceSchedule {
    pub fn constant(reference: Reference) -> Self {
        Self {
            entries: vec![(0, reference)],
        }
    }

    /// Steps must start at 0 and increase strictly.
    pub fn new(entries: Vec<(usize, Reference)>) -> Result<Self, SimError> {
        match entries.first() {
            None => return Err(SimError::Schedule("schedule is empty".into())),
            Some((k, _)) if *k != 0 => return Err(SimError::Schedule(format!("first entry starts at step {k}, not 0"))),
            _ => {}
        }
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(SimError::Schedule("steps must increase strictly".into()));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(usize, Reference)] {
        &self.entries
    }

    /// Index of the entry active at step `k`.
    pub fn index_at(&self, k: usize) -> usize {
        self.entries.iter().rposition(|(s, _)| *s <= k).unwrap_or(0)
    }

    pub fn at(&self, k: usize) -> &Reference {
        &self.entries[self.index_at(k)].1
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub settings: SolverSettings,
    /// Settings for the offset-cost subproblems that define `W`.
    pub reference_settings: SolverSettings,
    /// Constraint residual accepted on each solution; defaults to ten times
    /// the solver's primal termination threshold.
    pub validation_tol: Option<f64>,
    /// Warm start each step from the shifted previous solution.
    pub warm_start: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            settings: SolverSettings::default(),
            reference_settings: SolverSettings::with_tolerance(1e-9),
            validation_tol: None,
            warm_start: true,
        }
    }
}

/// Everything recorded at closed-loop step `k`.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub k: usize,
    pub x: DVector<f64>,
    /// Applied input `u_0*`.
    pub u: DVector<f64>,
    pub z: DVector<f64>,
    pub reference: Reference,
    pub v_star: f64,
    pub offset_cost: f64,
    /// `V*_k − V°` of the active reference.
    pub lyapunov: f64,
    pub report: SolveReport,
    pub solution: FeasibleSolution,
}

#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub kind: ControllerKind,
    pub params: ControllerParams,
    pub schedule: ReferenceSchedule,
    /// Steps `0 ..= N_iter`.
    pub steps: Vec<StepRecord>,
    /// State after the last recorded step.
    pub final_state: DVector<f64>,
    /// Optimal offset cost `V°` for each schedule entry.
    pub optimal_offset: Vec<f64>,
}

/// Runs `n_iter + 1` controller steps (`k = 0 ..= n_iter`) from `x0`.
pub fn run_closed_loop(
    plant: &Plant,
    params: &ControllerParams,
    kind: ControllerKind,
    schedule: &ReferenceSchedule,
    x0: &DVector<f64>,
    n_iter: usize,
    options: &SimOptions,
) -> Result<SimulationTrace, SimError> {
    run_closed_loop_logged(plant, params, kind, schedule, x0, n_iter, options, None)
}

/// [`run_closed_loop`] with an optional solver iteration log; each step's
/// rows are preceded by a `# step k` line.
#[allow(clippy::too_many_arguments)]
pub fn run_closed_loop_logged(
    plant: &Plant,
    params: &ControllerParams,
    kind: ControllerKind,
    schedule: &ReferenceSchedule,
    x0: &DVector<f64>,
    n_iter: usize,
    options: &SimOptions,
    mut log: Option<&mut dyn Write>,
) -> Result<SimulationTrace, SimError> {
    params.validate(&plant.model)?;
    let offset_params = match kind {
        ControllerKind::Mpct => params.with_steady_offset_weights(),
        ControllerKind::Hmpc => params.clone(),
    };
    let mut optimal_offset = Vec::with_capacity(schedule.entries().len());
    for (_, r) in schedule.entries() {
        let (_, v) = optimal_artificial_reference(plant, &offset_params, r, &options.reference_settings)?;
        optimal_offset.push(v);
    }

    let mut solver: Option<Solver> = None;
    let mut previous: Option<(FeasibleSolution, Vec<f64>)> = None;
    let mut x = x0.clone();
    let mut steps = Vec::with_capacity(n_iter + 1);
    for k in 0..=n_iter {
        let idx = schedule.index_at(k);
        let reference = &schedule.entries()[idx].1;
        let program = formulations::build(kind, plant, params, reference, &x)?;
        let solver = match solver.as_mut() {
            Some(s) => {
                s.update_vectors(&program)?;
                s
            }
            None => solver.insert(Solver::new(&program, &options.settings)?),
        };
        let warm = match (&previous, options.warm_start) {
            (Some((sol, y)), true) => {
                let shifted = shift_solution(plant, params, reference, sol, f64::INFINITY)?;
                Some(WarmStart {
                    x: shifted.to_vector(&program),
                    y: Some(y.clone()),
                })
            }
            _ => None,
        };
        if let Some(l) = log.as_deref_mut() {
            writeln!(l, "# step {k}")?;
        }
        let step_log = log.as_mut().map(|l| &mut **l as &mut dyn Write);
        let out = solver.solve_logged(warm.as_ref(), step_log)?;
        if out.report.status != SolveStatus::Solved {
            return Err(if k == 0 {
                SimError::InitialInfeasible(out.report.status)
            } else {
                SimError::StepInfeasible { k, status: out.report.status }
            });
        }
        let tol = options.validation_tol.unwrap_or(10.0 * out.report.primal_tolerance);
        let solution = extract_solution(&program, &out.x, tol)?;
        let u = solution.inputs[0].clone();
        let z = plant.model.c() * &x + plant.model.d() * &u;
        let offset_cost = solution.offset_cost(params, reference);
        let v_star = solution.objective;
        steps.push(StepRecord {
            k,
            x: x.clone(),
            u: u.clone(),
            z,
            reference: reference.clone(),
            v_star,
            offset_cost,
            lyapunov: v_star - optimal_offset[idx],
            report: out.report,
            solution: solution.clone(),
        });
        x = plant.model.step(&x, &u);
        previous = Some((solution, out.y));
    }
    Ok(SimulationTrace {
        kind,
        params: params.clone(),
        schedule: schedule.clone(),
        steps,
        final_state: x,
        optimal_offset,
    })
}

/// `Φ = Σ_{k=1}^{N_iter} ‖x_k − x_r‖²_Q + ‖u_k − u_r‖²_R`, pairing the state
/// at step `k` with the input applied at step `k`.
pub fn performance_index(trace: &SimulationTrace, q: &nalgebra::DMatrix<f64>, r: &nalgebra::DMatrix<f64>) -> f64 {
    trace
        .steps
        .iter()
        .skip(1)
        .map(|s| {
            let dx = &s.x - &s.reference.x;
            let du = &s.u - &s.reference.u;
            dx.dot(&(q * &dx)) + du.dot(&(r * &du))
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    /// `W_k = V*_k − V°`.
    pub w: Vec<f64>,
    /// `‖x_k − x_h0*‖`, distance to the artificial reference at `j = 0`.
    pub distance: Vec<f64>,
    /// `decreasing[k]` is `W_{k+1} < W_k + tol`.
    pub decreasing: Vec<bool>,
}

impl LyapunovReport {
    pub fn min_w(&self) -> f64 {
        self.w.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn lyapunov_check(trace: &SimulationTrace, tol: f64) -> LyapunovReport {
    let w: Vec<f64> = trace.steps.iter().map(|s| s.lyapunov).collect();
    let distance = trace
        .steps
        .iter()
        .map(|s| (&s.x - s.solution.reference_at(0).0).norm())
        .collect();
    let decreasing = w.windows(2).map(|p| p[1] < p[0] + tol).collect();
    LyapunovReport { w, distance, decreasing }
}

/// Past states, predicted trajectory and artificial reference at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub k: usize,
    pub past: Vec<DVector<f64>>,
    pub predicted_states: Vec<DVector<f64>>,
    pub predicted_inputs: Vec<DVector<f64>>,
    /// Artificial reference at `j = 0 ..= N`.
    pub reference_states: Vec<DVector<f64>>,
    pub reference_inputs: Vec<DVector<f64>>,
}

pub fn snapshot(trace: &SimulationTrace, k: usize) -> Result<Snapshot, SimError> {
    let step = trace.steps.get(k).ok_or(SimError::IndexOutOfRange(k))?;
    let sol = &step.solution;
    let (reference_states, reference_inputs) = (0..=sol.horizon()).map(|j| sol.reference_at(j)).unzip();
    Ok(Snapshot {
        k,
        past: trace.steps[..=k].iter().map(|s| s.x.clone()).collect(),
        predicted_states: sol.states.clone(),
        predicted_inputs: sol.inputs.clone(),
        reference_states,
        reference_inputs,
    })
}

impl Snapshot {
    /// Rows `series,index,x1..xn,u1..um`; `past` rows leave the inputs empty,
    /// as does the terminal predicted state.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let n = self.past[0].len();
        let m = self.predicted_inputs.first().map_or(0, DVector::len);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["series".to_string(), "index".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        w.write_record(&header)?;
        let mut row = |series: &str, idx: usize, x: &DVector<f64>, u: Option<&DVector<f64>>| -> Result<(), csv::Error> {
            let mut rec = vec![series.to_string(), idx.to_string()];
            rec.extend(x.iter().map(|v| v.to_string()));
            match u {
                Some(u) => rec.extend(u.iter().map(|v| v.to_string())),
                None => rec.extend(std::iter::repeat(String::new()).take(m)),
            }
            w.write_record(&rec)
        };
        for (i, x) in self.past.iter().enumerate() {
            row("past", i, x, None)?;
        }
        for (j, x) in self.predicted_states.iter().enumerate() {
            row("predicted", j, x, self.predicted_inputs.get(j))?;
        }
        for (j, x) in self.reference_states.iter().enumerate() {
            row("reference", j, x, self.reference_inputs.get(j))?;
        }
        w.flush()?;
        Ok(())
    }
}

impl SimulationTrace {
    /// Largest violation of the untightened output box along the closed loop.
    pub fn max_constraint_violation(&self, plant: &Plant) -> f64 {
        self.steps
            .iter()
            .map(|s| plant.constraints.violation(&s.z))
            .fold(0.0, f64::max)
    }

    pub fn total_solve_secs(&self) -> f64 {
        self.steps.iter().map(|s| s.report.solve_time_secs).sum()
    }

    /// Columns `k, x1..xn, u1..um, z1..znz, V_star, W, solve_iters`. Timing is
    /// kept out of this file so that it is reproducible byte for byte; see
    /// [`SimulationTrace::write_timing_csv`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let first = &self.steps[0];
        let (n, m, nz) = (first.x.len(), first.u.len(), first.z.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        header.extend((1..=nz).map(|i| format!("z{i}")));
        header.extend(["V_star", "W", "solve_iters"].map(String::from));
        w.write_record(&header)?;
        for s in &self.steps {
            let mut rec = vec![s.k.to_string()];
            rec.extend(s.x.iter().chain(s.u.iter()).chain(s.z.iter()).map(|v| v.to_string()));
            rec.push(s.v_star.to_string());
            rec.push(s.lyapunov.to_string());
            rec.push(s.report.iterations.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `k, solve_iters, solve_ms`.
    pub fn write_timing_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "solve_iters", "solve_ms"])?;
        for s in &self.steps {
            w.write_record([
                s.k.to_string(),
                s.report.iterations.to_string(),
                format!("{:.3}", s.report.solve_time_secs * 1e3),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
