//! Runs resolved scenarios and writes their artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hmpc::formulations::ControllerKind;
use hmpc::sim::{lyapunov_check, performance_index, run_closed_loop_logged, snapshot, SimOptions, SimulationTrace};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::scenario::Resolved;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Base directory; each scenario writes to `<out>/<name>`.
    pub out: Option<PathBuf>,
    /// Replaces the scenario's own sweep.
    pub sweep_w: Vec<f64>,
    /// Replaces the scenario's own snapshot steps.
    pub snapshots: Vec<usize>,
    pub solver_log: bool,
    pub jobs: usize,
}

/// One closed-loop run; a sweep produces one job per frequency.
#[derive(Debug, Clone)]
pub struct Job {
    pub scenario: Resolved,
    pub w: f64,
    pub dir: PathBuf,
    pub snapshots: Vec<usize>,
    pub solver_log: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub controller: ControllerKind,
    pub horizon: usize,
    pub w: f64,
    pub n_iter: usize,
    pub phi: f64,
    /// `‖x_{N_iter} − x_r‖` for the reference active at the last step.
    pub final_error: f64,
    pub max_constraint_violation: f64,
    pub min_lyapunov: f64,
    pub final_lyapunov: f64,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub mean_solve_ms: f64,
    pub max_solve_ms: f64,
    pub output_dir: PathBuf,
}

/// Directory label of a swept frequency.
pub fn sweep_label(w: f64) -> String {
    format!("w_{w:.4}")
}

pub fn scenario_dir(scenario: &Resolved, options: &RunOptions) -> PathBuf {
    match (&options.out, &scenario.output_dir) {
        (Some(base), _) => base.join(&scenario.name),
        (None, Some(dir)) => dir.clone(),
        (None, None) => Path::new("out").join(&scenario.name),
    }
}

pub fn expand(scenarios: &[Resolved], options: &RunOptions) -> Vec<Job> {
    let mut jobs = Vec::new();
    for s in scenarios {
        let dir = scenario_dir(s, options);
        let sweep = if options.sweep_w.is_empty() { &s.sweep_w } else { &options.sweep_w };
        let snapshots = if options.snapshots.is_empty() { s.snapshots.clone() } else { options.snapshots.clone() };
        let snapshots: Vec<usize> = snapshots.into_iter().filter(|k| *k <= s.n_iter).collect();
        let runs: Vec<(f64, PathBuf)> = if sweep.is_empty() {
            vec![(s.params.w, dir)]
        } else {
            sweep.iter().map(|&w| (w, dir.join(sweep_label(w)))).collect()
        };
        for (w, dir) in runs {
            jobs.push(Job {
                scenario: s.clone(),
                w,
                dir,
                snapshots: snapshots.clone(),
                solver_log: options.solver_log,
            });
        }
    }
    jobs
}

pub fn simulate(job: &Job, log: Option<&mut dyn Write>) -> Result<SimulationTrace, CliError> {
    let s = &job.scenario;
    let params = hmpc::formulations::ControllerParams { w: job.w, ..s.params.clone() };
    let options = SimOptions {
        settings: s.settings,
        ..SimOptions::default()
    };
    run_closed_loop_logged(&s.plant, &params, s.kind, &s.schedule, &s.x0, s.n_iter, &options, log).map_err(|source| CliError::Simulation {
        name: format!("{} (w = {})", s.name, job.w),
        source,
    })
}

pub fn summarize(trace: &SimulationTrace, job: &Job) -> RunSummary {
    let last = trace.steps.last().expect("trace has at least one step");
    let lyap = lyapunov_check(trace, 0.0);
    let ms: Vec<f64> = trace.steps.iter().map(|s| s.report.solve_time_secs * 1e3).collect();
    RunSummary {
        name: job.scenario.name.clone(),
        controller: trace.kind,
        horizon: trace.params.horizon,
        w: trace.params.w,
        n_iter: job.scenario.n_iter,
        phi: performance_index(trace, &trace.params.q, &trace.params.r),
        final_error: (&last.x - &last.reference.x).norm(),
        max_constraint_violation: trace.max_constraint_violation(&job.scenario.plant),
        min_lyapunov: lyap.min_w(),
        final_lyapunov: *lyap.w.last().expect("nonempty"),
        total_iterations: trace.steps.iter().map(|s| s.report.iterations).sum(),
        max_iterations: trace.steps.iter().map(|s| s.report.iterations).max().unwrap_or(0),
        mean_solve_ms: ms.iter().sum::<f64>() / ms.len() as f64,
        max_solve_ms: ms.iter().copied().fold(0.0, f64::max),
        output_dir: job.dir.clone(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

fn output_err(path: &Path) -> impl Fn(hmpc::sim::SimError) -> CliError + '_ {
    move |e| CliError::Output(format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    writeln!(f).and_then(|_| f.flush()).map_err(CliError::io(path))
}

/// Runs one job and writes `trace.csv`, `timing.csv`, `summary.json`,
/// `snapshot_<k>.csv` and optionally `solver_log.csv` into its directory.
pub fn run_job(job: &Job) -> Result<RunSummary, CliError> {
    std::fs::create_dir_all(&job.dir).map_err(CliError::io(&job.dir))?;
    let trace = if job.solver_log {
        let path = job.dir.join("solver_log.csv");
        let mut f = create(&path)?;
        let trace = simulate(job, Some(&mut f))?;
        f.flush().map_err(CliError::io(&path))?;
        trace
    } else {
        simulate(job, None)?
    };

    let path = job.dir.join("trace.csv");
    trace.write_csv(create(&path)?).map_err(output_err(&path))?;
    let path = job.dir.join("timing.csv");
    trace.write_timing_csv(create(&path)?).map_err(output_err(&path))?;
    for &k in &job.snapshots {
        let path = job.dir.join(format!("snapshot_{k}.csv"));
        let snap = snapshot(&trace, k).map_err(output_err(&path))?;
        snap.write_csv(create(&path)?).map_err(output_err(&path))?;
    }
    let summary = summarize(&trace, job);
    write_json(&job.dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Runs jobs on at most `jobs` threads; results keep the input order.
pub fn run_jobs(jobs: &[Job], threads: usize) -> Vec<Result<RunSummary, CliError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| jobs.par_iter().map(run_job).collect())
}

/// Writes `sweep.csv` (`w, phi, final_error, mean_solve_ms`) next to the
/// per-frequency directories of every swept scenario.
pub fn write_sweep_tables(jobs: &[Job], results: &[Result<RunSummary, CliError>], options: &RunOptions) -> Result<(), CliError> {
    let mut groups: Vec<(PathBuf, Vec<&RunSummary>)> = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        let (Ok(summary), Some(parent)) = (result, job.dir.parent()) else { continue };
        if job.dir == scenario_dir(&job.scenario, options) {
            continue;
        }
        match groups.iter_mut().find(|(p, _)| p == parent) {
            Some((_, v)) => v.push(summary),
            None => groups.push((parent.to_path_buf(), vec![summary])),
        }
    }
    for (dir, rows) in groups {
        let path = dir.join("sweep.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        let err = |e: csv::Error| CliError::Output(format!("{}: {e}", path.display()));
        w.write_record(["w", "phi", "final_error", "mean_solve_ms"]).map_err(err)?;
        for s in rows {
            w.write_record([s.w.to_string(), s.phi.to_string(), s.final_error.to_string(), format!("{:.3}", s.mean_solve_ms)])
                .map_err(err)?;
        }
        w.flush().map_err(CliError::io(&path))?;
    }
    Ok(())
}
