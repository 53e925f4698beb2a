//! First-order conic solver based on ADMM operator splitting.
//!
//! Solves
//!
//! ```text
//! minimize ½ xᵀPx + qᵀx   subject to   Ax + s = b,  s ∈ K
//! ```
//!
//! by running the OSQP-style splitting on the constraint `Ax ∈ C` with
//! `C = b − K`, so each iteration is one solve with a cached LDLᵀ factor of the
//! regularized KKT matrix followed by a projection onto `K`. The data are
//! Ruiz-equilibrated, the penalty is adapted on a schedule starting at
//! [`SolverSettings::adaptive_rho_interval`] iterations and termination uses
//! the mixed absolute/relative infinity-norm criterion.
//!
//! Duals follow the convention `Px + q + Aᵀy = 0` with `y ∈ K*`.

mod anderson;
pub mod cones;
pub mod kkt;
pub mod ldl;
pub mod scaling;
pub mod sparse;

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::formulations::ConeProgram;
use cones::Cone;
use kkt::KktSystem;
use anderson::Anderson;
use ldl::LdlError;
use scaling::Scaling;

pub use cones::project_soc;

/// Ratio between the penalty on equality rows and on all other rows.
const EQUALITY_RHO_FACTOR: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
/// Penalty is only refactored when the suggested value moves by this factor.
const RHO_ADAPT_THRESHOLD: f64 = 5.0;
const SCALING_ITERATIONS: usize = 10;
/// An accelerated point is rejected when its fixed-point residual exceeds the
/// previous one by this factor.
const SAFEGUARD_FACTOR: f64 = 2.0;
/// Iterations without progress of the fixed-point residual after which
/// acceleration is switched off.
const ACCELERATION_STALL: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub eps_dual_inf: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub adaptive_rho_interval: usize,
    /// Iterations between residual checks.
    pub check_interval: usize,
    /// History length of Anderson acceleration; 0 disables it.
    pub acceleration_memory: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-5,
            eps_rel: 1e-5,
            eps_prim_inf: 1e-5,
            eps_dual_inf: 1e-5,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho_interval: 25,
            check_interval: 5,
            acceleration_memory: 10,
        }
    }
}

impl SolverSettings {
    /// Same defaults with every tolerance set to `eps`.
    pub fn with_tolerance(eps: f64) -> Self {
        Self {
            eps_abs: eps,
            eps_rel: eps,
            eps_prim_inf: eps,
            eps_dual_inf: eps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let tols = [self.eps_abs, self.eps_rel, self.eps_prim_inf, self.eps_dual_inf];
        if tols.iter().any(|t| !(*t > 0.0)) {
            return Err(SolverError::InvalidSettings("tolerances must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(SolverError::InvalidSettings("alpha must lie in (0, 2)".into()));
        }
        if !(self.rho > 0.0) || self.sigma < 0.0 {
            return Err(SolverError::InvalidSettings("rho must be positive and sigma nonnegative".into()));
        }
        if self.max_iter == 0 || self.check_interval == 0 || self.adaptive_rho_interval == 0 {
            return Err(SolverError::InvalidSettings("iteration counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Solved,
    PrimalInfeasible,
    DualInfeasible,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Termination thresholds at the final iterate.
    pub primal_tolerance: f64,
    pub dual_tolerance: f64,
    pub objective: f64,
    pub rho: f64,
    pub refactorizations: usize,
    pub solve_time_secs: f64,
}

impl SolveReport {
    pub fn is_solved(&self) -> bool {
        self.status == SolveStatus::Solved
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    /// Primal variables.
    pub x: Vec<f64>,
    /// Dual variables, `Px + q + Aᵀy = 0`, `y ∈ K*`.
    pub y: Vec<f64>,
    /// Slacks `s = b − Ax` projected onto `K`.
    pub s: Vec<f64>,
    pub report: SolveReport,
}

/// Initial iterate for a solve, in the unscaled variables.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error("KKT factorization failed: {0}")]
    Factorization(#[from] LdlError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Factors the unscaled regularized KKT matrix of `program` with a uniform
/// penalty `rho` (equality rows use the same boosted penalty as the solver).
pub fn linear_system_factor(program: &ConeProgram, rho: f64, sigma: f64) -> Result<KktSystem, SolverError> {
    let rho_vec = rho_vector(&program.cones, rho);
    Ok(KktSystem::new(&program.p, &program.a, sigma, &rho_vec)?)
}

fn rho_vector(cones: &[Cone], rho: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(cones::total_dim(cones));
    for c in cones {
        let r = match c {
            Cone::Zero(_) => rho * EQUALITY_RHO_FACTOR,
            _ => rho,
        };
        out.extend(std::iter::repeat(r).take(c.dim()));
    }
    out
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-shot convenience: set up a solver and run it.
pub fn solve(program: &ConeProgram, settings: &SolverSettings, warm: Option<&WarmStart>) -> Result<SolveOutput, SolverError> {
    Solver::new(program, settings)?.solve(warm)
}

/// Solver instance owning the scaled data and the KKT factorization. Changing
/// only `q` or `b` keeps the factorization, which is how consecutive MPC
/// steps are solved.
#[derive(Debug, Clone)]
pub struct Solver {
    settings: SolverSettings,
    n: usize,
    m: usize,
    cones: Vec<Cone>,
    // unscaled data
    p: sparse::CscMatrix,
    q: Vec<f64>,
    a: sparse::CscMatrix,
    b: Vec<f64>,
    constant: f64,
    // scaled data
    p_s: sparse::CscMatrix,
    q_s: Vec<f64>,
    a_s: sparse::CscMatrix,
    b_s: Vec<f64>,
    scaling: Scaling,
    rho: f64,
    rho_vec: Vec<f64>,
    kkt: KktSystem,
}

struct Residuals {
    prim: f64,
    dual: f64,
    prim_tol: f64,
    dual_tol: f64,
}

impl Solver {
    pub fn new(program: &ConeProgram, settings: &SolverSettings) -> Result<Self, SolverError> {
        settings.validate()?;
        let n = program.num_vars();
        let m = program.num_rows();
        let mut p_s = program.p.clone();
        let mut q_s = program.q.clone();
        let mut a_s = program.a.clone();
        let scaling = scaling::equilibrate(&mut p_s, &mut q_s, &mut a_s, &program.cones, SCALING_ITERATIONS);
        let b_s: Vec<f64> = program.b.iter().zip(&scaling.e).map(|(b, e)| b * e).collect();
        let rho_vec = rho_vector(&program.cones, settings.rho);
        let kkt = KktSystem::new(&p_s, &a_s, settings.sigma, &rho_vec)?;
        Ok(Self {
            settings: *settings,
            n,
            m,
            cones: program.cones.clone(),
            p: program.p.clone(),
            q: program.q.clone(),
            a: program.a.clone(),
            b: program.b.clone(),
            constant: program.constant,
            p_s,
            q_s,
            a_s,
            b_s,
            scaling,
            rho: settings.rho,
            rho_vec,
            kkt,
        })
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    /// Current penalty parameter (after any adaptation in earlier solves).
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Replaces the linear cost; no refactorization.
    pub fn update_q(&mut self, q: &[f64]) -> Result<(), SolverError> {
        if q.len() != self.n {
            return Err(SolverError::Dimension(format!("q has {} entries, expected {}", q.len(), self.n)));
        }
        self.q = q.to_vec();
        let c = self.scaling.c;
        self.q_s = q.iter().zip(&self.scaling.d).map(|(q, d)| c * d * q).collect();
        Ok(())
    }

    /// Replaces the constraint offsets; no refactorization.
    pub fn update_b(&mut self, b: &[f64]) -> Result<(), SolverError> {
        if b.len() != self.m {
            return Err(SolverError::Dimension(format!("b has {} entries, expected {}", b.len(), self.m)));
        }
        self.b = b.to_vec();
        self.b_s = b.iter().zip(&self.scaling.e).map(|(b, e)| b * e).collect();
        Ok(())
    }

    pub fn update_constant(&mut self, constant: f64) {
        self.constant = constant;
    }

    /// Loads `q`, `b` and the constant of a program with identical `P`, `A`
    /// and cones.
    pub fn update_vectors(&mut self, program: &ConeProgram) -> Result<(), SolverError> {
        if program.cones != self.cones {
            return Err(SolverError::Dimension("cone structure differs".into()));
        }
        self.update_q(&program.q)?;
        self.update_b(&program.b)?;
        self.update_constant(program.constant);
        Ok(())
    }

    pub fn solve(&mut self, warm: Option<&WarmStart>) -> Result<SolveOutput, SolverError> {
        self.solve_logged(warm, None)
    }

    /// Like [`Solver::solve`], optionally writing `iter,r_prim,r_dual,objective`
    /// CSV rows at every residual check.
    pub fn solve_logged(&mut self, warm: Option<&WarmStart>, mut log: Option<&mut dyn Write>) -> Result<SolveOutput, SolverError> {
        let start = Instant::now();
        let (n, m) = (self.n, self.m);
        let st = self.settings;

        let mut x = vec![0.0; n];
        let mut y = vec![0.0; m];
        let mut z = vec![0.0; m];
        if let Some(w) = warm {
            if w.x.len() != n {
                return Err(SolverError::Dimension(format!("warm x has {} entries, expected {n}", w.x.len())));
            }
            for i in 0..n {
                x[i] = w.x[i] * self.scaling.d_inv[i];
            }
            if let Some(wy) = &w.y {
                if wy.len() != m {
                    return Err(SolverError::Dimension(format!("warm y has {} entries, expected {m}", wy.len())));
                }
                for i in 0..m {
                    y[i] = wy[i] * self.scaling.e_inv[i] * self.scaling.c;
                }
            }
            self.a_s.mul_vec(&x, &mut z);
            self.project_c(&mut z);
        }

        // Fixed-point state s = (x, w) with w = z + y/ρ, so that z = Π_C(w)
        // and y = ρ(w − z).
        let mut s = vec![0.0; n + m];
        s[..n].copy_from_slice(&x);
        for i in 0..m {
            s[n + i] = z[i] + y[i] / self.rho_vec[i];
        }
        let mut t = vec![0.0; n + m];
        let mut f = vec![0.0; n + m];
        let mut fallback = s.clone();
        let mut y_prev = vec![0.0; m];
        let mut rhs = vec![0.0; n + m];
        let mut aa = Anderson::new(st.acceleration_memory);
        let mut accelerated = false;
        let mut f_norm_prev = f64::INFINITY;
        let mut f_norm_best = f64::INFINITY;
        let mut best_iter = 0;

        let mut refactorizations = 0;
        let mut status = SolveStatus::MaxIter;
        self.split(&s[n..], &mut z, &mut y);
        let mut res = self.residuals(&s[..n], &z, &y);
        let mut iter = 0;
        // the wait doubles after every refactorization so that the residual
        // balance is not measured on the transient of the previous change
        let mut adapt_wait = st.adaptive_rho_interval;
        let mut next_adapt = adapt_wait;

        if let Some(l) = log.as_deref_mut() {
            let _ = writeln!(l, "iter,r_prim,r_dual,objective");
        }

        while iter < st.max_iter {
            iter += 1;
            self.split(&s[n..], &mut z, &mut y_prev);
            self.admm_step(&s, &z, &y_prev, &mut rhs, &mut t);
            for i in 0..n + m {
                f[i] = t[i] - s[i];
            }
            let f_norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            if accelerated && f_norm > SAFEGUARD_FACTOR * f_norm_prev {
                // extrapolated point made things worse: resume from plain step
                s.copy_from_slice(&fallback);
                aa.reset();
                accelerated = false;
                continue;
            }
            self.split(&t[n..], &mut z, &mut y);
            x.copy_from_slice(&t[..n]);

            let check = iter % st.check_interval == 0 || iter == st.max_iter;
            let adapt = iter >= next_adapt;
            if check || adapt {
                res = self.residuals(&x, &z, &y);
                if let Some(l) = log.as_deref_mut() {
                    let obj = self.objective_scaled(&x);
                    let _ = writeln!(l, "{iter},{:e},{:e},{:e}", res.prim, res.dual, obj);
                }
                if res.prim <= res.prim_tol && res.dual <= res.dual_tol {
                    status = SolveStatus::Solved;
                    break;
                }
                if self.primal_infeasible(&y, &y_prev) {
                    status = SolveStatus::PrimalInfeasible;
                    break;
                }
                if self.dual_infeasible(&x, &s[..n]) {
                    status = SolveStatus::DualInfeasible;
                    break;
                }
            }
            if adapt {
                next_adapt = iter + adapt_wait;
                if self.adapt_rho(&x, &z, &y)? {
                    refactorizations += 1;
                    adapt_wait *= 2;
                    next_adapt = iter + adapt_wait;
                    s[..n].copy_from_slice(&x);
                    for i in 0..m {
                        s[n + i] = z[i] + y[i] / self.rho_vec[i];
                    }
                    fallback.copy_from_slice(&s);
                    aa.reset();
                    accelerated = false;
                    f_norm_prev = f64::INFINITY;
                    continue;
                }
            }
            f_norm_prev = f_norm;
            if f_norm < 0.99 * f_norm_best {
                f_norm_best = f_norm;
                best_iter = iter;
            } else if iter - best_iter > ACCELERATION_STALL && aa.is_enabled() {
                // stalled, possibly infeasible: plain iterations are needed
                // for the certificate differences to settle
                aa = Anderson::new(0);
            }
            fallback.copy_from_slice(&t);
            accelerated = aa.step(&t, &f, &mut s);
        }

        let x_out: Vec<f64> = x.iter().zip(&self.scaling.d).map(|(v, d)| v * d).collect();
        let y_out: Vec<f64> = y
            .iter()
            .zip(&self.scaling.e)
            .map(|(v, e)| v * e / self.scaling.c)
            .collect();
        // s = b − z in unscaled units
        let s_out: Vec<f64> = z
            .iter()
            .zip(&self.scaling.e_inv)
            .zip(&self.b)
            .map(|((zi, ei), bi)| bi - zi * ei)
            .collect();
        let objective = self.objective_scaled(&x);
        Ok(SolveOutput {
            x: x_out,
            y: y_out,
            s: s_out,
            report: SolveReport {
                status,
                iterations: iter,
                primal_residual: res.prim,
                dual_residual: res.dual,
                primal_tolerance: res.prim_tol,
                dual_tolerance: res.dual_tol,
                objective,
                rho: self.rho,
                refactorizations,
                solve_time_secs: start.elapsed().as_secs_f64(),
            },
        })
    }

    /// `z = Π_C(w)`, `y = ρ(w − z)`.
    fn split(&self, w: &[f64], z: &mut [f64], y: &mut [f64]) {
        z.copy_from_slice(w);
        self.project_c(z);
        for i in 0..self.m {
            y[i] = self.rho_vec[i] * (w[i] - z[i]);
        }
    }

    /// One relaxed ADMM iteration from `s = (x, w)` into `t`.
    fn admm_step(&mut self, s: &[f64], z: &[f64], y: &[f64], rhs: &mut [f64], t: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        let (alpha, sigma) = (self.settings.alpha, self.settings.sigma);
        for i in 0..n {
            rhs[i] = sigma * s[i] - self.q_s[i];
        }
        for i in 0..m {
            rhs[n + i] = z[i] - y[i] / self.rho_vec[i];
        }
        self.kkt.solve(rhs);
        for i in 0..n {
            t[i] = alpha * rhs[i] + (1.0 - alpha) * s[i];
        }
        for i in 0..m {
            let z_tilde = z[i] + (rhs[n + i] - y[i]) / self.rho_vec[i];
            let z_relax = alpha * z_tilde + (1.0 - alpha) * z[i];
            t[n + i] = z_relax + y[i] / self.rho_vec[i];
        }
    }

    /// Projection onto the scaled set `C̄ = b̄ − K`.
    fn project_c(&self, v: &mut [f64]) {
        for (vi, bi) in v.iter_mut().zip(&self.b_s) {
            *vi = bi - *vi;
        }
        cones::project(&self.cones, v);
        for (vi, bi) in v.iter_mut().zip(&self.b_s) {
            *vi = bi - *vi;
        }
    }

    fn objective_scaled(&self, x_s: &[f64]) -> f64 {
        let x: Vec<f64> = x_s.iter().zip(&self.scaling.d).map(|(v, d)| v * d).collect();
        let mut px = vec![0.0; self.n];
        self.p.sym_upper_mul_vec(&x, &mut px);
        0.5 * dot(&x, &px) + dot(&x, &self.q) + self.constant
    }

    /// Unscaled residuals and tolerances.
    fn residuals(&self, x: &[f64], z: &[f64], y: &[f64]) -> Residuals {
        let sc = &self.scaling;
        let mut ax = vec![0.0; self.m];
        self.a_s.mul_vec(x, &mut ax);
        let mut prim = 0.0f64;
        let mut ax_norm = 0.0f64;
        let mut z_norm = 0.0f64;
        for i in 0..self.m {
            prim = prim.max(((ax[i] - z[i]) * sc.e_inv[i]).abs());
            ax_norm = ax_norm.max((ax[i] * sc.e_inv[i]).abs());
            z_norm = z_norm.max((z[i] * sc.e_inv[i]).abs());
        }

        let mut px = vec![0.0; self.n];
        self.p_s.sym_upper_mul_vec(x, &mut px);
        let mut aty = vec![0.0; self.n];
        self.a_s.mul_vec_transposed(y, &mut aty);
        let cinv = 1.0 / sc.c;
        let mut dual = 0.0f64;
        let (mut px_n, mut aty_n, mut q_n) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..self.n {
            let f = cinv * sc.d_inv[i];
            dual = dual.max(((px[i] + self.q_s[i] + aty[i]) * f).abs());
            px_n = px_n.max((px[i] * f).abs());
            aty_n = aty_n.max((aty[i] * f).abs());
            q_n = q_n.max((self.q_s[i] * f).abs());
        }
        let st = &self.settings;
        Residuals {
            prim,
            dual,
            prim_tol: st.eps_abs + st.eps_rel * ax_norm.max(z_norm),
            dual_tol: st.eps_abs + st.eps_rel * px_n.max(aty_n).max(q_n),
        }
    }

    /// Certificate `δy ∈ K*`, `Aᵀδy ≈ 0`, `bᵀδy < 0`.
    fn primal_infeasible(&self, y: &[f64], y_prev: &[f64]) -> bool {
        let sc = &self.scaling;
        let dy_s: Vec<f64> = y.iter().zip(y_prev).map(|(a, b)| a - b).collect();
        let dy: Vec<f64> = dy_s.iter().zip(&sc.e).map(|(v, e)| v * e).collect();
        let norm = norm_inf(&dy);
        let eps = self.settings.eps_prim_inf;
        if norm <= eps {
            return false;
        }
        let mut at = vec![0.0; self.n];
        self.a_s.mul_vec_transposed(&dy_s, &mut at);
        let at_norm = at.iter().zip(&sc.d_inv).fold(0.0f64, |mx, (v, d)| mx.max((v * d).abs()));
        if at_norm > eps * norm {
            return false;
        }
        let mut proj = dy.clone();
        cones::project_dual(&self.cones, &mut proj);
        let dist = dy.iter().zip(&proj).fold(0.0f64, |mx, (a, b)| mx.max((a - b).abs()));
        dist <= eps * norm && dot(&self.b, &proj) < -eps * norm
    }

    /// Certificate `Pδx ≈ 0`, `qᵀδx < 0`, `Aδx ∈ −K`.
    fn dual_infeasible(&self, x: &[f64], x_prev: &[f64]) -> bool {
        let sc = &self.scaling;
        let dx_s: Vec<f64> = x.iter().zip(x_prev).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = dx_s.iter().zip(&sc.d).map(|(v, d)| v * d).collect();
        let norm = norm_inf(&dx);
        let eps = self.settings.eps_dual_inf;
        if norm <= eps {
            return false;
        }
        let mut pdx = vec![0.0; self.n];
        self.p.sym_upper_mul_vec(&dx, &mut pdx);
        if norm_inf(&pdx) > eps * norm || dot(&self.q, &dx) > -eps * norm {
            return false;
        }
        let mut adx = vec![0.0; self.m];
        self.a.mul_vec(&dx, &mut adx);
        adx.iter_mut().for_each(|v| *v = -*v);
        let mut proj = adx.clone();
        cones::project(&self.cones, &mut proj);
        adx.iter().zip(&proj).fold(0.0f64, |mx, (a, b)| mx.max((a - b).abs())) <= eps * norm
    }

    /// Balances scaled primal and dual residuals; returns true on refactor.
    fn adapt_rho(&mut self, x: &[f64], z: &[f64], y: &[f64]) -> Result<bool, SolverError> {
        let mut ax = vec![0.0; self.m];
        self.a_s.mul_vec(x, &mut ax);
        let prim = ax.iter().zip(z).fold(0.0f64, |mx, (a, b)| mx.max((a - b).abs()));
        let prim_scale = norm_inf(&ax).max(norm_inf(z));
        let mut px = vec![0.0; self.n];
        self.p_s.sym_upper_mul_vec(x, &mut px);
        let mut aty = vec![0.0; self.n];
        self.a_s.mul_vec_transposed(y, &mut aty);
        let dual = (0..self.n).fold(0.0f64, |mx, i| mx.max((px[i] + self.q_s[i] + aty[i]).abs()));
        let dual_scale = norm_inf(&px).max(norm_inf(&aty)).max(norm_inf(&self.q_s));

        let tiny = 1e-30;
        let ratio = (prim / (prim_scale + tiny)) / (dual / (dual_scale + tiny) + tiny);
        let new_rho = (self.rho * ratio.sqrt()).clamp(RHO_MIN, RHO_MAX);
        if new_rho > self.rho * RHO_ADAPT_THRESHOLD || new_rho < self.rho / RHO_ADAPT_THRESHOLD {
            self.rho = new_rho;
            self.rho_vec = rho_vector(&self.cones, new_rho);
            self.kkt.update_rho(&self.rho_vec)?;
            return Ok(true);
        }
        Ok(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulations::program::{Affine, ProgramBuilder, VariableLayout};
    use sparse::CscMatrix;

    fn tight() -> SolverSettings {
        SolverSettings::with_tolerance(1e-9)
    }

    #[test]
    fn active_lower_bound() {
        // min x² s.t. x ≥ 1
        let mut pb = ProgramBuilder::new(VariableLayout::free(1));
        pb.add_weighted_square(&[(0, 1.0)], &nalgebra::DMatrix::identity(1, 1), &nalgebra::DVector::zeros(1));
        pb.nonpositive(Affine::constant(1.0).add(0, -1.0));
        let out = solve(&pb.build().unwrap(), &tight(), None).unwrap();
        assert_eq!(out.report.status, SolveStatus::Solved);
        assert!((out.x[0] - 1.0).abs() < 1e-7);
        assert!((out.report.objective - 1.0).abs() < 1e-7);
    }

    #[test]
    fn soc_norm() {
        // min t s.t. (t, 3, 4) ∈ SOC
        let mut pb = ProgramBuilder::new(VariableLayout::free(1));
        pb.second_order(vec![Affine::default().add(0, 1.0), Affine::constant(3.0), Affine::constant(4.0)]);
        let mut prog = pb.build().unwrap();
        prog.q = vec![1.0];
        let out = solve(&prog, &tight(), None).unwrap();
        assert_eq!(out.report.status, SolveStatus::Solved);
        assert!((out.x[0] - 5.0).abs() < 1e-6, "{}", out.x[0]);
    }

    #[test]
    fn equality_only() {
        // min ‖x‖² s.t. x1 + x2 = 2
        let mut pb = ProgramBuilder::new(VariableLayout::free(2));
        pb.add_weighted_square(&[(0, 1.0)], &nalgebra::DMatrix::identity(2, 2), &nalgebra::DVector::zeros(2));
        pb.equality(Affine::constant(-2.0).add(0, 1.0).add(1, 1.0));
        let out = solve(&pb.build().unwrap(), &tight(), None).unwrap();
        assert_eq!(out.report.status, SolveStatus::Solved);
        assert!((out.x[0] - 1.0).abs() < 1e-7 && (out.x[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn detects_primal_infeasibility() {
        // x ≤ -1 and x ≥ 1
        let mut pb = ProgramBuilder::new(VariableLayout::free(1));
        pb.add_weighted_square(&[(0, 1.0)], &nalgebra::DMatrix::identity(1, 1), &nalgebra::DVector::zeros(1));
        pb.nonpositive(Affine::constant(1.0).add(0, 1.0));
        pb.nonpositive(Affine::constant(1.0).add(0, -1.0));
        let out = solve(&pb.build().unwrap(), &SolverSettings::default(), None).unwrap();
        assert_eq!(out.report.status, SolveStatus::PrimalInfeasible);
    }

    #[test]
    fn detects_dual_infeasibility() {
        // min -x s.t. x ≥ 0
        let mut pb = ProgramBuilder::new(VariableLayout::free(1));
        pb.nonpositive(Affine::default().add(0, -1.0));
        let mut prog = pb.build().unwrap();
        prog.q = vec![-1.0];
        let out = solve(&prog, &SolverSettings::default(), None).unwrap();
        assert_eq!(out.report.status, SolveStatus::DualInfeasible);
    }

    #[test]
    fn singular_kkt_without_regularization() {
        let p = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]);
        let prog = ConeProgram::new(p, vec![0.0; 2], 0.0, CscMatrix::zeros(0, 2), vec![], vec![], VariableLayout::free(2)).unwrap();
        assert!(matches!(
            linear_system_factor(&prog, 0.1, 0.0),
            Err(SolverError::Factorization(LdlError::ZeroPivot(_)))
        ));
        assert!(linear_system_factor(&prog, 0.1, 1e-6).is_ok());
    }

    #[test]
    fn rejects_bad_settings() {
        let s = SolverSettings { alpha: 2.0, ..Default::default() };
        assert!(s.validate().is_err());
        let s = SolverSettings { eps_abs: 0.0, ..Default::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn iteration_log_has_header() {
        let mut pb = ProgramBuilder::new(VariableLayout::free(1));
        pb.add_weighted_square(&[(0, 1.0)], &nalgebra::DMatrix::identity(1, 1), &nalgebra::DVector::from_vec(vec![2.0]));
        let prog = pb.build().unwrap();
        let mut buf = Vec::new();
        Solver::new(&prog, &tight()).unwrap().solve_logged(None, Some(&mut buf)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,r_prim,r_dual,objective\n"));
        assert!(text.lines().count() >= 2);
    }
}
