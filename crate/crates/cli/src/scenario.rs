//! Declarative scenario files.
//!
//! A scenario names a plant, a controller and its parameters, an initial
//! state, a reference schedule and a run length. Matrices are row-major
//! nested arrays. Weights left out fall back to the ball-and-plate benchmark
//! values, which only fit the built-in model.
//!
//! ```json
//! {
//!   "name": "hmpc_n5",
//!   "model": "ball_plate",
//!   "controller": "hmpc",
//!   "params": { "horizon": 5, "w": 0.3254 },
//!   "reference": [{ "step": 0, "x_r": [1.8, 0, 0, 0, 1.4, 0, 0, 0] }],
//!   "n_iter": 50
//! }
//! ```

use std::path::{Path, PathBuf};

use hmpc::formulations::{ControllerKind, ControllerParams};
use hmpc::harmonic::Reference;
use hmpc::model::Plant;
use hmpc::sim::ReferenceSchedule;
use hmpc::solver::SolverSettings;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Base frequency used when a scenario does not set one.
pub const DEFAULT_W: f64 = 0.3254;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    #[default]
    BallPlate,
    /// Plant JSON, relative to the scenario file.
    File(PathBuf),
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub horizon: usize,
    #[serde(default = "default_w")]
    pub w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_e: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_e: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_h: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_h: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_a: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_a: Option<Rows>,
}

fn default_w() -> f64 {
    DEFAULT_W
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceEntry {
    pub step: usize,
    pub x_r: Vec<f64>,
    /// Zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_r: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub model: ModelSource,
    pub controller: ControllerKind,
    pub params: ParamsSpec,
    /// Origin when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub reference: Vec<ReferenceEntry>,
    pub n_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// One run per listed base frequency instead of `params.w`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_w: Vec<f64>,
    /// Steps whose predicted trajectories are written out.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSettings>,
}

/// A validated scenario, ready to simulate.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub name: String,
    pub plant: Plant,
    pub kind: ControllerKind,
    pub params: ControllerParams,
    pub x0: DVector<f64>,
    pub schedule: ReferenceSchedule,
    pub n_iter: usize,
    pub output_dir: Option<PathBuf>,
    pub sweep_w: Vec<f64>,
    pub snapshots: Vec<usize>,
    pub settings: SolverSettings,
}

/// Line of the first `"key":` in `text`, for error messages.
fn locate(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| {
        l.find(&needle)
            .is_some_and(|i| l[i + needle.len()..].trim_start().starts_with(':'))
    })
    .map(|i| i + 1)
}

fn matrix(rows: &Rows) -> Result<DMatrix<f64>, String> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("rows have different lengths".into());
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

impl Scenario {
    /// Parses scenario JSON; `path` only labels errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| {
            let full = e.to_string();
            let position = format!(" at line {} column {}", e.line(), e.column());
            CliError::Parse {
                path: path.to_path_buf(),
                line: e.line(),
                column: e.column(),
                message: full.strip_suffix(&position).unwrap_or(&full).to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Ok((Self::parse(&text, path)?, text))
    }

    /// Loads and validates a scenario file.
    pub fn load_resolved(path: &Path) -> Result<Resolved, CliError> {
        let (scenario, text) = Self::load(path)?;
        scenario.resolve(path, &text)
    }

    /// Builds the runtime objects. `path` and `text` locate errors and
    /// relative model files.
    pub fn resolve(&self, path: &Path, text: &str) -> Result<Resolved, CliError> {
        let invalid = |key: &str, message: String| CliError::Invalid {
            path: path.to_path_buf(),
            line: locate(text, key),
            message: format!("{key}: {message}"),
        };

        let plant = match &self.model {
            ModelSource::BallPlate => Plant::ball_plate(),
            ModelSource::File(file) => {
                let full = path.parent().unwrap_or(Path::new(".")).join(file);
                let body = std::fs::read_to_string(&full).map_err(CliError::io(&full))?;
                Plant::from_json(&body).map_err(|e| invalid("model", e.to_string()))?
            }
        };
        let (n, m) = (plant.model.n(), plant.model.m());

        let p = &self.params;
        if !(p.w.is_finite() && p.w > 0.0) {
            return Err(invalid("w", format!("must be positive, got {}", p.w)));
        }
        let defaults = (n == 8 && m == 2).then(|| ControllerParams::ball_plate(p.horizon));
        let pick = |key: &str, given: &Option<Rows>, fallback: Option<&DMatrix<f64>>| -> Result<DMatrix<f64>, CliError> {
            match (given, fallback) {
                (Some(rows), _) => matrix(rows).map_err(|e| invalid(key, e)),
                (None, Some(d)) => Ok(d.clone()),
                (None, None) => Err(invalid("params", format!("{key} is required for a custom model"))),
            }
        };
        let d = defaults.as_ref();
        let params = ControllerParams {
            horizon: p.horizon,
            q: pick("q", &p.q, d.map(|d| &d.q))?,
            r: pick("r", &p.r, d.map(|d| &d.r))?,
            t_e: pick("t_e", &p.t_e, d.map(|d| &d.t_e))?,
            s_e: pick("s_e", &p.s_e, d.map(|d| &d.s_e))?,
            t_h: pick("t_h", &p.t_h, d.map(|d| &d.t_h))?,
            s_h: pick("s_h", &p.s_h, d.map(|d| &d.s_h))?,
            t_a: pick("t_a", &p.t_a, d.map(|d| &d.t_a))?,
            s_a: pick("s_a", &p.s_a, d.map(|d| &d.s_a))?,
            w: p.w,
        };
        params.validate(&plant.model).map_err(|e| invalid("params", e.to_string()))?;

        let x0 = match &self.x0 {
            Some(v) if v.len() != n => return Err(invalid("x0", format!("expected {n} entries, got {}", v.len()))),
            Some(v) => DVector::from_column_slice(v),
            None => DVector::zeros(n),
        };

        let mut entries = Vec::with_capacity(self.reference.len());
        for e in &self.reference {
            if e.x_r.len() != n {
                return Err(invalid("x_r", format!("expected {n} entries, got {}", e.x_r.len())));
            }
            let u = match &e.u_r {
                Some(u) if u.len() != m => return Err(invalid("u_r", format!("expected {m} entries, got {}", u.len()))),
                Some(u) => DVector::from_column_slice(u),
                None => DVector::zeros(m),
            };
            entries.push((e.step, Reference::new(DVector::from_column_slice(&e.x_r), u)));
        }
        let schedule = ReferenceSchedule::new(entries).map_err(|e| invalid("reference", e.to_string()))?;

        if self.n_iter == 0 {
            return Err(invalid("n_iter", "must be positive".into()));
        }
        if let Some(k) = self.snapshots.iter().find(|k| **k > self.n_iter) {
            return Err(invalid("snapshots", format!("step {k} is past n_iter = {}", self.n_iter)));
        }
        if let Some(w) = self.sweep_w.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(invalid("sweep_w", format!("frequencies must be positive, got {w}")));
        }
        let settings = self.solver.unwrap_or_default();
        settings.validate().map_err(|e| invalid("solver", e.to_string()))?;

        Ok(Resolved {
            name: self.name.clone(),
            plant,
            kind: self.controller,
            params,
            x0,
            schedule,
            n_iter: self.n_iter,
            output_dir: self.output_dir.clone(),
            sweep_w: self.sweep_w.clone(),
            snapshots: self.snapshots.clone(),
            settings,
        })
    }
}

/// Parses a frequency given as a number or as a multiple of π: `0.3`,
/// `pi`, `pi/2`, `2pi`, `2*pi`.
pub fn parse_frequency(text: &str) -> Result<f64, String> {
    let t = text.trim().to_ascii_lowercase();
    let value = match t.split_once("pi") {
        None => t.parse::<f64>().map_err(|e| format!("{text}: {e}"))?,
        Some((head, tail)) => {
            let head = head.trim().trim_end_matches('*').trim();
            let k = if head.is_empty() { 1.0 } else { head.parse::<f64>().map_err(|e| format!("{text}: {e}"))? };
            let tail = tail.trim();
            let d = match tail.strip_prefix('/') {
                Some(d) => d.trim().parse::<f64>().map_err(|e| format!("{text}: {e}"))?,
                None if tail.is_empty() => 1.0,
                None => return Err(format!("{text}: unexpected `{tail}`")),
            };
            k * std::f64::consts::PI / d
        }
    };
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(format!("{text}: frequency must be positive"))
    }
}
