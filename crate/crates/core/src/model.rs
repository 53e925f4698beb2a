//! Discrete LTI plants with box output constraints, plus the linearized
//! ball-and-plate benchmark.
//!
//! State layout of the ball-and-plate model is `(z₁, ż₁, θ₁, θ̇₁, z₂, ż₂, θ₂, θ̇₂)`
//! with inputs `(θ̈₁, θ̈₂)`. All matrices use that ordering throughout.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Truncation tolerance of the Taylor series inside [`expm`], relative to the
/// accumulated sum.
pub const EXPM_SERIES_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("(A, B) is not controllable: rank {rank} < {n}")]
    NotControllable { rank: usize, n: usize },
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("invalid model document: {0}")]
    Json(String),
}

/// `x⁺ = A x + B u`, `z = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl LtiModel {
    /// Validates dimensions and controllability of `(A, B)`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self, ModelError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(ModelError::Dimension(format!("A is {}x{}", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(ModelError::Dimension(format!("B has {} rows, expected {n}", b.nrows())));
        }
        let m = b.ncols();
        if c.ncols() != n {
            return Err(ModelError::Dimension(format!("C has {} columns, expected {n}", c.ncols())));
        }
        if d.nrows() != c.nrows() || d.ncols() != m {
            return Err(ModelError::Dimension(format!(
                "D is {}x{}, expected {}x{m}",
                d.nrows(),
                d.ncols(),
                c.nrows()
            )));
        }
        controllability_index_of(&a, &b)?;
        Ok(Self { a, b, c, d })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn nz(&self) -> usize {
        self.c.nrows()
    }

    /// `A x + B u`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
}

/// `z_m ≤ z ≤ z_M` with tightened bounds `ẑ_m = z_m + ε`, `ẑ_M = z_M − ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    z_min: DVector<f64>,
    z_max: DVector<f64>,
    eps: DVector<f64>,
}

impl ConstraintSet {
    pub fn new(z_min: DVector<f64>, z_max: DVector<f64>, eps: DVector<f64>) -> Result<Self, ModelError> {
        let nz = z_min.len();
        if z_max.len() != nz || eps.len() != nz {
            return Err(ModelError::Dimension(format!(
                "bounds have lengths {}, {}, {}",
                nz,
                z_max.len(),
                eps.len()
            )));
        }
        for i in 0..nz {
            if !(z_min[i] < z_max[i]) {
                return Err(ModelError::InvalidConstraints(format!("z_min[{i}] >= z_max[{i}]")));
            }
            if !(eps[i] > 0.0) {
                return Err(ModelError::InvalidConstraints(format!("eps[{i}] must be positive")));
            }
            if !(z_min[i] + eps[i] < z_max[i] - eps[i]) {
                return Err(ModelError::InvalidConstraints(format!("tightening empties component {i}")));
            }
        }
        Ok(Self { z_min, z_max, eps })
    }

    /// Same tightening `eps` on every component.
    pub fn uniform_eps(z_min: DVector<f64>, z_max: DVector<f64>, eps: f64) -> Result<Self, ModelError> {
        let n = z_min.len();
        Self::new(z_min, z_max, DVector::from_element(n, eps))
    }

    pub fn nz(&self) -> usize {
        self.z_min.len()
    }

    pub fn z_min(&self) -> &DVector<f64> {
        &self.z_min
    }

    pub fn z_max(&self) -> &DVector<f64> {
        &self.z_max
    }

    pub fn eps(&self) -> &DVector<f64> {
        &self.eps
    }

    /// `ẑ_m`.
    pub fn z_min_tight(&self) -> DVector<f64> {
        &self.z_min + &self.eps
    }

    /// `ẑ_M`.
    pub fn z_max_tight(&self) -> DVector<f64> {
        &self.z_max - &self.eps
    }

    /// Largest violation of the untightened box, zero when inside.
    pub fn violation(&self, z: &DVector<f64>) -> f64 {
        (0..self.nz()).fold(0.0f64, |m, i| {
            m.max(self.z_min[i] - z[i]).max(z[i] - self.z_max[i])
        })
    }
}

/// Physical parameters of the ball-and-plate rig.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallPlateParams {
    pub mass: f64,
    pub radius: f64,
    pub inertia: f64,
    pub gravity: f64,
    pub sample_time: f64,
}

impl Default for BallPlateParams {
    fn default() -> Self {
        Self {
            mass: 0.05,
            radius: 0.01,
            inertia: 2e-6,
            gravity: 9.81,
            sample_time: 0.2,
        }
    }
}

impl BallPlateParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("mass", self.mass),
            ("radius", self.radius),
            ("inertia", self.inertia),
            ("gravity", self.gravity),
            ("sample_time", self.sample_time),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `m / (m + I_b / r²) · g`.
    pub fn acceleration_gain(&self) -> f64 {
        self.mass / (self.mass + self.inertia / (self.radius * self.radius)) * self.gravity
    }
}

/// Rank with the usual `max(rows, cols) · ε · σ_max` threshold.
fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|s| **s > tol).count()
}

fn controllability_index_of(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<usize, ModelError> {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    let mut rank = 0;
    for k in 1..=n {
        ctrb.view_mut((0, (k - 1) * m), (n, m)).copy_from(&block);
        rank = numerical_rank(&ctrb.columns(0, k * m).into_owned());
        if rank == n {
            return Ok(k);
        }
        block = a * block;
    }
    Err(ModelError::NotControllable { rank, n })
}

/// Smallest `k` with `rank [B, AB, …, A^{k−1}B] = n`.
pub fn controllability_index(model: &LtiModel) -> Result<usize, ModelError> {
    controllability_index_of(&model.a, &model.b)
}

/// Continuous-time Jacobians `(A_c, B_c)` of the ball-and-plate dynamics at
/// the origin.
pub fn linearize_ball_plate(p: &BallPlateParams) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
    p.validate()?;
    let k = p.acceleration_gain();
    let mut ac = DMatrix::zeros(8, 8);
    let mut bc = DMatrix::zeros(8, 2);
    for axis in 0..2 {
        let o = 4 * axis;
        ac[(o, o + 1)] = 1.0;
        ac[(o + 1, o + 2)] = k;
        ac[(o + 2, o + 3)] = 1.0;
        bc[(o + 3, axis)] = 1.0;
    }
    Ok((ac, bc))
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm needs a square matrix");
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let squarings = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = m / 2f64.powi(squarings);

    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..100 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.abs().max() <= EXPM_SERIES_TOL * sum.abs().max() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Exact zero-order-hold discretization through the exponential of
/// `[[A_c, B_c], [0, 0]] · T_s`.
pub fn discretize_zoh(ac: &DMatrix<f64>, bc: &DMatrix<f64>, ts: f64) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
    let n = ac.nrows();
    if ac.ncols() != n || bc.nrows() != n {
        return Err(ModelError::Dimension("A_c must be square and match B_c".into()));
    }
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(ModelError::InvalidParams(format!("sample time must be positive, got {ts}")));
    }
    let m = bc.ncols();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(ac * ts));
    aug.view_mut((0, n), (n, m)).copy_from(&(bc * ts));
    let e = expm(&aug);
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned()))
}

/// `z = C x + D u`.
pub fn evaluate_output(model: &LtiModel, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
    if x.len() != model.n() || u.len() != model.m() {
        return Err(ModelError::Dimension(format!(
            "x has {} entries and u {}, expected {} and {}",
            x.len(),
            u.len(),
            model.n(),
            model.m()
        )));
    }
    Ok(&model.c * x + &model.d * u)
}

/// Model together with its constraint set.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub model: LtiModel,
    pub constraints: ConstraintSet,
}

#[derive(Serialize, Deserialize)]
struct PlantDocument {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d: Vec<Vec<f64>>,
    z_min: Vec<f64>,
    z_max: Vec<f64>,
    eps: Vec<f64>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(name: &str, rows: &[Vec<f64>], ncols_if_empty: usize) -> Result<DMatrix<f64>, ModelError> {
    let ncols = rows.first().map_or(ncols_if_empty, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(ModelError::Json(format!("{name} has ragged rows")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

impl Plant {
    pub fn new(model: LtiModel, constraints: ConstraintSet) -> Result<Self, ModelError> {
        if constraints.nz() != model.nz() {
            return Err(ModelError::Dimension(format!(
                "{} bounds for {} outputs",
                constraints.nz(),
                model.nz()
            )));
        }
        Ok(Self { model, constraints })
    }

    /// Linearized ball-and-plate with the benchmark bounds and `ε = 1e−4`.
    pub fn ball_plate() -> Self {
        Self::ball_plate_with(&BallPlateParams::default(), 1e-4).expect("built-in parameters are valid")
    }

    pub fn ball_plate_with(p: &BallPlateParams, eps: f64) -> Result<Self, ModelError> {
        let (ac, bc) = linearize_ball_plate(p)?;
        let (a, b) = discretize_zoh(&ac, &bc, p.sample_time)?;
        let mut c = DMatrix::zeros(6, 8);
        let mut d = DMatrix::zeros(6, 2);
        // (ż₁, θ₁, ż₂, θ₂, u₁, u₂)
        c[(0, 1)] = 1.0;
        c[(1, 2)] = 1.0;
        c[(2, 5)] = 1.0;
        c[(3, 6)] = 1.0;
        d[(4, 0)] = 1.0;
        d[(5, 1)] = 1.0;
        let quarter = std::f64::consts::FRAC_PI_4;
        let z_max = DVector::from_vec(vec![0.5, quarter, 0.5, quarter, 0.4, 0.4]);
        let constraints = ConstraintSet::uniform_eps(-z_max.clone(), z_max, eps)?;
        Self::new(LtiModel::new(a, b, c, d)?, constraints)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: PlantDocument = serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
        let a = from_rows("A", &doc.a, 0)?;
        let b = from_rows("B", &doc.b, 0)?;
        let c = from_rows("C", &doc.c, a.ncols())?;
        let d = from_rows("D", &doc.d, b.ncols())?;
        let model = LtiModel::new(a, b, c, d)?;
        let constraints = ConstraintSet::new(doc.z_min.into(), doc.z_max.into(), doc.eps.into())?;
        Self::new(model, constraints)
    }

    pub fn to_json(&self) -> String {
        let doc = PlantDocument {
            a: to_rows(&self.model.a),
            b: to_rows(&self.model.b),
            c: to_rows(&self.model.c),
            d: to_rows(&self.model.d),
            z_min: self.constraints.z_min.iter().copied().collect(),
            z_max: self.constraints.z_max.iter().copied().collect(),
            eps: self.constraints.eps.iter().copied().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("plain numeric document")
    }
}
