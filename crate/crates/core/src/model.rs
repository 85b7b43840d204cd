//! Kinematic models and the phase-plane constraint table.
//!
//! Actuator velocity and acceleration boxes `|v| ≤ v_max`, `|a| ≤ a_max`
//! with `v = J q_s ṡ` and `a = J q_s s̈ + (J_s q_s + J q_ss) ṡ²` become, at
//! every grid node, the stacked row inequalities
//!
//! ```text
//! A ṡ + D ≤ 0,    A s̈ + B ṡ² + C ≤ 0
//! ```
//!
//! where `A = [J q_s; -J q_s]`, `B = [J_s q_s + J q_ss; -(…)]`,
//! `C = [-a_max; -a_max]` and `D = [-v_max; -v_max]`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{GeometricPath, GeometryError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("grid needs at least 16 intervals, got {0}")]
    GridTooSmall(usize),
    #[error("model expects a {expected}-dimensional configuration, path has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("limit vectors have {actual} entries, model has {expected} actuators")]
    LimitDimension { expected: usize, actual: usize },
    #[error("{0} must be strictly positive and finite")]
    NonPositiveLimit(&'static str),
    #[error("non-finite Jacobian entry at s = {s}")]
    NonFinite { s: f64 },
    #[error("no acceleration row bounds s̈ at s = {s}")]
    Malformed { s: f64 },
    #[error("query ({s}, {s_dot}) is outside the phase plane domain")]
    OutOfDomain { s: f64, s_dot: f64 },
    #[error("unknown model `{0}` (expected `unit` or `diffcaster`)")]
    UnknownModel(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Maps configuration rates to actuator rates, `v = J(q) q̇`.
pub trait KinematicModel: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn actuator_dim(&self) -> usize;
    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// Derivative of the Jacobian along the path, `∂J(q(s))/∂s`.
    ///
    /// The default is a central difference of `J` in the direction `q_s`.
    fn jacobian_s(&self, q: &DVector<f64>, q_s: &DVector<f64>) -> DMatrix<f64> {
        let h = 1e-6;
        let fwd = self.jacobian(&(q + q_s * h));
        let bwd = self.jacobian(&(q - q_s * h));
        (fwd - bwd) / (2.0 * h)
    }
}

/// Identity Jacobian of any dimension: actuators drive the configuration
/// rows directly.
#[derive(Debug, Clone, Copy)]
pub struct UnitModel {
    pub dim: usize,
}

impl KinematicModel for UnitModel {
    fn name(&self) -> &str {
        "unit"
    }

    fn state_dim(&self) -> usize {
        self.dim
    }

    fn actuator_dim(&self) -> usize {
        self.dim
    }

    fn jacobian(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }

    fn jacobian_s(&self, _q: &DVector<f64>, _q_s: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
}

/// Planar body `(x, y, θ)` driven by two actuators: a drive wheel aligned
/// with the heading and a lateral wheel mounted `offset` metres from the
/// rotation centre.
///
/// ```text
/// v_1 =  cos θ ẋ + sin θ ẏ
/// v_2 = -sin θ ẋ + cos θ ẏ + offset θ̇
/// ```
#[derive(Debug, Clone, Copy)]
pub struct DiffCaster {
    pub offset: f64,
}

impl Default for DiffCaster {
    fn default() -> Self {
        Self { offset: 0.5 }
    }
}

impl KinematicModel for DiffCaster {
    fn name(&self) -> &str {
        "diffcaster"
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn actuator_dim(&self) -> usize {
        2
    }

    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let (sin, cos) = q[2].sin_cos();
        DMatrix::from_row_slice(2, 3, &[cos, sin, 0.0, -sin, cos, self.offset])
    }

    fn jacobian_s(&self, q: &DVector<f64>, q_s: &DVector<f64>) -> DMatrix<f64> {
        let (sin, cos) = q[2].sin_cos();
        let w = q_s[2];
        DMatrix::from_row_slice(2, 3, &[-sin * w, cos * w, 0.0, -cos * w, -sin * w, 0.0])
    }
}

/// Looks up a built-in model by its configuration name.
pub fn model_by_name(name: &str, path_dim: usize) -> Result<Box<dyn KinematicModel>, ModelError> {
    match name {
        "unit" => Ok(Box::new(UnitModel { dim: path_dim })),
        "diffcaster" => Ok(Box::new(DiffCaster::default())),
        other => Err(ModelError::UnknownModel(other.to_string())),
    }
}

/// Symmetric actuator velocity and acceleration bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorLimits {
    v_max: Vec<f64>,
    a_max: Vec<f64>,
}

impl ActuatorLimits {
    pub fn new(v_max: Vec<f64>, a_max: Vec<f64>) -> Result<Self, ModelError> {
        if v_max.len() != a_max.len() {
            return Err(ModelError::LimitDimension {
                expected: v_max.len(),
                actual: a_max.len(),
            });
        }
        if v_max.is_empty() || v_max.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ModelError::NonPositiveLimit("v_max"));
        }
        if a_max.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(ModelError::NonPositiveLimit("a_max"));
        }
        Ok(Self { v_max, a_max })
    }

    pub fn v_max(&self) -> &[f64] {
        &self.v_max
    }

    pub fn a_max(&self) -> &[f64] {
        &self.a_max
    }

    pub fn dim(&self) -> usize {
        self.v_max.len()
    }

    pub fn max_accel(&self) -> f64 {
        self.a_max.iter().cloned().fold(0.0, f64::max)
    }
}

/// Lower and upper path-acceleration bounds at one phase-plane state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelBounds {
    pub alpha: f64,
    pub beta: f64,
}

/// Per-node constraint vectors `A, B, C, D` on a uniform grid over `[0, s_e]`.
#[derive(Debug, Clone)]
pub struct ConstraintTable {
    length: f64,
    intervals: usize,
    rows: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    tol_zi: f64,
    limits: ActuatorLimits,
}

impl ConstraintTable {
    /// Builds the table from per-node projections `J q_s` and
    /// `J_s q_s + J q_ss` (each an `m`-vector) on `intervals + 1` nodes.
    pub fn from_projections(
        length: f64,
        velocity_proj: &[Vec<f64>],
        curvature_proj: &[Vec<f64>],
        limits: ActuatorLimits,
    ) -> Result<Self, ModelError> {
        let nodes = velocity_proj.len();
        if nodes < 17 {
            return Err(ModelError::GridTooSmall(nodes.saturating_sub(1)));
        }
        let m = limits.dim();
        let rows = 2 * m;
        let mut a = Vec::with_capacity(nodes * rows);
        let mut b = Vec::with_capacity(nodes * rows);
        let mut c = Vec::with_capacity(nodes * rows);
        let mut d = Vec::with_capacity(nodes * rows);
        let step = length / (nodes - 1) as f64;
        for (k, (jq, bq)) in velocity_proj.iter().zip(curvature_proj).enumerate() {
            if jq.len() != m || bq.len() != m {
                return Err(ModelError::LimitDimension {
                    expected: jq.len(),
                    actual: m,
                });
            }
            if jq.iter().chain(bq).any(|x| !x.is_finite()) {
                return Err(ModelError::NonFinite { s: k as f64 * step });
            }
            for sign in [1.0, -1.0] {
                a.extend(jq.iter().map(|x| sign * x));
                b.extend(bq.iter().map(|x| sign * x));
                c.extend(limits.a_max.iter().map(|x| -x));
                d.extend(limits.v_max.iter().map(|x| -x));
            }
        }
        let max_a = a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        Ok(Self {
            length,
            intervals: nodes - 1,
            rows,
            a,
            b,
            c,
            d,
            tol_zi: 1e-8 * max_a,
            limits,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of grid intervals `N`; there are `N + 1` nodes.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn nodes(&self) -> usize {
        self.intervals + 1
    }

    pub fn step(&self) -> f64 {
        self.length / self.intervals as f64
    }

    pub fn node_s(&self, k: usize) -> f64 {
        if k == self.intervals {
            self.length
        } else {
            k as f64 * self.step()
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn limits(&self) -> &ActuatorLimits {
        &self.limits
    }

    pub fn zero_inertia_tol(&self) -> f64 {
        self.tol_zi
    }

    pub fn a_row(&self, k: usize) -> &[f64] {
        &self.a[k * self.rows..(k + 1) * self.rows]
    }

    pub fn b_row(&self, k: usize) -> &[f64] {
        &self.b[k * self.rows..(k + 1) * self.rows]
    }

    pub fn c_row(&self, k: usize) -> &[f64] {
        &self.c[k * self.rows..(k + 1) * self.rows]
    }

    pub fn d_row(&self, k: usize) -> &[f64] {
        &self.d[k * self.rows..(k + 1) * self.rows]
    }

    /// `α` and `β` at grid node `k` for squared path velocity `u = ṡ²`.
    /// An empty index set yields `-∞` / `+∞`.
    #[inline]
    pub fn node_bounds(&self, k: usize, u: f64) -> AccelBounds {
        let base = k * self.rows;
        let mut alpha = f64::NEG_INFINITY;
        let mut beta = f64::INFINITY;
        for i in base..base + self.rows {
            let a = self.a[i];
            if a.abs() <= self.tol_zi {
                continue;
            }
            let val = (-self.b[i] * u - self.c[i]) / a;
            if a > 0.0 {
                beta = beta.min(val);
            } else {
                alpha = alpha.max(val);
            }
        }
        AccelBounds { alpha, beta }
    }

    /// Largest `u ≥ 0` with `u + 2 Δs α_k(u) ≤ target`, i.e. the state one
    /// node back on an α-integral curve that lands on `target`.
    ///
    /// Each row contributes a linear function of `u`, so the bound is exact.
    /// Returns `None` when even `u = 0` cannot decelerate onto `target`.
    pub fn alpha_preimage(&self, k: usize, target: f64) -> Option<f64> {
        let h2 = 2.0 * self.step();
        let base = k * self.rows;
        let mut upper = f64::INFINITY;
        let mut lower = 0.0_f64;
        for i in base..base + self.rows {
            let a = self.a[i];
            if a >= -self.tol_zi {
                continue;
            }
            let slope = 1.0 - h2 * self.b[i] / a;
            let icpt = -h2 * self.c[i] / a;
            if slope > 0.0 {
                upper = upper.min((target - icpt) / slope);
            } else if slope < 0.0 {
                lower = lower.max((target - icpt) / slope);
            } else if icpt > target {
                return None;
            }
        }
        if upper < lower {
            None
        } else {
            Some(upper)
        }
    }

    fn locate(&self, s: f64) -> Option<(usize, f64)> {
        let slack = 1e-12 * self.length.max(1.0);
        if !(s >= -slack && s <= self.length + slack) {
            return None;
        }
        let x = (s / self.step()).clamp(0.0, self.intervals as f64);
        let k = (x.floor() as usize).min(self.intervals - 1);
        Some((k, x - k as f64))
    }

    /// Bounds at an arbitrary `(s, ṡ)`, interpolating `A, B, C` linearly
    /// between nodes.
    pub fn bounds(&self, s: f64, s_dot: f64) -> Result<AccelBounds, ModelError> {
        let (k, w) = self
            .locate(s)
            .filter(|_| s_dot >= 0.0 && s_dot.is_finite())
            .ok_or(ModelError::OutOfDomain { s, s_dot })?;
        let u = s_dot * s_dot;
        let (lo, hi) = (k * self.rows, (k + 1) * self.rows);
        let mut alpha = f64::NEG_INFINITY;
        let mut beta = f64::INFINITY;
        for i in 0..self.rows {
            let a = (1.0 - w) * self.a[lo + i] + w * self.a[hi + i];
            if a.abs() <= self.tol_zi {
                continue;
            }
            let b = (1.0 - w) * self.b[lo + i] + w * self.b[hi + i];
            let c = (1.0 - w) * self.c[lo + i] + w * self.c[hi + i];
            let val = (-b * u - c) / a;
            if a > 0.0 {
                beta = beta.min(val);
            } else {
                alpha = alpha.max(val);
            }
        }
        Ok(AccelBounds { alpha, beta })
    }

    /// Lower path-acceleration bound `α(s, ṡ)`.
    pub fn alpha(&self, s: f64, s_dot: f64) -> Result<f64, ModelError> {
        let b = self.bounds(s, s_dot)?;
        if b.alpha == f64::NEG_INFINITY && b.beta == f64::INFINITY {
            return Err(ModelError::Malformed { s });
        }
        Ok(b.alpha)
    }

    /// Upper path-acceleration bound `β(s, ṡ)`.
    pub fn beta(&self, s: f64, s_dot: f64) -> Result<f64, ModelError> {
        let b = self.bounds(s, s_dot)?;
        if b.alpha == f64::NEG_INFINITY && b.beta == f64::INFINITY {
            return Err(ModelError::Malformed { s });
        }
        Ok(b.beta)
    }
}

/// Samples the path on `n` intervals and stacks the constraint rows.
pub fn build_constraint_table(
    model: &dyn KinematicModel,
    limits: &ActuatorLimits,
    path: &dyn GeometricPath,
    n: usize,
) -> Result<ConstraintTable, ModelError> {
    if n < 16 {
        return Err(ModelError::GridTooSmall(n));
    }
    if model.state_dim() != path.dim() {
        return Err(ModelError::DimensionMismatch {
            expected: model.state_dim(),
            actual: path.dim(),
        });
    }
    if model.actuator_dim() != limits.dim() {
        return Err(ModelError::LimitDimension {
            expected: model.actuator_dim(),
            actual: limits.dim(),
        });
    }
    let length = path.length();
    let step = length / n as f64;
    let projections: Result<Vec<(Vec<f64>, Vec<f64>)>, ModelError> = (0..=n)
        .into_par_iter()
        .map(|k| {
            let s = if k == n { length } else { k as f64 * step };
            let d = path.derivatives(s)?;
            let j = model.jacobian(&d.q);
            let js = model.jacobian_s(&d.q, &d.q_s);
            if j.iter().chain(js.iter()).any(|x| !x.is_finite()) {
                return Err(ModelError::NonFinite { s });
            }
            let jq = &j * &d.q_s;
            let bq = &js * &d.q_s + &j * &d.q_ss;
            Ok((jq.iter().copied().collect(), bq.iter().copied().collect()))
        })
        .collect();
    let (jq, bq): (Vec<_>, Vec<_>) = projections?.into_iter().unzip();
    ConstraintTable::from_projections(length, &jq, &bq, limits.clone())
}
