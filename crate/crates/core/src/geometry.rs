//! Geometric paths and their arc-length parameterization.
//!
//! The planner works in path coordinate `s` (arc length of the position
//! curve). A [`GeometricPath`] provides the configuration `q(s)` together
//! with its first and second derivatives along `s`. The built-in path is a
//! cubic Bézier curve, optionally carrying an orientation row that rotates
//! linearly from `0` to `π` over the path.

use std::f64::consts::PI;

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("Bézier parameter {0} is outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("path coordinate {s} is outside [0, {length}]")]
    CoordinateOutOfRange { s: f64, length: f64 },
    #[error("path has zero length (all control points coincide)")]
    ZeroLength,
    #[error("control points must share one non-zero dimension")]
    BadControlPoints,
    #[error("arc-length table needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("arc-length table is not strictly increasing near λ = {0}")]
    NonMonotone(f64),
}

/// Configuration and its derivatives with respect to the path coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDerivatives {
    pub q: DVector<f64>,
    pub q_s: DVector<f64>,
    pub q_ss: DVector<f64>,
}

/// A twice-differentiable map from path coordinate to configuration.
pub trait GeometricPath: Send + Sync {
    /// Total path length `s_e`.
    fn length(&self) -> f64;
    /// Dimension of the configuration vector.
    fn dim(&self) -> usize;
    fn derivatives(&self, s: f64) -> Result<ConfigDerivatives, GeometryError>;
}

/// How the heading row of the configuration is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    /// Configuration is the position only.
    #[default]
    None,
    /// Heading `θ(s) = π s / s_e` is appended as the last row.
    Linear,
}

/// Cubic Bézier curve in an arbitrary number of dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct BezierPath {
    points: [DVector<f64>; 4],
    orientation: Orientation,
}

impl BezierPath {
    pub fn new(points: [Vec<f64>; 4], orientation: Orientation) -> Result<Self, GeometryError> {
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(GeometryError::BadControlPoints);
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(GeometryError::BadControlPoints);
        }
        let points = points.map(DVector::from_vec);
        Ok(Self {
            points,
            orientation,
        })
    }

    pub fn control_points(&self) -> &[DVector<f64>; 4] {
        &self.points
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Dimension of the position curve (without the heading row).
    pub fn position_dim(&self) -> usize {
        self.points[0].len()
    }

    /// Evaluates `P(λ) = Σ C(3,i) (1-λ)^(3-i) λ^i P_i`.
    pub fn eval(&self, lambda: f64) -> Result<DVector<f64>, GeometryError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(GeometryError::ParameterOutOfRange(lambda));
        }
        Ok(self.point(lambda))
    }

    fn point(&self, l: f64) -> DVector<f64> {
        let m = 1.0 - l;
        let [p0, p1, p2, p3] = &self.points;
        p0 * (m * m * m) + p1 * (3.0 * m * m * l) + p2 * (3.0 * m * l * l) + p3 * (l * l * l)
    }

    fn d1(&self, l: f64) -> DVector<f64> {
        let m = 1.0 - l;
        let [p0, p1, p2, p3] = &self.points;
        ((p1 - p0) * (m * m) + (p2 - p1) * (2.0 * m * l) + (p3 - p2) * (l * l)) * 3.0
    }

    fn d2(&self, l: f64) -> DVector<f64> {
        let [p0, p1, p2, p3] = &self.points;
        ((p2 - p1 * 2.0 + p0) * (1.0 - l) + (p3 - p2 * 2.0 + p1) * l) * 6.0
    }

    fn speed(&self, l: f64) -> f64 {
        self.d1(l).norm()
    }
}

/// Free function form of [`BezierPath::eval`].
pub fn bezier_eval(path: &BezierPath, lambda: f64) -> Result<DVector<f64>, GeometryError> {
    path.eval(lambda)
}

// 5-point Gauss-Legendre on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Monotone table `λ_k ↔ s_k` for the position curve of a Bézier path.
#[derive(Debug, Clone)]
pub struct ArcLengthMap {
    lambda: Vec<f64>,
    s: Vec<f64>,
    // PCHIP slopes dλ/ds at the samples
    slope: Vec<f64>,
    tol_s: f64,
}

impl ArcLengthMap {
    /// Cumulative arc length by composite Simpson over `n_samples` λ-intervals.
    pub fn build(path: &BezierPath, n_samples: usize) -> Result<Self, GeometryError> {
        if n_samples < 2 {
            return Err(GeometryError::TooFewSamples(n_samples));
        }
        let p0 = &path.points[0];
        if path.points.iter().all(|p| (p - p0).norm() == 0.0) {
            return Err(GeometryError::ZeroLength);
        }
        let h = 1.0 / n_samples as f64;
        let mut lambda = Vec::with_capacity(n_samples + 1);
        let mut s = Vec::with_capacity(n_samples + 1);
        lambda.push(0.0);
        s.push(0.0);
        let mut f_left = path.speed(0.0);
        for k in 0..n_samples {
            let l0 = k as f64 * h;
            let l1 = if k + 1 == n_samples { 1.0 } else { (k + 1) as f64 * h };
            let f_mid = path.speed(0.5 * (l0 + l1));
            let f_right = path.speed(l1);
            let seg = (l1 - l0) / 6.0 * (f_left + 4.0 * f_mid + f_right);
            let next = s[k] + seg;
            if !(next > s[k]) {
                return Err(GeometryError::NonMonotone(l0));
            }
            lambda.push(l1);
            s.push(next);
            f_left = f_right;
        }
        let total = *s.last().unwrap();
        if !(total > 1e-12) {
            return Err(GeometryError::ZeroLength);
        }
        let slope = pchip_slopes(&s, &lambda);
        Ok(Self {
            lambda,
            s,
            slope,
            tol_s: 1e-9 * total.max(1.0),
        })
    }

    pub fn total_length(&self) -> f64 {
        *self.s.last().unwrap()
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.lambda, &self.s)
    }

    pub fn tolerance(&self) -> f64 {
        self.tol_s
    }

    /// Arc length from 0 to `lambda`.
    pub fn arc_length_at(&self, path: &BezierPath, lambda: f64) -> f64 {
        let lambda = lambda.clamp(0.0, 1.0);
        let k = match self
            .lambda
            .binary_search_by(|x| x.partial_cmp(&lambda).unwrap())
        {
            Ok(k) => return self.s[k],
            Err(k) => k - 1,
        };
        self.s[k] + gauss_length(path, self.lambda[k], lambda)
    }

    /// Inverse map `λ(s)`: monotone cubic interpolation, polished by a
    /// bracketed Newton iteration on the exact arc length.
    pub fn lambda_at(&self, path: &BezierPath, s: f64) -> Result<f64, GeometryError> {
        let total = self.total_length();
        if !(s >= -self.tol_s && s <= total + self.tol_s) {
            return Err(GeometryError::CoordinateOutOfRange { s, length: total });
        }
        let s = s.clamp(0.0, total);
        let k = match self.s.binary_search_by(|x| x.partial_cmp(&s).unwrap()) {
            Ok(k) => return Ok(self.lambda[k]),
            Err(k) => k - 1,
        };
        let (s0, s1) = (self.s[k], self.s[k + 1]);
        let (l0, l1) = (self.lambda[k], self.lambda[k + 1]);
        let hs = s1 - s0;
        let t = (s - s0) / hs;
        let t2 = t * t;
        let t3 = t2 * t;
        let mut lam = (2.0 * t3 - 3.0 * t2 + 1.0) * l0
            + (t3 - 2.0 * t2 + t) * hs * self.slope[k]
            + (-2.0 * t3 + 3.0 * t2) * l1
            + (t3 - t2) * hs * self.slope[k + 1];
        let (mut lo, mut hi) = (l0, l1);
        lam = lam.clamp(lo, hi);
        for _ in 0..30 {
            let err = s0 + gauss_length(path, l0, lam) - s;
            if err.abs() <= 1e-15 * total.max(1.0) {
                break;
            }
            if err > 0.0 {
                hi = lam;
            } else {
                lo = lam;
            }
            let speed = path.speed(lam);
            let mut next = lam - err / speed;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - lam).abs() < 1e-17 {
                break;
            }
            lam = next;
        }
        Ok(lam)
    }
}

/// Free function form of [`ArcLengthMap::build`].
pub fn build_arclength_map(path: &BezierPath, n_samples: usize) -> Result<ArcLengthMap, GeometryError> {
    ArcLengthMap::build(path, n_samples)
}

fn gauss_length(path: &BezierPath, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS)
        .map(|(x, w)| w * path.speed(mid + half * x))
        .sum::<f64>()
        * half
}

// Fritsch-Carlson slopes for monotone cubic Hermite interpolation of y(x).
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let delta: Vec<f64> = (0..n - 1)
        .map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k]))
        .collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] <= 0.0 {
            m[k] = 0.0;
        } else {
            let h0 = x[k] - x[k - 1];
            let h1 = x[k + 1] - x[k];
            let w1 = 2.0 * h1 + h0;
            let w2 = h1 + 2.0 * h0;
            m[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    m
}

/// A Bézier path together with its arc-length table.
#[derive(Debug, Clone)]
pub struct ParameterizedPath {
    path: BezierPath,
    map: ArcLengthMap,
}

impl ParameterizedPath {
    pub fn new(path: BezierPath, n_samples: usize) -> Result<Self, GeometryError> {
        let map = ArcLengthMap::build(&path, n_samples)?;
        Ok(Self { path, map })
    }

    pub fn bezier(&self) -> &BezierPath {
        &self.path
    }

    pub fn map(&self) -> &ArcLengthMap {
        &self.map
    }

    pub fn lambda_at(&self, s: f64) -> Result<f64, GeometryError> {
        self.map.lambda_at(&self.path, s)
    }
}

/// `(q, q_s, q_ss)` at path coordinate `s`, by the chain rule through `λ(s)`.
pub fn config_derivatives(
    path: &BezierPath,
    map: &ArcLengthMap,
    s: f64,
) -> Result<ConfigDerivatives, GeometryError> {
    let length = map.total_length();
    let lambda = map.lambda_at(path, s)?;
    let s = s.clamp(0.0, length);
    let pos = path.point(lambda);
    let mut d1 = path.d1(lambda);
    let mut d2 = path.d2(lambda);
    let mut speed = d1.norm();
    if speed < 1e-12 {
        // Coincident control points leave P' = 0 at an end; use the
        // one-sided limit of the tangent instead.
        let nudge = if lambda < 0.5 { 1e-7 } else { 1.0 - 1e-7 };
        d1 = path.d1(nudge);
        d2 = path.d2(nudge);
        speed = d1.norm();
    }
    let tangent = &d1 / speed;
    let q_ss_pos = (&d2 - &tangent * d2.dot(&tangent)) / (speed * speed);

    let dim = path.position_dim();
    let rows = match path.orientation {
        Orientation::None => dim,
        Orientation::Linear => dim + 1,
    };
    let mut q = DVector::zeros(rows);
    let mut q_s = DVector::zeros(rows);
    let mut q_ss = DVector::zeros(rows);
    q.rows_mut(0, dim).copy_from(&pos);
    q_s.rows_mut(0, dim).copy_from(&tangent);
    q_ss.rows_mut(0, dim).copy_from(&q_ss_pos);
    if path.orientation == Orientation::Linear {
        q[dim] = PI * s / length;
        q_s[dim] = PI / length;
    }
    Ok(ConfigDerivatives { q, q_s, q_ss })
}

impl GeometricPath for ParameterizedPath {
    fn length(&self) -> f64 {
        self.map.total_length()
    }

    fn dim(&self) -> usize {
        match self.path.orientation {
            Orientation::None => self.path.position_dim(),
            Orientation::Linear => self.path.position_dim() + 1,
        }
    }

    fn derivatives(&self, s: f64) -> Result<ConfigDerivatives, GeometryError> {
        config_derivatives(&self.path, &self.map, s)
    }
}
