//! Velocity limit curves over the grid: MVC_V, MVC_A, their minimum MVC,
//! the constant velocity boundary L(s), and the ε-reconstructed MVC*.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::ConstraintTable;

/// Value used for "no bound at this node". Compares greater than every
/// finite velocity and is never fed into arithmetic.
pub const UNBOUNDED: f64 = f64::INFINITY;

/// Fallback top of the ε range when no node has a finite MVC.
pub const DEFAULT_VELOCITY_CAP: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitsError {
    #[error("epsilon {epsilon} outside the valid interval [{low}, {high}]")]
    EpsilonOutOfRange { epsilon: f64, low: f64, high: f64 },
}

/// Per-node `min{-D_i/A_i : A_i > 0}`.
pub fn compute_mvc_v(table: &ConstraintTable) -> Vec<f64> {
    let tol = table.zero_inertia_tol();
    (0..table.nodes())
        .into_par_iter()
        .map(|k| {
            table
                .a_row(k)
                .iter()
                .zip(table.d_row(k))
                .filter(|(a, _)| **a > tol)
                .map(|(a, d)| (-d / a).max(0.0))
                .fold(UNBOUNDED, f64::min)
        })
        .collect()
}

/// Per-node `min{sqrt(-C_i/B_i) : A_i ≠ 0, C_i/B_i ≤ 0}`.
pub fn compute_cvb(table: &ConstraintTable) -> Vec<f64> {
    let tol = table.zero_inertia_tol();
    (0..table.nodes())
        .into_par_iter()
        .map(|k| {
            let (a, b, c) = (table.a_row(k), table.b_row(k), table.c_row(k));
            (0..table.rows())
                .filter(|&i| a[i].abs() > tol && b[i] != 0.0 && c[i] / b[i] <= 0.0)
                .map(|i| (-c[i] / b[i]).sqrt())
                .fold(UNBOUNDED, f64::min)
        })
        .collect()
}

/// Largest `u = ṡ²` at node `k` (capped by `u_cap`) for which `α ≤ β`.
///
/// `β - α` is concave in `u` (a min of lines minus a max of lines), so the
/// feasible set is an interval starting at zero and bisection finds its end.
/// The returned value is always on the feasible side.
fn mvc_a_node(table: &ConstraintTable, k: usize, u_cap: f64) -> f64 {
    let gap = |u: f64| {
        let b = table.node_bounds(k, u);
        b.beta - b.alpha
    };
    let tol = table.zero_inertia_tol();
    // zero-inertia rows reduce to B u + C ≤ 0
    let u_zi = table
        .a_row(k)
        .iter()
        .zip(table.b_row(k).iter().zip(table.c_row(k)))
        .filter(|(a, (b, _))| a.abs() <= tol && **b > 0.0)
        .map(|(_, (b, c))| (-c / b).max(0.0))
        .fold(UNBOUNDED, f64::min);
    if gap(0.0) < 0.0 {
        return 0.0;
    }
    if gap(u_cap) >= 0.0 {
        return if u_zi.is_finite() { u_zi } else { UNBOUNDED };
    }
    let (mut lo, mut hi) = (0.0_f64, u_cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo.min(u_zi)
}

/// Per-node largest `ṡ` with `α(s, ṡ) ≤ β(s, ṡ)`, searched up to `s_dot_cap`.
pub fn compute_mvc_a(table: &ConstraintTable, s_dot_cap: f64) -> Vec<f64> {
    let u_cap = s_dot_cap * s_dot_cap;
    (0..table.nodes())
        .into_par_iter()
        .map(|k| {
            let u = mvc_a_node(table, k, u_cap);
            if u.is_finite() {
                u.sqrt()
            } else {
                UNBOUNDED
            }
        })
        .collect()
}

/// Inclusive node range `[first, last]`.
pub type NodeRange = (usize, usize);

/// Nodewise scan of `{k : level ≤ values[k]}` as maximal runs.
pub fn dense_level_scan(values: &[f64], level: f64) -> Vec<NodeRange> {
    let mut out = Vec::new();
    let mut start = None;
    for (k, v) in values.iter().enumerate() {
        match (level <= *v, start) {
            (true, None) => start = Some(k),
            (false, Some(a)) => {
                out.push((a, k - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        out.push((a, values.len() - 1));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Trend {
    Flat,
    Up,
    Down,
}

/// Answers `{k : level ≤ values[k]}` without visiting every node.
///
/// The curve is cut into maximal monotone runs at build time; inside a run
/// the predicate flips at most once, so each query costs one binary search
/// per run.
#[derive(Debug, Clone)]
pub struct LevelIndex {
    values: Vec<f64>,
    runs: Vec<(usize, usize, Trend)>,
}

impl LevelIndex {
    pub fn new(values: Vec<f64>) -> Self {
        let mut runs = Vec::new();
        if values.is_empty() {
            return Self { values, runs };
        }
        let mut start = 0;
        let mut trend = Trend::Flat;
        for k in 1..values.len() {
            let step = if values[k] > values[k - 1] {
                Trend::Up
            } else if values[k] < values[k - 1] {
                Trend::Down
            } else {
                Trend::Flat
            };
            if step == Trend::Flat {
                continue;
            }
            if trend == Trend::Flat {
                trend = step;
            } else if step != trend {
                runs.push((start, k - 1, trend));
                start = k;
                trend = Trend::Flat;
            }
        }
        runs.push((start, values.len() - 1, trend));
        Self { values, runs }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn run_count(&self) -> usize {
        self.runs.len()
    }

    pub fn query(&self, level: f64) -> Vec<NodeRange> {
        let mut out: Vec<NodeRange> = Vec::new();
        let mut push = |a: usize, b: usize| match out.last_mut() {
            Some(last) if last.1 + 1 == a => last.1 = b,
            _ => out.push((a, b)),
        };
        for &(a, b, trend) in &self.runs {
            let run = &self.values[a..=b];
            match trend {
                Trend::Flat => {
                    if level <= run[0] {
                        push(a, b);
                    }
                }
                Trend::Up => {
                    let first = run.partition_point(|v| level > *v);
                    if first < run.len() {
                        push(a + first, b);
                    }
                }
                Trend::Down => {
                    let count = run.partition_point(|v| level <= *v);
                    if count > 0 {
                        push(a, a + count - 1);
                    }
                }
            }
        }
        out
    }
}

fn intersect(x: &[NodeRange], y: &[NodeRange]) -> Vec<NodeRange> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < x.len() && j < y.len() {
        let lo = x[i].0.max(y[j].0);
        let hi = x[i].1.min(y[j].1);
        if lo <= hi {
            out.push((lo, hi));
        }
        if x[i].1 < y[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// `x \ y` for sorted disjoint range lists.
fn subtract(x: &[NodeRange], y: &[NodeRange]) -> Vec<NodeRange> {
    let mut out = Vec::new();
    let mut j = 0;
    for &(a, b) in x {
        let mut cur = a;
        while j < y.len() && y[j].1 < cur {
            j += 1;
        }
        let mut jj = j;
        while cur <= b {
            match y.get(jj) {
                Some(&(ya, yb)) if ya <= b => {
                    if ya > cur {
                        out.push((cur, ya - 1));
                    }
                    cur = yb + 1;
                    jj += 1;
                }
                _ => {
                    out.push((cur, b));
                    break;
                }
            }
        }
    }
    out
}

/// Where MVC* sits over a stretch of the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcKind {
    /// On the ε line with `ε ≤ L(s)`: cruising at ε is admissible (M̲).
    Cruise,
    /// On the ε line above `L(s)`: ε is reachable but not holdable (M̄).
    Overspeed,
    /// MVC lies below ε, so MVC* follows MVC.
    Mvc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionInterval {
    pub kind: ArcKind,
    pub first: usize,
    pub last: usize,
    pub s_start: f64,
    pub s_end: f64,
}

/// ε-independent curves, computed once per problem.
#[derive(Debug, Clone)]
pub struct VelocityLimits {
    table: ConstraintTable,
    mvc_v: Vec<f64>,
    mvc_a: Vec<f64>,
    mvc: LevelIndex,
    cvb: LevelIndex,
    max_mvc: f64,
}

impl VelocityLimits {
    pub fn new(table: ConstraintTable) -> Self {
        Self::with_velocity_cap(table, DEFAULT_VELOCITY_CAP)
    }

    /// `velocity_cap` tops the ε range when every node is unbounded.
    pub fn with_velocity_cap(table: ConstraintTable, velocity_cap: f64) -> Self {
        let mvc_v = compute_mvc_v(&table);
        let v_top = mvc_v
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let s_dot_cap = 10.0 * if v_top > 0.0 { v_top } else { velocity_cap };
        let mvc_a = compute_mvc_a(&table, s_dot_cap);
        let mvc: Vec<f64> = mvc_v.iter().zip(&mvc_a).map(|(v, a)| v.min(*a)).collect();
        let max_mvc = mvc
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let max_mvc = if max_mvc.is_finite() { max_mvc } else { velocity_cap };
        let cvb = compute_cvb(&table);
        Self {
            table,
            mvc_v,
            mvc_a,
            mvc: LevelIndex::new(mvc),
            cvb: LevelIndex::new(cvb),
            max_mvc,
        }
    }

    pub fn table(&self) -> &ConstraintTable {
        &self.table
    }

    pub fn mvc_v(&self) -> &[f64] {
        &self.mvc_v
    }

    pub fn mvc_a(&self) -> &[f64] {
        &self.mvc_a
    }

    pub fn mvc(&self) -> &[f64] {
        self.mvc.values()
    }

    pub fn cvb(&self) -> &[f64] {
        self.cvb.values()
    }

    pub fn cvb_index(&self) -> &LevelIndex {
        &self.cvb
    }

    /// Largest finite MVC value, the top of the admissible ε range.
    pub fn max_mvc(&self) -> f64 {
        self.max_mvc
    }

    /// Nodes where `ε ≤ L(s)`.
    pub fn cvb_ranges(&self, epsilon: f64) -> Vec<NodeRange> {
        self.cvb.query(epsilon)
    }

    /// Builds MVC* and the ε-line partition for one ε.
    pub fn reconstruct(&self, epsilon: f64) -> Result<LimitCurves<'_>, LimitsError> {
        let high = self.max_mvc;
        if !(epsilon >= 0.0 && epsilon <= high * (1.0 + 1e-9)) {
            return Err(LimitsError::EpsilonOutOfRange {
                epsilon,
                low: 0.0,
                high,
            });
        }
        let mvc_star = self.mvc().iter().map(|m| m.min(epsilon)).collect();
        let on_line = self.mvc.query(epsilon);
        let cruise = intersect(&on_line, &self.cvb.query(epsilon));
        let overspeed = subtract(&on_line, &cruise);
        let below = subtract(&[(0, self.table.intervals())], &on_line);
        let mut parts: Vec<(NodeRange, ArcKind)> = cruise
            .into_iter()
            .map(|r| (r, ArcKind::Cruise))
            .chain(overspeed.into_iter().map(|r| (r, ArcKind::Overspeed)))
            .chain(below.into_iter().map(|r| (r, ArcKind::Mvc)))
            .collect();
        parts.sort_by_key(|(r, _)| r.0);
        let mut partition: Vec<PartitionInterval> = parts
            .iter()
            .map(|&((first, last), kind)| PartitionInterval {
                kind,
                first,
                last,
                s_start: self.table.node_s(first),
                s_end: self.table.node_s(last),
            })
            .collect();
        for i in 1..partition.len() {
            let (prev, next) = (partition[i - 1].kind, partition[i].kind);
            let curve = if prev == ArcKind::Mvc || next == ArcKind::Mvc {
                self.mvc()
            } else {
                self.cvb()
            };
            let j = partition[i - 1].last;
            let s = self.crossing(curve, j, epsilon);
            partition[i - 1].s_end = s;
            partition[i].s_start = s;
        }
        Ok(LimitCurves {
            base: self,
            epsilon,
            mvc_star,
            partition,
        })
    }

    /// Location in `[s_j, s_{j+1}]` where the curve crosses `level`,
    /// linearly interpolated; snaps to a node if either end is unbounded.
    fn crossing(&self, curve: &[f64], j: usize, level: f64) -> f64 {
        let (f0, f1) = (curve[j], curve[j + 1]);
        let (s0, s1) = (self.table.node_s(j), self.table.node_s(j + 1));
        if !(f0.is_finite() && f1.is_finite()) || f0 == f1 {
            return if level <= f0 { s0 } else { s1 };
        }
        let t = ((level - f0) / (f1 - f0)).clamp(0.0, 1.0);
        s0 + t * (s1 - s0)
    }
}

/// MVC* and the partition of the path for one ε.
#[derive(Debug, Clone)]
pub struct LimitCurves<'a> {
    pub base: &'a VelocityLimits,
    pub epsilon: f64,
    pub mvc_star: Vec<f64>,
    pub partition: Vec<PartitionInterval>,
}

impl LimitCurves<'_> {
    pub fn table(&self) -> &ConstraintTable {
        self.base.table()
    }

    pub fn max_mvc(&self) -> f64 {
        self.base.max_mvc()
    }

    pub fn cruise_arcs(&self) -> impl Iterator<Item = &PartitionInterval> {
        self.partition.iter().filter(|p| p.kind == ArcKind::Cruise)
    }

    /// Label of node `k`.
    pub fn kind_at(&self, k: usize) -> ArcKind {
        let i = self.partition.partition_point(|p| p.last < k);
        self.partition[i].kind
    }
}

/// Free-function form of [`VelocityLimits::reconstruct`].
pub fn reconstruct(limits: &VelocityLimits, epsilon: f64) -> Result<LimitCurves<'_>, LimitsError> {
    limits.reconstruct(epsilon)
}
