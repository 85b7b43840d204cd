//! Bidirectional integration: replaces each concave corner of a profile
//! with an acceleration-continuous blend.
//!
//! Around a corner `p1`, points `p2` (before) and `p3` (after) are taken on
//! the profile. The blend follows
//!
//! ```text
//! s̈ = β* - t (β* - α*),   t = (s - s_p2) / (s_p3 - s_p2)
//! β* = α + δ1 (β - α),    α* = α + δ2 (β - α)
//! ```
//!
//! where `δ1`, `δ2` reproduce the profile's acceleration at `p2` and `p3`.
//! Since every value is a convex combination of `α` and `β` the blend stays
//! admissible. `l1` runs forward from `p2`, `l2` backward from `p3`, and
//! they join at the corner node. The landing point `p3` is found by
//! shooting so that `l1` arrives on the profile.

use log::warn;
use thiserror::Error;

use crate::limits::LimitCurves;
use crate::model::ConstraintTable;
use crate::planner::{accel_tol, velocity_tol, Intersection, PhaseProfile, SegmentTag};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("smoothing failed at s = {s}: {detail}")]
pub struct SmoothingFailure {
    pub s: f64,
    pub detail: String,
}

/// Blend weights and the ramp endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendWeights {
    pub delta1: f64,
    pub delta2: f64,
    pub s_p2: f64,
    pub s_p3: f64,
}

impl BlendWeights {
    fn ramp(&self, s: f64) -> f64 {
        if self.s_p3 <= self.s_p2 {
            return 1.0;
        }
        ((s - self.s_p2) / (self.s_p3 - self.s_p2)).clamp(0.0, 1.0)
    }

    /// Blended acceleration given the local bounds.
    pub fn accel(&self, s: f64, alpha: f64, beta: f64) -> f64 {
        let t = self.ramp(s);
        alpha + (beta - alpha) * (self.delta1 - t * (self.delta1 - self.delta2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingWindow {
    /// Corner `(s, ṡ)` on the smoothed profile.
    pub p1: (f64, f64),
    pub p2: (f64, f64),
    pub p3: (f64, f64),
    pub accel_p2: f64,
    pub accel_p3: f64,
    pub weights: BlendWeights,
    /// First and last node whose velocity the blend replaced.
    pub first: usize,
    pub last: usize,
    /// `|ṡ_l1 - ṡ_l2|` at the corner node before stitching.
    pub gap: f64,
    pub half_width: usize,
}

/// `δ = (s̈ - α) / (β - α)` clamped to `[0, 1]`; a pinched pair gives 0.5.
pub fn blend_fraction(accel: f64, alpha: f64, beta: f64, tol: f64) -> f64 {
    let span = beta - alpha;
    if !(span >= tol) {
        warn!("degenerate bound pair ({alpha}, {beta}); using a half blend");
        return 0.5;
    }
    ((accel - alpha) / span).clamp(0.0, 1.0)
}

/// `(β*, α*)` at `(s, ṡ)`.
pub fn blend_fields(
    table: &ConstraintTable,
    weights: &BlendWeights,
    s: f64,
    s_dot: f64,
) -> Option<(f64, f64)> {
    let b = table.bounds(s, s_dot).ok()?;
    if !(b.alpha.is_finite() && b.beta.is_finite()) {
        return None;
    }
    let span = b.beta - b.alpha;
    Some((
        b.alpha + weights.delta1 * span,
        b.alpha + weights.delta2 * span,
    ))
}

fn node_accel(table: &ConstraintTable, w: &BlendWeights, k: usize, u: f64) -> f64 {
    let b = table.node_bounds(k, u);
    w.accel(table.node_s(k), b.alpha, b.beta)
}

/// Root of `f` on `[a, b]` with `fa <= 0 <= fb`: Illinois regula falsi,
/// falling back to bisection whenever the bracket stops halving. Returns
/// whichever end has the smaller residual.
fn refine_root(
    mut f: impl FnMut(f64) -> f64,
    (mut a, mut fa): (f64, f64),
    (mut b, mut fb): (f64, f64),
    xtol: f64,
    ftol: f64,
) -> (f64, f64) {
    let mut side = 0;
    let mut width = [b - a; 2];
    for i in 0..200 {
        if fa.abs() <= ftol || fb.abs() <= ftol || b - a <= xtol {
            break;
        }
        let mut x = b - fb * (b - a) / (fb - fa);
        if !(x > a && x < b) || (i >= 2 && b - a > 0.5 * width[0]) {
            x = 0.5 * (a + b);
            side = 0;
        }
        width = [width[1], b - a];
        if x <= a || x >= b {
            break;
        }
        let fx = f(x);
        if fx < 0.0 {
            (a, fa) = (x, fx);
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            (b, fb) = (x, fx);
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    // the halved residuals are only weights; report the true ones
    let (ra, rb) = (f(a), f(b));
    if ra.abs() < rb.abs() {
        (a, ra)
    } else {
        (b, rb)
    }
}

/// Solves `u + 2 len F(s_k, u) = target` for `u` on `[0, cap]`.
fn inverse_step(
    table: &ConstraintTable,
    w: &BlendWeights,
    k: usize,
    len: f64,
    target: f64,
    cap: f64,
) -> Option<f64> {
    let g = |u: f64| u + 2.0 * len * node_accel(table, w, k, u) - target;
    let (lo, hi) = (0.0, cap.min(1e3 * (target + 1.0)));
    let (glo, ghi) = (g(lo), g(hi));
    if glo > 0.0 || !(ghi >= 0.0) {
        return None;
    }
    let (u, _) = refine_root(g, (lo, glo), (hi, ghi), 1e-16 * hi, 1e-16 * (1.0 + target));
    Some(u)
}

/// Velocity of the piecewise-linear-in-`u` profile at `s`, and the cell.
fn profile_at(profile: &PhaseProfile, s: f64) -> (usize, f64) {
    let n = profile.nodes() - 1;
    let j = ((s / profile.step).floor() as usize).min(n - 1);
    let u = profile.u[j] + 2.0 * (s - profile.s[j]) * profile.s_ddot[j];
    (j, u.max(0.0))
}

struct Shot {
    weights: BlendWeights,
    accel_p3: f64,
    u_p3: f64,
    cell: usize,
    l1: Vec<f64>,
    miss: f64,
}

fn shoot(
    curves: &LimitCurves,
    profile: &PhaseProfile,
    start: usize,
    delta1: f64,
    s3: f64,
) -> Option<Shot> {
    let table = curves.table();
    let h = profile.step;
    let (cell, u_p3) = profile_at(profile, s3);
    let accel_p3 = profile.s_ddot[cell];
    let b3 = table.bounds(s3, u_p3.sqrt()).ok()?;
    let delta2 = blend_fraction(accel_p3, b3.alpha, b3.beta, accel_tol(table));
    let weights = BlendWeights {
        delta1,
        delta2,
        s_p2: profile.s[start],
        s_p3: s3,
    };
    let mut l1 = vec![profile.u[start]];
    let mut u = profile.u[start];
    for k in start..cell {
        u += 2.0 * h * node_accel(table, &weights, k, u);
        if !(u > 0.0) {
            return None;
        }
        l1.push(u);
    }
    let end = u + 2.0 * (s3 - profile.s[cell]) * node_accel(table, &weights, cell, u);
    Some(Shot {
        weights,
        accel_p3,
        u_p3,
        cell,
        l1,
        miss: end - u_p3,
    })
}

/// Blends one corner with half-width `w` nodes, looking for `p3` no further
/// than node `limit`. Returns the window and the replacement velocities
/// (in `u`) for nodes `first + 1 ..= last`.
pub fn bio(
    curves: &LimitCurves,
    profile: &PhaseProfile,
    corner: &Intersection,
    w: usize,
    limit: usize,
) -> Result<(SmoothingWindow, Vec<f64>), SmoothingFailure> {
    let fail = |detail: &str| SmoothingFailure {
        s: corner.s,
        detail: detail.to_string(),
    };
    let table = curves.table();
    let h = profile.step;
    let n = corner.node;
    if w == 0 || w > n || limit <= n {
        return Err(fail("no room for a window"));
    }
    let start = n - w;
    let u2 = profile.u[start];
    let b2 = table.node_bounds(start, u2);
    let accel_p2 = profile.s_ddot[start];
    let delta1 = blend_fraction(accel_p2, b2.alpha, b2.beta, accel_tol(table));

    // scan for the first landing from below, then refine s_p3
    let s_lo = profile.s[n] + 0.25 * w as f64 * h;
    let s_hi = profile.s[limit].min(profile.s[n] + 4.0 * w as f64 * h);
    if s_hi <= s_lo {
        return Err(fail("no room for a window"));
    }
    let probes = 8;
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for i in 0..=probes {
        let s3 = s_lo + (s_hi - s_lo) * i as f64 / probes as f64;
        let Some(shot) = shoot(curves, profile, start, delta1, s3) else {
            continue;
        };
        if let Some((sp, mp)) = prev {
            if mp < 0.0 && shot.miss >= 0.0 {
                bracket = Some((sp, mp, s3, shot.miss));
                break;
            }
        }
        prev = Some((s3, shot.miss));
    }
    let (a, fa, b, fb) = bracket.ok_or_else(|| fail("blend never lands on the profile"))?;
    // the miss is smooth in s_p3 apart from small jumps at cell boundaries
    let miss = |x: f64| match shoot(curves, profile, start, delta1, x) {
        Some(s) => s.miss,
        None => f64::INFINITY,
    };
    let (x, _) = refine_root(
        miss,
        (a, fa),
        (b, fb),
        1e-14 * profile.s[limit],
        1e-15 * (1.0 + u2),
    );
    let shot = shoot(curves, profile, start, delta1, x).ok_or_else(|| fail("lost the landing"))?;
    let s3 = x;
    let wts = shot.weights;
    let cell = shot.cell;

    // l2: exact inverse steps from p3 back to the corner node
    let cap = |k: usize| {
        let c = curves.mvc_star[k];
        if c.is_finite() {
            c * c
        } else {
            f64::INFINITY
        }
    };
    let mut l2 = vec![0.0; cell + 1 - n];
    let mut target = shot.u_p3;
    let mut len = s3 - profile.s[cell];
    for k in (n..=cell).rev() {
        let u = inverse_step(table, &wts, k, len, target, cap(k) + 1.0)
            .ok_or_else(|| fail("backward blend has no preimage"))?;
        l2[k - n] = u;
        target = u;
        len = h;
    }
    let gap = (shot.l1[w].sqrt() - l2[0].sqrt()).abs();

    let mut new_u = Vec::with_capacity(cell - start);
    new_u.extend_from_slice(&shot.l1[1..=w]);
    new_u.extend_from_slice(&l2[1..]);

    let tol_v = velocity_tol(curves);
    let tol_a = accel_tol(table);
    for (i, u) in new_u.iter().enumerate() {
        let k = start + 1 + i;
        if !(*u > 0.0) || u.sqrt() > curves.mvc_star[k] + tol_v {
            return Err(fail("blend leaves the region under MVC*"));
        }
    }
    // the cell holding p3 mixes blend and profile; it must stay admissible
    let u_cell = *new_u.last().unwrap_or(&u2);
    let acc = (profile.u[cell + 1] - u_cell) / (2.0 * h);
    let bc = table.node_bounds(cell, u_cell);
    if acc < bc.alpha - tol_a || acc > bc.beta + tol_a {
        return Err(fail("landing cell violates the acceleration bounds"));
    }

    let window = SmoothingWindow {
        p1: (profile.s[n], shot.l1[w].sqrt()),
        p2: (profile.s[start], u2.sqrt()),
        p3: (s3, shot.u_p3.sqrt()),
        accel_p2,
        accel_p3: shot.accel_p3,
        weights: wts,
        first: start,
        last: cell,
        gap,
        half_width: w,
    };
    Ok((window, new_u))
}

/// Default half-width `max(8Δs, 0.01 s_e)` in nodes.
pub fn default_half_width(intervals: usize) -> usize {
    8.max((0.01 * intervals as f64).ceil() as usize)
}

#[derive(Debug, Clone)]
pub struct SmoothedProfile {
    pub profile: PhaseProfile,
    pub windows: Vec<SmoothingWindow>,
}

/// Blends every recorded intersection, left to right.
pub fn smooth_all(
    curves: &LimitCurves,
    profile: &PhaseProfile,
    half_width: Option<usize>,
) -> Result<SmoothedProfile, SmoothingFailure> {
    let table = curves.table();
    let n = table.intervals();
    let h = profile.step;
    let w_default = half_width.unwrap_or_else(|| default_half_width(n));
    let mut out = profile.clone();
    let mut windows = Vec::new();
    let corners = &profile.intersections;
    let mut floor = 0;
    for (i, corner) in corners.iter().enumerate() {
        let k = corner.node;
        let next = corners.get(i + 1).map_or(n, |c| c.node);
        let prev = if i == 0 { 0 } else { corners[i - 1].node };
        // neighbouring windows split the gap; the path ends need no sharing
        let right = if i + 1 == corners.len() { next - k } else { (next - k) / 2 };
        let mut w = w_default
            .min(k.saturating_sub(floor))
            .min(right)
            .min(if i == 0 { k } else { (k - prev) / 2 });
        let limit = if next == n { n } else { next - (next - k) / 2 };
        let mut result = Err(SmoothingFailure {
            s: corner.s,
            detail: "no room for a window".into(),
        });
        for _ in 0..=8 {
            if w == 0 {
                break;
            }
            result = bio(curves, &out, corner, w, limit.max(k + 1));
            if result.is_ok() {
                break;
            }
            w /= 2;
        }
        let (window, new_u) = result?;
        for (i, u) in new_u.iter().enumerate() {
            let j = window.first + 1 + i;
            out.u[j] = *u;
            out.s_dot[j] = u.sqrt();
        }
        for j in window.first..=window.last {
            out.s_ddot[j] = (out.u[j + 1] - out.u[j]) / (2.0 * h);
            out.tags[j] = SegmentTag::BioBlend;
        }
        floor = window.last + 1;
        windows.push(window);
    }
    let b = table.node_bounds(n, out.u[n]);
    out.s_ddot[n] = out.s_ddot[n - 1].clamp(b.alpha, b.beta.max(b.alpha));
    Ok(SmoothedProfile {
        profile: out,
        windows,
    })
}

/// One-sided acceleration jump at `node`: the left limit is extrapolated
/// with a cubic through the four preceding cells (each sampled at its left
/// node), the right limit is the cell starting at `node`. On a smooth
/// blend the estimate is `O(h⁴)`; a true step shows at full size. Windows
/// narrower than four cells left of `node` let the stencil see `p2`.
pub fn acceleration_jump(profile: &PhaseProfile, node: usize) -> f64 {
    let a = &profile.s_ddot;
    if node < 4 || node >= a.len() {
        return 0.0;
    }
    let left = 4.0 * a[node - 1] - 6.0 * a[node - 2] + 4.0 * a[node - 3] - a[node - 4];
    (a[node] - left).abs()
}
