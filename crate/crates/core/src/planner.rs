//! Phase-plane profile construction under MVC*.
//!
//! Integration runs in `u = ṡ²`, where `du/ds = 2 s̈`. Each grid cell uses
//! an explicit Euler step with the bounds evaluated at the cell's left
//! node, so the cell acceleration `(u_{k+1} - u_k) / 2Δs` is an admissible
//! control at that node by construction.
//!
//! The profile is assembled in two sweeps. A backward sweep builds the
//! envelope `V_k`, the largest state at node `k` from which the terminal
//! state is still reachable: α-runs started at `(s_e, ṡ_e²)` and at every
//! point where the ceiling MVC* stops being sustainable, joined by walks
//! along the ceiling. A forward sweep then accelerates with β from
//! `(0, ṡ_0²)` and is clipped to the envelope; every clip is either a ride
//! along a switch arc or a hand-over to a stored α-run.

use std::fmt;

use crate::limits::{ArcKind, LimitCurves};
use crate::model::ConstraintTable;

/// Provenance of one grid cell of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentTag {
    AccelBeta,
    DecelAlpha,
    SwitchArc,
    BioBlend,
}

impl SegmentTag {
    pub fn label(self) -> &'static str {
        match self {
            SegmentTag::AccelBeta => "accel-beta",
            SegmentTag::DecelAlpha => "decel-alpha",
            SegmentTag::SwitchArc => "switch-arc",
            SegmentTag::BioBlend => "bio-blend",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchKind {
    Tangent,
    Discontinuity,
    ZeroInertia,
    ArcEndpointLeft,
    ArcEndpointRight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchPoint {
    pub s: f64,
    pub s_dot: f64,
    pub kind: SwitchKind,
}

/// A stretch of MVC* along which the profile may ride.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchArc {
    pub first: usize,
    pub last: usize,
    pub s_start: f64,
    pub s_end: f64,
    /// `true` when the arc lies on MVC rather than on the ε line.
    pub on_mvc: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SwitchSearch {
    pub points: Vec<SwitchPoint>,
    pub arcs: Vec<SwitchArc>,
}

/// A concave corner of the profile where a faster piece hands over to a
/// slower one; these are the sites the smoother blends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intersection {
    /// First cell after the corner.
    pub node: usize,
    pub s: f64,
    pub s_dot: f64,
    pub from: SegmentTag,
    pub to: SegmentTag,
}

/// Maximal run of cells sharing a tag, `[first, last]` in cell indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub tag: SegmentTag,
    pub first: usize,
    pub last: usize,
}

#[derive(Debug, Clone)]
pub struct PhaseProfile {
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    pub s_dot: Vec<f64>,
    /// `s_ddot[k]` is the acceleration of cell `k`; the last node repeats
    /// the final cell's value clamped into that node's bounds.
    pub s_ddot: Vec<f64>,
    pub tags: Vec<SegmentTag>,
    pub intersections: Vec<Intersection>,
    pub switches: SwitchSearch,
    pub s_dot_start: f64,
    pub s_dot_end: f64,
    pub epsilon: f64,
    pub step: f64,
}

impl PhaseProfile {
    pub fn nodes(&self) -> usize {
        self.s.len()
    }

    pub fn segments(&self) -> Vec<Segment> {
        let mut out: Vec<Segment> = Vec::new();
        for (k, tag) in self.tags.iter().enumerate() {
            match out.last_mut() {
                Some(seg) if seg.tag == *tag => seg.last = k,
                _ => out.push(Segment {
                    tag: *tag,
                    first: k,
                    last: k,
                }),
            }
        }
        out
    }

    /// Checks the sample invariants against `curves`; returns the first
    /// violation found.
    pub fn check(&self, curves: &LimitCurves, tol_v: f64, tol_a: f64) -> Result<(), String> {
        let table = curves.table();
        let n = self.nodes();
        if n != table.nodes() {
            return Err(format!("{n} samples for a {}-node grid", table.nodes()));
        }
        for k in 0..n {
            if k > 0 && self.s[k] <= self.s[k - 1] {
                return Err(format!("s not increasing at node {k}"));
            }
            let sd = self.s_dot[k];
            if !(sd >= 0.0) || sd > curves.mvc_star[k] + tol_v {
                return Err(format!("s_dot {sd} outside [0, MVC*] at node {k}"));
            }
            let b = table.node_bounds(k, self.u[k]);
            let acc = self.s_ddot[k];
            if acc < b.alpha - tol_a || acc > b.beta + tol_a {
                return Err(format!(
                    "s_ddot {acc} outside [{}, {}] at node {k}",
                    b.alpha, b.beta
                ));
            }
        }
        if (self.s_dot[0] - self.s_dot_start).abs() > tol_v
            || (self.s_dot[n - 1] - self.s_dot_end).abs() > tol_v
        {
            return Err("boundary velocities not met".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    BoundaryAboveMvc,
    ForwardStall,
    NoConnection,
}

impl FailureReason {
    pub fn code(self) -> &'static str {
        match self {
            FailureReason::BoundaryAboveMvc => "boundary-above-mvc*",
            FailureReason::ForwardStall => "forward-stall",
            FailureReason::NoConnection => "no-connection",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub reason: FailureReason,
    pub s: f64,
    pub detail: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at s = {}: {}", self.reason.code(), self.s, self.detail)
    }
}

impl std::error::Error for Failure {}

/// Velocity tolerance `1e-6·Max(MVC)`.
pub fn velocity_tol(curves: &LimitCurves) -> f64 {
    1e-6 * curves.max_mvc()
}

/// Acceleration tolerance `1e-6·max(a_max)`.
pub fn accel_tol(table: &ConstraintTable) -> f64 {
    1e-6 * table.limits().max_accel()
}

fn squared(v: f64) -> f64 {
    if v.is_finite() {
        v * v
    } else {
        f64::INFINITY
    }
}

/// Why an integration run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Reached the ceiling MVC*; the last sample sits on it.
    Ceiling,
    /// Ran into the supplied stored profile; the last sample sits on it.
    Met,
    /// Velocity dropped to zero (forward) or the step had no preimage.
    Stalled,
    /// Reached `s = s_e` (forward) or `s = 0` (backward).
    Boundary,
}

/// Samples of one integration run in `u`, listed in integration order.
#[derive(Debug, Clone)]
pub struct Run {
    pub nodes: Vec<usize>,
    pub u: Vec<f64>,
    pub end: Termination,
}

impl Run {
    pub fn s_dot(&self) -> impl Iterator<Item = f64> + '_ {
        self.u.iter().map(|u| u.sqrt())
    }
}

/// Integrates `du/ds = 2β` forward from node `start` with `ṡ = s_dot`.
///
/// Stops on MVC*, on `against` (a per-node stored profile in `u`, if any),
/// when `u` falls to zero, or at `s_e`.
pub fn forward_integrate(
    curves: &LimitCurves,
    start: usize,
    s_dot: f64,
    against: Option<&[f64]>,
) -> Run {
    let table = curves.table();
    let h2 = 2.0 * table.step();
    let n = table.intervals();
    let mut nodes = vec![start];
    let mut us = vec![s_dot * s_dot];
    let mut u = s_dot * s_dot;
    for k in start..n {
        let mut next = u + h2 * table.node_bounds(k, u).beta;
        let cap = squared(curves.mvc_star[k + 1]);
        let mut end = None;
        if let Some(other) = against {
            if next >= other[k + 1] {
                next = other[k + 1];
                end = Some(Termination::Met);
            }
        }
        if next > cap {
            next = cap;
            end = Some(Termination::Ceiling);
        }
        if next <= 0.0 {
            next = 0.0;
            end = Some(Termination::Stalled);
        }
        nodes.push(k + 1);
        us.push(next);
        u = next;
        if let Some(end) = end {
            return Run { nodes, u: us, end };
        }
    }
    Run {
        nodes,
        u: us,
        end: Termination::Boundary,
    }
}

/// Integrates `du/ds = 2α` backward from node `start` with `ṡ = s_dot`.
///
/// Each step inverts the forward Euler map exactly, so a forward α-run
/// started from any returned sample reproduces the later samples.
pub fn backward_integrate(
    curves: &LimitCurves,
    start: usize,
    s_dot: f64,
    against: Option<&[f64]>,
) -> Run {
    let table = curves.table();
    let mut nodes = vec![start];
    let mut us = vec![s_dot * s_dot];
    let mut u = s_dot * s_dot;
    for k in (0..start).rev() {
        let Some(mut prev) = table.alpha_preimage(k, u) else {
            return Run {
                nodes,
                u: us,
                end: Termination::Stalled,
            };
        };
        let cap = squared(curves.mvc_star[k]);
        let mut end = None;
        if let Some(other) = against {
            if prev >= other[k] {
                prev = other[k];
                end = Some(Termination::Met);
            }
        }
        if prev >= cap {
            prev = cap;
            end = Some(Termination::Ceiling);
        }
        nodes.push(k);
        us.push(prev);
        u = prev;
        if let Some(end) = end {
            return Run { nodes, u: us, end };
        }
    }
    Run {
        nodes,
        u: us,
        end: Termination::Boundary,
    }
}

/// Median of `|c_{k+1} - c_k|` over finite neighbours.
fn median_step(c: &[f64]) -> f64 {
    let mut d: Vec<f64> = c
        .windows(2)
        .filter(|w| w[0].is_finite() && w[1].is_finite())
        .map(|w| (w[1] - w[0]).abs())
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    *d.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// Jump threshold `max(10·median|ΔMVC*|, tol_v)`.
pub fn jump_tol(curves: &LimitCurves) -> f64 {
    (10.0 * median_step(&curves.mvc_star)).max(velocity_tol(curves))
}

/// Collects switch arcs and switch points along MVC*.
///
/// ε-line arcs come straight from the partition. The MVC stretches are
/// scanned nodewise for tangent points, jumps and zero-inertia crossings,
/// and a node of MVC counts as part of an arc when the ceiling slope is an
/// admissible acceleration there.
pub fn switch_search(curves: &LimitCurves) -> SwitchSearch {
    let table = curves.table();
    let h = table.step();
    let c = &curves.mvc_star;
    let eps = curves.epsilon;
    let mut out = SwitchSearch::default();
    let tol_jump = jump_tol(curves);
    for p in &curves.partition {
        match p.kind {
            ArcKind::Cruise => {
                out.arcs.push(SwitchArc {
                    first: p.first,
                    last: p.last,
                    s_start: p.s_start,
                    s_end: p.s_end,
                    on_mvc: false,
                });
                out.points.push(SwitchPoint {
                    s: p.s_start,
                    s_dot: eps,
                    kind: SwitchKind::ArcEndpointLeft,
                });
                out.points.push(SwitchPoint {
                    s: p.s_end,
                    s_dot: eps,
                    kind: SwitchKind::ArcEndpointRight,
                });
            }
            ArcKind::Overspeed => {}
            ArcKind::Mvc => {
                let mut arc: Option<(usize, usize)> = None;
                let mut prev_sign = 0.0;
                for k in p.first..=p.last {
                    let ck = c[k];
                    if !ck.is_finite() {
                        continue;
                    }
                    let slope = if k < table.intervals() {
                        (c[k + 1] - ck) / h
                    } else {
                        (ck - c[k - 1]) / h
                    };
                    // a jump on the boundary with the ε line belongs here too
                    let lo = if k == p.first { k.saturating_sub(1) } else { k };
                    for j in lo..k.min(table.intervals() - 1) + 1 {
                        if (c[j + 1] - c[j]).abs() > tol_jump {
                            out.points.push(SwitchPoint {
                                s: table.node_s(if c[j + 1] < c[j] { j + 1 } else { j }),
                                s_dot: c[j].min(c[j + 1]),
                                kind: SwitchKind::Discontinuity,
                            });
                        }
                    }
                    if k < table.intervals() {
                        let (ak, an) = (table.a_row(k), table.a_row(k + 1));
                        if ak.iter().zip(an).any(|(x, y)| x * y < 0.0) {
                            out.points.push(SwitchPoint {
                                s: table.node_s(k),
                                s_dot: ck,
                                kind: SwitchKind::ZeroInertia,
                            });
                        }
                    }
                    let below = ck - 1e-3 * eps;
                    if below > 0.0 && slope.is_finite() {
                        let beta = table.node_bounds(k, below * below).beta;
                        let g = slope - beta / below;
                        let sign = g.signum();
                        if prev_sign != 0.0 && sign != prev_sign && sign != 0.0 {
                            out.points.push(SwitchPoint {
                                s: table.node_s(k),
                                s_dot: ck,
                                kind: SwitchKind::Tangent,
                            });
                        }
                        if sign != 0.0 {
                            prev_sign = sign;
                        }
                    }
                    let b = table.node_bounds(k, ck * ck);
                    let need = ck * slope;
                    let rideable = slope.is_finite() && b.alpha <= need && need <= b.beta;
                    arc = match (rideable, arc) {
                        (true, Some((a, _))) => Some((a, k)),
                        (true, None) => Some((k, k)),
                        (false, Some((a, z))) => {
                            out.arcs.push(mvc_arc(table, a, z));
                            None
                        }
                        (false, None) => None,
                    };
                }
                if let Some((a, z)) = arc {
                    out.arcs.push(mvc_arc(table, a, z));
                }
            }
        }
    }
    out.points.sort_by(|x, y| x.s.total_cmp(&y.s));
    out
}

fn mvc_arc(table: &ConstraintTable, first: usize, last: usize) -> SwitchArc {
    SwitchArc {
        first,
        last,
        s_start: table.node_s(first),
        s_end: table.node_s(last),
        on_mvc: true,
    }
}

/// Backward sweep: the reachability envelope in `u` and, per node, whether
/// the envelope sits on the ceiling there.
fn envelope(curves: &LimitCurves, u_end: f64) -> Result<(Vec<f64>, Vec<bool>), Failure> {
    let table = curves.table();
    let n = table.intervals();
    let cap: Vec<f64> = curves.mvc_star.iter().map(|c| squared(*c)).collect();
    let eps2 = curves.epsilon * curves.epsilon;
    let mut v = vec![0.0; n + 1];
    let mut on_cap = vec![false; n + 1];
    v[n] = u_end.min(cap[n]);
    on_cap[n] = u_end >= cap[n];
    let mut k = n;
    while k > 0 {
        if on_cap[k] {
            // walk along the ceiling while it stays sustainable
            let j = k - 1;
            if v[k] == eps2 && curves.kind_at(j) == ArcKind::Cruise {
                // α(ε) ≤ 0 on cruise nodes, so the ε line is its own preimage
                v[j] = eps2;
                on_cap[j] = true;
                k = j;
                continue;
            }
            let pre = table.alpha_preimage(j, v[k]).ok_or_else(|| no_preimage(table, j))?;
            if pre >= cap[j] {
                v[j] = cap[j];
                on_cap[j] = true;
                k = j;
                continue;
            }
        }
        // α-run from node k until it touches the ceiling again
        let run = backward_integrate(curves, k, v[k].sqrt(), None);
        if run.end == Termination::Stalled {
            return Err(no_preimage(table, *run.nodes.last().unwrap_or(&k)));
        }
        for (node, u) in run.nodes.iter().zip(&run.u).skip(1) {
            v[*node] = *u;
        }
        let last = *run.nodes.last().unwrap_or(&k);
        if run.end == Termination::Ceiling {
            on_cap[last] = true;
        }
        k = last;
    }
    Ok((v, on_cap))
}

fn no_preimage(table: &ConstraintTable, k: usize) -> Failure {
    Failure {
        reason: FailureReason::NoConnection,
        s: table.node_s(k),
        detail: "no state decelerates onto the terminal envelope".into(),
    }
}

/// Assembles the fastest profile from `(0, ṡ_0)` to `(s_e, ṡ_e)` under
/// MVC*, or reports why none exists.
pub fn construct_profile(
    curves: &LimitCurves,
    s_dot_start: f64,
    s_dot_end: f64,
) -> Result<PhaseProfile, Failure> {
    let table = curves.table();
    let n = table.intervals();
    let h = table.step();
    let tol_v = velocity_tol(curves);
    let tol_a = accel_tol(table);
    let eps = curves.epsilon;
    let eps2 = eps * eps;

    for (which, sd, k) in [("start", s_dot_start, 0), ("end", s_dot_end, n)] {
        if !(sd >= 0.0 && sd.is_finite()) {
            return Err(Failure {
                reason: FailureReason::BoundaryAboveMvc,
                s: table.node_s(k),
                detail: format!("{which} velocity {sd} is not a non-negative number"),
            });
        }
        if sd > curves.mvc_star[k] + tol_v {
            return Err(Failure {
                reason: FailureReason::BoundaryAboveMvc,
                s: table.node_s(k),
                detail: format!(
                    "{which} velocity {sd} exceeds MVC* = {}",
                    curves.mvc_star[k]
                ),
            });
        }
    }
    let u_start = squared(s_dot_start.min(curves.mvc_star[0]));
    let u_end = squared(s_dot_end.min(curves.mvc_star[n]));

    let switches = switch_search(curves);
    let (v, on_cap) = envelope(curves, u_end)?;
    if u_start > v[0] + 2.0 * tol_v * s_dot_start.max(tol_v) {
        return Err(Failure {
            reason: FailureReason::NoConnection,
            s: 0.0,
            detail: format!(
                "start velocity {s_dot_start} cannot decelerate to {s_dot_end} in time (limit {})",
                v[0].sqrt()
            ),
        });
    }

    let mut u = vec![0.0; n + 1];
    let mut acc = vec![0.0; n + 1];
    let mut tags = vec![SegmentTag::AccelBeta; n];
    u[0] = u_start.min(v[0]);
    let stall2 = tol_v * tol_v;
    let mut k = 0;
    while k < n {
        if u[k] == eps2 && v[k + 1] == eps2 && curves.kind_at(k) == ArcKind::Cruise {
            // riding an M̲ arc: β(ε) ≥ 0 keeps us on the ε line
            u[k + 1] = eps2;
            tags[k] = SegmentTag::SwitchArc;
            k += 1;
            continue;
        }
        let run = forward_integrate(curves, k, u[k].sqrt(), Some(&v));
        for (node, un) in run.nodes.iter().zip(&run.u).skip(1) {
            u[*node] = *un;
            tags[node - 1] = SegmentTag::AccelBeta;
        }
        let last = *run.nodes.last().unwrap_or(&k);
        match run.end {
            Termination::Met | Termination::Ceiling => {
                // a clip that only trims rounding noise keeps the β tag, and
                // so does a run that is clipped in its very first cell, so
                // the hand-over still shows up as a corner
                let beta = table.node_bounds(last - 1, u[last - 1]).beta;
                let used = (u[last] - u[last - 1]) / (2.0 * h);
                if used < beta - tol_a && run.nodes.len() > 2 {
                    tags[last - 1] = if on_cap[last] {
                        SegmentTag::SwitchArc
                    } else {
                        SegmentTag::DecelAlpha
                    };
                }
                // follow the envelope while β cannot beat it
                let mut j = last;
                while j < n {
                    if u[j] == eps2 && v[j + 1] == eps2 && curves.kind_at(j) == ArcKind::Cruise {
                        u[j + 1] = eps2;
                        tags[j] = SegmentTag::SwitchArc;
                        j += 1;
                        continue;
                    }
                    let up = u[j] + 2.0 * h * table.node_bounds(j, u[j]).beta;
                    if up < v[j + 1] {
                        break;
                    }
                    u[j + 1] = v[j + 1];
                    tags[j] = if on_cap[j + 1] {
                        SegmentTag::SwitchArc
                    } else {
                        SegmentTag::DecelAlpha
                    };
                    j += 1;
                }
                k = j;
            }
            Termination::Stalled => {
                return Err(Failure {
                    reason: FailureReason::ForwardStall,
                    s: table.node_s(last),
                    detail: "forward profile stalled at zero velocity".into(),
                });
            }
            Termination::Boundary => k = last,
        }
        if k < n && u[k] <= stall2 && k > 0 {
            return Err(Failure {
                reason: FailureReason::ForwardStall,
                s: table.node_s(k),
                detail: "profile velocity reaches zero inside the path".into(),
            });
        }
    }
    if let Some(k) = (1..n).find(|&k| u[k] <= stall2) {
        return Err(Failure {
            reason: FailureReason::ForwardStall,
            s: table.node_s(k),
            detail: "profile velocity reaches zero inside the path".into(),
        });
    }
    if u[n] < u_end - 2.0 * tol_v * s_dot_end.max(tol_v) {
        return Err(Failure {
            reason: FailureReason::NoConnection,
            s: table.length(),
            detail: format!(
                "forward profile ends at {} below the terminal velocity {s_dot_end}",
                u[n].sqrt()
            ),
        });
    }
    u[n] = u_end;

    for k in 0..n {
        acc[k] = (u[k + 1] - u[k]) / (2.0 * h);
    }
    let last = table.node_bounds(n, u[n]);
    acc[n] = acc[n - 1].clamp(last.alpha, last.beta.max(last.alpha));

    let intersections = find_intersections(table, &u, &v, &tags);
    let s = (0..=n).map(|k| table.node_s(k)).collect();
    let s_dot = u.iter().map(|x| x.sqrt()).collect();
    Ok(PhaseProfile {
        s,
        u,
        s_dot,
        s_ddot: acc,
        tags,
        intersections,
        switches,
        s_dot_start,
        s_dot_end,
        epsilon: eps,
        step: h,
    })
}

/// Concave tag changes of the assembled profile.
fn find_intersections(
    table: &ConstraintTable,
    u: &[f64],
    v: &[f64],
    tags: &[SegmentTag],
) -> Vec<Intersection> {
    use SegmentTag::*;
    let h = table.step();
    let mut out = Vec::new();
    for k in 1..tags.len() {
        let (from, to) = (tags[k - 1], tags[k]);
        let concave = matches!(
            (from, to),
            (AccelBeta, SwitchArc) | (AccelBeta, DecelAlpha) | (SwitchArc, DecelAlpha)
        );
        if !concave {
            continue;
        }
        // the β line from node k meets the envelope inside cell k
        let mut s = table.node_s(k);
        if from == AccelBeta && u[k] < v[k] {
            let beta = table.node_bounds(k, u[k]).beta;
            let denom = 2.0 * beta - (v[k + 1] - v[k]) / h;
            if denom > 0.0 {
                s += ((v[k] - u[k]) / denom).clamp(0.0, h);
            }
        }
        out.push(Intersection {
            node: k,
            s,
            s_dot: u[k].sqrt(),
            from,
            to,
        });
    }
    out
}
