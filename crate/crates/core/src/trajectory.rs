//! Time-domain trajectory, actuator traces, metrics and constraint checks.

use nalgebra::DVector;
use thiserror::Error;

use crate::geometry::{GeometricPath, GeometryError};
use crate::model::{ActuatorLimits, ConstraintTable, KinematicModel};
use crate::planner::{PhaseProfile, SegmentTag};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("profile velocity is zero inside the path at s = {s}")]
    Degenerate { s: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub s_dot: Vec<f64>,
    pub s_ddot: Vec<f64>,
}

impl Trajectory {
    pub fn traveling_time(&self) -> f64 {
        *self.t.last().unwrap_or(&0.0)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Integrates `dt = ds / ṡ` over the profile.
///
/// Within a cell `u = ṡ²` is linear in `s`, so the cell time is exactly
/// `2Δs / (ṡ_k + ṡ_{k+1})`; this stays finite when one end is at rest.
pub fn time_reparameterize(profile: &PhaseProfile) -> Result<Trajectory, TrajectoryError> {
    let n = profile.nodes();
    let mut t = Vec::with_capacity(n);
    t.push(0.0);
    for k in 0..n - 1 {
        let (a, b) = (profile.s_dot[k], profile.s_dot[k + 1]);
        let interior = |j: usize| j > 0 && j < n - 1;
        if (a <= 0.0 && interior(k)) || (b <= 0.0 && interior(k + 1)) || a + b <= 0.0 {
            let j = if a <= 0.0 { k } else { k + 1 };
            return Err(TrajectoryError::Degenerate { s: profile.s[j] });
        }
        let dt = 2.0 * (profile.s[k + 1] - profile.s[k]) / (a + b);
        t.push(t[k] + dt);
    }
    Ok(Trajectory {
        t,
        s: profile.s.clone(),
        s_dot: profile.s_dot.clone(),
        s_ddot: profile.s_ddot.clone(),
    })
}

/// Actuator velocities and accelerations, one `m`-vector per sample.
#[derive(Debug, Clone)]
pub struct ActuatorTraces {
    pub v: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
}

/// `v = J q_s ṡ`, `a = J q_s s̈ + (J_s q_s + J q_ss) ṡ²`, evaluated from
/// the model and path directly.
pub fn actuator_traces(
    traj: &Trajectory,
    model: &dyn KinematicModel,
    path: &dyn GeometricPath,
) -> Result<ActuatorTraces, TrajectoryError> {
    let mut v = Vec::with_capacity(traj.len());
    let mut a = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let d = path.derivatives(traj.s[k].min(path.length()))?;
        let j = model.jacobian(&d.q);
        let js = model.jacobian_s(&d.q, &d.q_s);
        let jq: DVector<f64> = &j * &d.q_s;
        let bq: DVector<f64> = &js * &d.q_s + &j * &d.q_ss;
        let (sd, sdd) = (traj.s_dot[k], traj.s_ddot[k]);
        v.push(jq.iter().map(|x| x * sd).collect());
        a.push(
            jq.iter()
                .zip(bq.iter())
                .map(|(x, y)| x * sdd + y * sd * sd)
                .collect(),
        );
    }
    Ok(ActuatorTraces { v, a })
}

/// Traces for a bare constraint table, reading `J q_s` and
/// `J_s q_s + J q_ss` from the first `m` rows at each node.
pub fn traces_from_table(traj: &Trajectory, table: &ConstraintTable) -> ActuatorTraces {
    let m = table.rows() / 2;
    let mut v = Vec::with_capacity(traj.len());
    let mut a = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let (jq, bq) = (&table.a_row(k)[..m], &table.b_row(k)[..m]);
        let (sd, sdd) = (traj.s_dot[k], traj.s_ddot[k]);
        v.push(jq.iter().map(|x| x * sd).collect());
        a.push(
            jq.iter()
                .zip(bq)
                .map(|(x, y)| x * sdd + y * sd * sd)
                .collect(),
        );
    }
    ActuatorTraces { v, a }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub sample: usize,
    pub actuator: usize,
    pub quantity: &'static str,
    pub value: f64,
    pub limit: f64,
}

/// Largest excess of `|v|` over `v_max` and `|a|` over `a_max`, with the
/// first sample that exceeds `tol`.
pub fn certify(
    traces: &ActuatorTraces,
    limits: &ActuatorLimits,
    tol: f64,
) -> Result<f64, Violation> {
    let mut worst = f64::NEG_INFINITY;
    for (k, (v, a)) in traces.v.iter().zip(&traces.a).enumerate() {
        for i in 0..v.len() {
            for (quantity, value, limit) in [
                ("velocity", v[i], limits.v_max()[i]),
                ("acceleration", a[i], limits.a_max()[i]),
            ] {
                let excess = value.abs() - limit;
                worst = worst.max(excess);
                if excess > tol {
                    return Err(Violation {
                        sample: k,
                        actuator: i,
                        quantity,
                        value,
                        limit,
                    });
                }
            }
        }
    }
    Ok(worst)
}

/// Description of how the cruise proportion is measured, for output
/// metadata.
pub const CRUISE_DEFINITION: &str =
    "path-length fraction of switch-arc cells with |s_ddot| <= 1e-3 * max(a_max)";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub traveling_time: f64,
    pub cruise_proportion: f64,
}

pub fn metrics(traj: &Trajectory, profile: &PhaseProfile, max_accel: f64) -> Metrics {
    let tol = 1e-3 * max_accel;
    let length = profile.s.last().copied().unwrap_or(0.0);
    let cruise: f64 = profile
        .tags
        .iter()
        .enumerate()
        .filter(|(k, tag)| **tag == SegmentTag::SwitchArc && profile.s_ddot[*k].abs() <= tol)
        .map(|(k, _)| profile.s[k + 1] - profile.s[k])
        .fold(0.0, |acc, ds| acc + ds);
    Metrics {
        traveling_time: traj.traveling_time(),
        cruise_proportion: if length > 0.0 { cruise / length } else { 0.0 },
    }
}
