//! One planning problem end to end: precompute once, then answer queries
//! for any ε.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::geometry::{GeometryError, ParameterizedPath};
use crate::limits::{LimitsError, VelocityLimits};
use crate::model::{build_constraint_table, ActuatorLimits, ConstraintTable, KinematicModel, ModelError};
use crate::planner::{construct_profile, Failure, PhaseProfile};
use crate::smoother::{smooth_all, SmoothingFailure, SmoothingWindow};
use crate::trajectory::{
    actuator_traces, metrics, time_reparameterize, traces_from_table, ActuatorTraces, Metrics,
    Trajectory, TrajectoryError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Limits(#[from] LimitsError),
    #[error(transparent)]
    Planning(#[from] Failure),
    #[error(transparent)]
    Smoothing(#[from] SmoothingFailure),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

impl PlanError {
    /// Machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            PlanError::Geometry(GeometryError::ZeroLength) => "zero-length",
            PlanError::Geometry(_) => "geometry",
            PlanError::Model(_) => "model",
            PlanError::Limits(_) => "epsilon-out-of-range",
            PlanError::Planning(f) => f.reason.code(),
            PlanError::Smoothing(_) => "smoothing-failure",
            PlanError::Trajectory(_) => "degenerate-profile",
        }
    }

    /// `true` for failures of the planner itself rather than of the input.
    pub fn is_planning_failure(&self) -> bool {
        matches!(
            self,
            PlanError::Planning(_) | PlanError::Smoothing(_) | PlanError::Trajectory(_)
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub precompute: Duration,
    pub cni: Duration,
    pub bio: Duration,
}

impl Timings {
    /// Per-query time: CNI plus BIO.
    pub fn query(&self) -> Duration {
        self.cni + self.bio
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub epsilon: f64,
    pub raw: PhaseProfile,
    pub smoothed: PhaseProfile,
    pub windows: Vec<SmoothingWindow>,
    pub trajectory: Trajectory,
    pub traces: ActuatorTraces,
    pub metrics: Metrics,
    pub timings: Timings,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct QueryOptions {
    /// BIO half-width in nodes; `None` uses the default.
    pub half_width: Option<usize>,
}

pub struct Problem {
    geometry: Option<(Box<dyn KinematicModel>, ParameterizedPath)>,
    limits: VelocityLimits,
    precompute: Duration,
}

impl Problem {
    /// Builds the constraint table and all ε-independent curves.
    pub fn new(
        model: Box<dyn KinematicModel>,
        limits: &ActuatorLimits,
        path: ParameterizedPath,
        intervals: usize,
    ) -> Result<Self, PlanError> {
        let t0 = Instant::now();
        let table = build_constraint_table(model.as_ref(), limits, &path, intervals)?;
        let limits = VelocityLimits::new(table);
        Ok(Self {
            geometry: Some((model, path)),
            limits,
            precompute: t0.elapsed(),
        })
    }

    /// A problem given directly by its constraint table.
    pub fn from_table(table: ConstraintTable) -> Self {
        let t0 = Instant::now();
        let limits = VelocityLimits::new(table);
        Self {
            geometry: None,
            limits,
            precompute: t0.elapsed(),
        }
    }

    pub fn limits(&self) -> &VelocityLimits {
        &self.limits
    }

    pub fn table(&self) -> &ConstraintTable {
        self.limits.table()
    }

    pub fn precompute_time(&self) -> Duration {
        self.precompute
    }

    /// Runs CNI and BIO for one ε; no trajectory post-processing.
    pub fn profiles(
        &self,
        epsilon: f64,
        s_dot_start: f64,
        s_dot_end: f64,
        opts: QueryOptions,
    ) -> Result<(PhaseProfile, PhaseProfile, Vec<SmoothingWindow>, Timings), PlanError> {
        let t0 = Instant::now();
        let curves = self.limits.reconstruct(epsilon)?;
        let raw = construct_profile(&curves, s_dot_start, s_dot_end)?;
        let t1 = Instant::now();
        let smoothed = smooth_all(&curves, &raw, opts.half_width)?;
        let t2 = Instant::now();
        let timings = Timings {
            precompute: self.precompute,
            cni: t1 - t0,
            bio: t2 - t1,
        };
        Ok((raw, smoothed.profile, smoothed.windows, timings))
    }

    /// Plans a full trajectory for one ε.
    pub fn plan(
        &self,
        epsilon: f64,
        s_dot_start: f64,
        s_dot_end: f64,
        opts: QueryOptions,
    ) -> Result<Solution, PlanError> {
        let (raw, smoothed, windows, timings) =
            self.profiles(epsilon, s_dot_start, s_dot_end, opts)?;
        let trajectory = time_reparameterize(&smoothed)?;
        let traces = match &self.geometry {
            Some((model, path)) => actuator_traces(&trajectory, model.as_ref(), path)?,
            None => traces_from_table(&trajectory, self.table()),
        };
        let metrics = metrics(&trajectory, &smoothed, self.table().limits().max_accel());
        Ok(Solution {
            epsilon,
            raw,
            smoothed,
            windows,
            trajectory,
            traces,
            metrics,
            timings,
        })
    }
}
