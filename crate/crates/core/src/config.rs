//! Problem description files (TOML).
//!
//! ```toml
//! control_points = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [2.0, 1.0]]
//! orientation = "linear"
//! model = "diffcaster"
//! v_max = [1.0, 1.0]
//! a_max = [1.0, 1.0]
//! s_dot_start = 0.0
//! s_dot_end = 0.0
//! epsilon = 0.6
//! sweep = [0.2, 1.0, 10]
//! grid = 1000
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{BezierPath, Orientation, ParameterizedPath};
use crate::model::{model_by_name, ActuatorLimits, DiffCaster, KinematicModel};
use crate::pipeline::{PlanError, Problem};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

fn default_grid() -> usize {
    1000
}

fn default_arc_samples() -> usize {
    2000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_model() -> String {
    "unit".into()
}

fn default_bench_reps() -> usize {
    20
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrientationSpec {
    #[default]
    None,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub control_points: Vec<Vec<f64>>,
    #[serde(default)]
    pub orientation: OrientationSpec,
    #[serde(default = "default_model")]
    pub model: String,
    /// Lateral wheel offset for the `diffcaster` model.
    pub caster_offset: Option<f64>,
    pub v_max: Vec<f64>,
    pub a_max: Vec<f64>,
    #[serde(default)]
    pub s_dot_start: f64,
    #[serde(default)]
    pub s_dot_end: f64,
    pub epsilon: Option<f64>,
    /// `[ε_min, ε_max, steps]`.
    pub sweep: Option<(f64, f64, usize)>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_arc_samples")]
    pub arc_samples: usize,
    /// BIO half-width in grid cells.
    pub window: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bench_reps")]
    pub bench_reps: usize,
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

impl PlanConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: PlanConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.control_points.len() != 4 {
            return Err(invalid(
                "control_points",
                format!("need 4 points, got {}", self.control_points.len()),
            ));
        }
        let dim = self.control_points[0].len();
        if dim == 0 || self.control_points.iter().any(|p| p.len() != dim) {
            return Err(invalid("control_points", "points must share one non-zero dimension"));
        }
        if self.control_points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid("control_points", "coordinates must be finite"));
        }
        for (field, v) in [("v_max", &self.v_max), ("a_max", &self.a_max)] {
            if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(invalid(field, "entries must be positive and finite"));
            }
        }
        if self.v_max.len() != self.a_max.len() {
            return Err(invalid("a_max", "must have as many entries as v_max"));
        }
        for (field, v) in [("s_dot_start", self.s_dot_start), ("s_dot_end", self.s_dot_end)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(field, "must be a non-negative number"));
            }
        }
        if let Some(e) = self.epsilon {
            if !(e.is_finite() && e >= 0.0) {
                return Err(invalid("epsilon", "must be a non-negative number"));
            }
        }
        if let Some((lo, hi, steps)) = self.sweep {
            if steps < 2 || !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
                return Err(invalid("sweep", "expected [min, max, steps] with min <= max, steps >= 2"));
            }
        }
        if self.grid < 16 {
            return Err(invalid("grid", "must be at least 16"));
        }
        if self.arc_samples < 2 {
            return Err(invalid("arc_samples", "must be at least 2"));
        }
        if let Some(o) = self.caster_offset {
            if !o.is_finite() {
                return Err(invalid("caster_offset", "must be finite"));
            }
        }
        let state_dim = dim + usize::from(self.orientation == OrientationSpec::Linear);
        let model = self.build_model(state_dim)?;
        if model.state_dim() != state_dim {
            return Err(invalid(
                "model",
                format!(
                    "`{}` expects a {}-dimensional configuration, path gives {state_dim}",
                    self.model,
                    model.state_dim()
                ),
            ));
        }
        if model.actuator_dim() != self.v_max.len() {
            return Err(invalid(
                "v_max",
                format!("`{}` has {} actuators", self.model, model.actuator_dim()),
            ));
        }
        Ok(())
    }

    fn build_model(&self, state_dim: usize) -> Result<Box<dyn KinematicModel>, ConfigError> {
        if self.model == "diffcaster" {
            if let Some(offset) = self.caster_offset {
                return Ok(Box::new(DiffCaster { offset }));
            }
        }
        model_by_name(&self.model, state_dim).map_err(|e| invalid("model", e.to_string()))
    }

    pub fn limits(&self) -> ActuatorLimits {
        ActuatorLimits::new(self.v_max.clone(), self.a_max.clone())
            .expect("validated limit vectors")
    }

    /// Builds the path, model, table and limit curves.
    pub fn problem(&self) -> Result<Problem, PlanError> {
        let orientation = match self.orientation {
            OrientationSpec::None => Orientation::None,
            OrientationSpec::Linear => Orientation::Linear,
        };
        let pts = &self.control_points;
        let bez = BezierPath::new(
            [pts[0].clone(), pts[1].clone(), pts[2].clone(), pts[3].clone()],
            orientation,
        )?;
        let path = ParameterizedPath::new(bez, self.arc_samples)?;
        let state_dim = pts[0].len() + usize::from(orientation == Orientation::Linear);
        let model = self
            .build_model(state_dim)
            .map_err(|_| PlanError::Model(crate::model::ModelError::UnknownModel(self.model.clone())))?;
        Problem::new(model, &self.limits(), path, self.grid)
    }

    /// The ε grid of a sweep, or `None` when the file has none.
    pub fn sweep_grid(&self) -> Option<Vec<f64>> {
        let (lo, hi, steps) = self.sweep?;
        Some(
            (0..steps)
                .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
                .collect(),
        )
    }
}
