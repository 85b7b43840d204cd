//! Time-optimal path parameterization in the `(s, ṡ)` phase plane.

pub mod geometry;
pub mod model;
pub mod limits;
pub mod planner;
pub mod smoother;
pub mod trajectory;
pub mod pipeline;
pub mod config;
pub mod cli;
