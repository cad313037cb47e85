//! Plane-strain material point method with standard (sMPM) and generalised
//! interpolation (GIMPM) bases, ghost penalty stabilisation of the mass and
//! stiffness matrices, explicit dynamics and implicit quasi-static solvers.

pub mod assembly;
pub mod basis;
pub mod cli;
pub mod config;
pub mod constitutive;
pub mod diagnostics;
pub mod error;
pub mod ghost;
pub mod grid;
pub mod linalg;
pub mod mpoints;
pub mod output;
pub mod scenarios;
pub mod solver_explicit;
pub mod solver_implicit;

pub use basis::{BasisContribution, BasisKind};
pub use config::{ScenarioConfig, ScenarioName};
pub use error::{MpmError, Result};
pub use grid::{Axis, BackgroundGrid, DirichletLine};
pub use mpoints::{Material, MaterialPoint, Rect};
pub use scenarios::{run_scenario, ScenarioResult, Summary};
pub use solver_explicit::{ExplicitConfig, ExplicitSolver, MassMode, StressOrder, VelocityUpdate};
pub use solver_implicit::{ImplicitConfig, ImplicitSolver, LoadSchedule};
