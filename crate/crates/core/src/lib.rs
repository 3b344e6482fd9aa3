//! Schedulability analysis for probabilistic conditional parallel DAG tasks
//! served by in-parallel reservation systems.
//!
//! The crate is organised bottom-up:
//!
//! - [`dag`]: conditional DAGs, validation, realization enumeration and
//!   volume/length computation.
//! - [`distribution`]: discrete (volume, length) distributions and the
//!   response-time random variables derived from them.
//! - [`reservation`]: the `m`-in-parallel reservation system, its
//!   supply-bound function and the closed-form service-time bound.
//! - [`analysis`]: deadline-miss probabilities, k-consecutive miss bounds
//!   and stability.
//! - [`optimizer`]: minimal-budget reservation synthesis.
//! - [`sim`]: a deterministic discrete-event simulator used to validate the
//!   analytic bounds.

pub mod analysis;
pub mod dag;
pub mod distribution;
mod error;
pub mod optimizer;
pub mod reservation;
pub mod sim;

pub use analysis::{
    analyze, analyze_distribution, check_constraints, check_constraints_with, BoundKind,
    ConstraintCheck, KBound, MissConstraint, MissReport, TaskSpec, Verdict, Workload,
};
pub use dag::{ConditionalDag, DagRealization, Node, NodeId, NodeKind, Violation};
pub use distribution::{DiscreteRv, JointAtom, JointDistribution};
pub use error::{Error, Result};
pub use optimizer::{optimize_task, select_config, ConfigMenu, ConfigOption, OptimizerOptions};
pub use reservation::{utilization_hint, ReservationConfig, UtilizationHint};
pub use sim::{SimConfig, SimTrace, SupplyPattern};

/// Absolute tolerance for probability-mass checks.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;
