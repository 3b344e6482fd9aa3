use thiserror::Error;

use crate::dag::{NodeId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid conditional DAG ({} violation(s)): {}", .0.len(), first_violation(.0))]
    InvalidDag(Vec<Violation>),

    #[error("not a DAG: cycle through node {0}")]
    NotADag(NodeId),

    #[error("edge references unknown subjob {0}")]
    UnknownNode(NodeId),

    #[error("empty distribution")]
    EmptyDistribution,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid reservation configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible: no reservation configuration satisfies the constraints")]
    Infeasible,
}

fn first_violation(vs: &[Violation]) -> String {
    vs.first().map(ToString::to_string).unwrap_or_default()
}
