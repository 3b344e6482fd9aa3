//! Task-set files: a JSON list of named tasks, each carrying either a
//! conditional DAG or an explicit (volume, length) distribution.

use std::collections::BTreeSet;
use std::path::Path;

use dagreserve_core::{
    ConditionalDag, JointAtom, JointDistribution, MissConstraint, TaskSpec, Workload,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSetFile {
    pub tasks: Vec<TaskEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub processors: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dag: Option<ConditionalDag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<Vec<JointAtom>>,
    pub deadline: f64,
    pub period: f64,
    pub tardiness_bound: f64,
    #[serde(default)]
    pub constraints: Vec<MissConstraint>,
    pub omega: u32,
    /// Replenishment period override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

impl TaskSetFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.into(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::Parse {
            path: path.into(),
            source,
        })
    }

    /// Every problem in the file, one message per line, in task order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut names = BTreeSet::new();
        for t in &self.tasks {
            if !names.insert(t.name.as_str()) {
                out.push(format!("task {}: duplicate task name", t.name));
            }
            if let Err(errs) = t.to_spec() {
                out.extend(errs.into_iter().map(|e| format!("task {}: {e}", t.name)));
            }
        }
        if self.processors == Some(0) {
            out.push("processors must be at least 1".into());
        }
        out
    }

    /// Looks a task up by name, requiring the whole file to be valid.
    pub fn task(&self, name: &str) -> Result<(&TaskEntry, TaskSpec), CliError> {
        self.ensure_valid()?;
        let entry = self
            .tasks
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CliError::UnknownTask(name.into()))?;
        let spec = entry.to_spec().expect("validated above");
        Ok((entry, spec))
    }

    pub fn ensure_valid(&self) -> Result<(), CliError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(v))
        }
    }
}

impl TaskEntry {
    pub fn to_spec(&self) -> Result<TaskSpec, Vec<String>> {
        let workload = match (&self.dag, &self.distribution) {
            (Some(dag), None) => {
                let v = dag.validate();
                if !v.is_empty() {
                    return Err(v.iter().map(ToString::to_string).collect());
                }
                Workload::Dag(dag.clone())
            }
            (None, Some(atoms)) => Workload::Distribution(
                JointDistribution::new(atoms.iter().copied()).map_err(|e| vec![e.to_string()])?,
            ),
            (Some(_), Some(_)) => {
                return Err(vec![
                    "give either \"dag\" or \"distribution\", not both".into()
                ])
            }
            (None, None) => return Err(vec!["missing \"dag\" or \"distribution\"".into()]),
        };
        let spec = TaskSpec {
            workload,
            deadline: self.deadline,
            period: self.period,
            tardiness_bound: self.tardiness_bound,
            constraints: self.constraints.clone(),
            omega: self.omega,
            replenishment: self.p,
        };
        spec.validate().map_err(|e| vec![e.to_string()])?;
        Ok(spec)
    }
}
