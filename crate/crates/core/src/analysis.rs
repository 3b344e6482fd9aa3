//! Deadline-miss analysis for one task on one reservation configuration.
//!
//! Two response-time random variables drive every bound: `R0`, the bound
//! for a job whose predecessor met its deadline (no backlog), and `R1`, the
//! bound for a job whose predecessor missed (backlog at most `rho * m`).
//! The probability of `k` consecutive misses after a hit is bounded by
//!
//! ```text
//! P(R1 > D)^(k-1) * P(R0 > D)   <=   P(R1 > D)^k
//! ```
//!
//! and the system is stable whenever `P(R1 > D) < 1`.

use serde::{Deserialize, Serialize};

use crate::dag::{ConditionalDag, DagRealization};
use crate::distribution::JointDistribution;
use crate::error::{Error, Result};
use crate::reservation::ReservationConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissConstraint {
    pub k: u32,
    pub theta: f64,
}

/// Where a task's (volume, length) distribution comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum Workload {
    Dag(ConditionalDag),
    Distribution(JointDistribution),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub workload: Workload,
    pub deadline: f64,
    pub period: f64,
    pub tardiness_bound: f64,
    pub constraints: Vec<MissConstraint>,
    /// Largest parallelism degree the optimizer may try.
    pub omega: u32,
    /// Replenishment period override; the task period is used otherwise.
    pub replenishment: Option<f64>,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.deadline) || !positive(self.period) {
            return Err(Error::InvalidTask(format!(
                "deadline {} and period {} must be positive",
                self.deadline, self.period
            )));
        }
        if self.deadline > self.period {
            return Err(Error::InvalidTask(format!(
                "deadline {} exceeds period {} (constrained deadlines only)",
                self.deadline, self.period
            )));
        }
        if !positive(self.tardiness_bound) {
            return Err(Error::InvalidTask(format!(
                "tardiness bound {} must be positive",
                self.tardiness_bound
            )));
        }
        if self.omega == 0 {
            return Err(Error::InvalidTask("omega must be at least 1".into()));
        }
        let mut ks: Vec<u32> = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            if c.k == 0 {
                return Err(Error::InvalidTask("constraint k must be at least 1".into()));
            }
            if !(0.0..=1.0).contains(&c.theta) {
                return Err(Error::InvalidTask(format!(
                    "theta {} for k = {} outside [0, 1]",
                    c.theta, c.k
                )));
            }
            if ks.contains(&c.k) {
                return Err(Error::InvalidTask(format!(
                    "constraint k = {} listed twice",
                    c.k
                )));
            }
            ks.push(c.k);
        }
        if let Some(p) = self.replenishment {
            if !positive(p) || self.deadline > p {
                return Err(Error::InvalidTask(format!(
                    "replenishment period {p} must be positive and at least the deadline {}",
                    self.deadline
                )));
            }
        }
        Ok(())
    }

    /// The period the optimizer binds the reservation to.
    pub fn replenishment_period(&self) -> f64 {
        self.replenishment.unwrap_or(self.period)
    }

    pub fn realizations(&self) -> Result<Option<Vec<DagRealization>>> {
        match &self.workload {
            Workload::Dag(dag) => dag.enumerate_realizations().map(Some),
            Workload::Distribution(_) => Ok(None),
        }
    }

    pub fn distribution(&self) -> Result<JointDistribution> {
        match &self.workload {
            Workload::Dag(dag) => {
                JointDistribution::from_realizations(&dag.enumerate_realizations()?)
            }
            Workload::Distribution(d) => Ok(d.clone()),
        }
    }

    /// Constraint `k` values in ascending order, or `[1]` when unconstrained.
    fn report_ks(&self) -> Vec<u32> {
        let mut ks: Vec<u32> = self.constraints.iter().map(|c| c.k).collect();
        if ks.is_empty() {
            ks.push(1);
        }
        ks.sort_unstable();
        ks
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KBound {
    pub k: u32,
    /// `P(R1 > D)^(k-1) * P(R0 > D)`.
    pub tight: f64,
    /// `P(R1 > D)^k`.
    pub simple: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissReport {
    pub p_miss_cold: f64,
    pub p_miss_hot: f64,
    pub k_bounds: Vec<KBound>,
    pub stable: bool,
}

impl MissReport {
    pub fn tight_bound(&self, k: u32) -> f64 {
        tight_bound(self.p_miss_hot, self.p_miss_cold, k)
    }

    pub fn simple_bound(&self, k: u32) -> f64 {
        simple_bound(self.p_miss_hot, k)
    }
}

/// `hot^(k-1) * cold`, the probability bound of `k` consecutive misses
/// starting after a hit.
pub fn tight_bound(hot: f64, cold: f64, k: u32) -> f64 {
    if k == 0 {
        return 1.0;
    }
    hot.powi(k as i32 - 1) * cold
}

/// `hot^k`, evaluated like [`tight_bound`] so that `cold <= hot` implies
/// `tight_bound <= simple_bound` exactly.
pub fn simple_bound(hot: f64, k: u32) -> f64 {
    tight_bound(hot, hot, k)
}

/// Miss probabilities `(P(R0 > D), P(R1 > D))`.
pub fn miss_probabilities(
    d: &JointDistribution,
    deadline: f64,
    tardiness_bound: f64,
    cfg: &ReservationConfig,
) -> (f64, f64) {
    let hot_backlog = tardiness_bound * f64::from(cfg.parallelism());
    let cold = d.response_time_rv(cfg, 0.0).exceedance(deadline);
    let hot = d.response_time_rv(cfg, hot_backlog).exceedance(deadline);
    (cold, hot)
}

pub fn analyze(task: &TaskSpec, cfg: &ReservationConfig) -> Result<MissReport> {
    task.validate()?;
    analyze_distribution(&task.distribution()?, task, cfg)
}

/// Like [`analyze`], reusing an already built distribution. `task.workload`
/// is ignored.
pub fn analyze_distribution(
    d: &JointDistribution,
    task: &TaskSpec,
    cfg: &ReservationConfig,
) -> Result<MissReport> {
    let (cold, hot) = miss_probabilities(d, task.deadline, task.tardiness_bound, cfg);
    let k_bounds = task
        .report_ks()
        .into_iter()
        .map(|k| KBound {
            k,
            tight: tight_bound(hot, cold, k),
            simple: simple_bound(hot, k),
        })
        .collect();
    Ok(MissReport {
        p_miss_cold: cold,
        p_miss_hot: hot,
        k_bounds,
        stable: hot < 1.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub k: u32,
    pub theta: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub pass: bool,
    pub stable: bool,
    pub verdicts: Vec<Verdict>,
}

/// Which k-consecutive miss bound a constraint is checked against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    /// `P(R1 > D)^k`.
    Simple,
    /// `P(R1 > D)^(k-1) * P(R0 > D)`.
    #[default]
    Tight,
}

impl BoundKind {
    pub fn eval(self, hot: f64, cold: f64, k: u32) -> f64 {
        match self {
            BoundKind::Simple => simple_bound(hot, k),
            BoundKind::Tight => tight_bound(hot, cold, k),
        }
    }
}

impl std::str::FromStr for BoundKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "simple" => Ok(BoundKind::Simple),
            "tight" => Ok(BoundKind::Tight),
            other => Err(format!("unknown bound {other:?} (simple|tight)")),
        }
    }
}

/// Checks every `(k, theta)` constraint against the tight chain bound.
pub fn check_constraints(task: &TaskSpec, report: &MissReport) -> ConstraintCheck {
    check_constraints_with(task, report, BoundKind::Tight)
}

/// Like [`check_constraints`] with a chosen bound; with the optimizer's
/// bound it reproduces the optimizer's feasibility predicate.
pub fn check_constraints_with(
    task: &TaskSpec,
    report: &MissReport,
    kind: BoundKind,
) -> ConstraintCheck {
    let verdicts: Vec<Verdict> = task
        .constraints
        .iter()
        .map(|c| {
            let bound = kind.eval(report.p_miss_hot, report.p_miss_cold, c.k);
            Verdict {
                k: c.k,
                theta: c.theta,
                bound,
                pass: bound <= c.theta,
            }
        })
        .collect();
    let pass = report.stable && verdicts.iter().all(|v| v.pass);
    ConstraintCheck {
        pass,
        stable: report.stable,
        verdicts,
    }
}
