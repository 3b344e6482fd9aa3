//! Reservation synthesis: for every parallelism degree `m = 1..=omega`, find
//! the smallest service budget `E` whose miss bounds satisfy all of a task's
//! constraints.
//!
//! The miss probabilities are non-increasing in `E` for fixed `m` and `P`,
//! so feasibility is monotone and a bisection over `(0, min(D, P)]`
//! converges to the feasibility threshold.

use serde::{Deserialize, Serialize};

pub use crate::analysis::BoundKind;
use crate::analysis::{miss_probabilities, TaskSpec};
use crate::distribution::JointDistribution;
use crate::error::{Error, Result};
use crate::reservation::ReservationConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerOptions {
    pub bound: BoundKind,
    /// Bisection stops once the bracket is at most `eps_rel * P` wide.
    pub eps_rel: f64,
}

impl Default for OptimizerOptions {
    /// The simple power bound, bisected to `1e-6 * P`.
    fn default() -> Self {
        OptimizerOptions {
            bound: BoundKind::Simple,
            eps_rel: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigOption {
    pub m: u32,
    #[serde(rename = "E")]
    pub budget: f64,
    #[serde(rename = "P")]
    pub period: f64,
    pub p_miss_hot: f64,
    /// `k` values of the constraints met at this budget (all of them).
    pub satisfied: Vec<u32>,
}

impl ConfigOption {
    pub fn config(&self) -> ReservationConfig {
        ReservationConfig::new(self.m, self.budget, self.period)
            .expect("optimizer emits valid configurations")
    }

    pub fn utilization(&self) -> f64 {
        f64::from(self.m) * self.budget / self.period
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigMenu {
    pub task: String,
    pub options: Vec<ConfigOption>,
    pub selected: Option<usize>,
}

impl ConfigMenu {
    /// Wraps an option list and selects the lowest-utilization entry.
    pub fn new(task: impl Into<String>, options: Vec<ConfigOption>) -> Self {
        let selected = select_index(&options);
        ConfigMenu {
            task: task.into(),
            options,
            selected,
        }
    }

    pub fn selected_option(&self) -> Option<&ConfigOption> {
        self.selected.map(|i| &self.options[i])
    }
}

/// Whether `cfg` meets every constraint of `task` (and stability) under the
/// chosen bound.
pub fn is_feasible(
    d: &JointDistribution,
    task: &TaskSpec,
    cfg: &ReservationConfig,
    bound: BoundKind,
) -> bool {
    let (cold, hot) = miss_probabilities(d, task.deadline, task.tardiness_bound, cfg);
    if hot >= 1.0 {
        return false;
    }
    task.constraints
        .iter()
        .all(|c| bound.eval(hot, cold, c.k) <= c.theta)
}

pub fn optimize_task(task: &TaskSpec, opts: &OptimizerOptions) -> Result<Vec<ConfigOption>> {
    task.validate()?;
    optimize_distribution(&task.distribution()?, task, opts)
}

/// Menu over `m = 1..=task.omega` for a prebuilt distribution.
pub fn optimize_distribution(
    d: &JointDistribution,
    task: &TaskSpec,
    opts: &OptimizerOptions,
) -> Result<Vec<ConfigOption>> {
    if !(opts.eps_rel.is_finite() && opts.eps_rel > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps {} must be positive",
            opts.eps_rel
        )));
    }
    let period = task.replenishment_period();
    let top = task.deadline.min(period);
    let eps = opts.eps_rel * period;
    let mut menu = Vec::new();
    for m in 1..=task.omega {
        let feasible = |e: f64| {
            let cfg = ReservationConfig::new(m, e, period).expect("budget within (0, P]");
            is_feasible(d, task, &cfg, opts.bound)
        };
        if !feasible(top) {
            continue;
        }
        // `lo` is infeasible (or 0), `hi` is feasible.
        let (mut lo, mut hi) = (0.0f64, top);
        while hi - lo > eps {
            let mid = lo + (hi - lo) / 2.0;
            if mid <= lo || mid >= hi {
                break;
            }
            if feasible(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let cfg = ReservationConfig::new(m, hi, period)?;
        let (_, hot) = miss_probabilities(d, task.deadline, task.tardiness_bound, &cfg);
        menu.push(ConfigOption {
            m,
            budget: hi,
            period,
            p_miss_hot: hot,
            satisfied: task.constraints.iter().map(|c| c.k).collect(),
        });
    }
    Ok(menu)
}

fn select_index(options: &[ConfigOption]) -> Option<usize> {
    options
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.utilization()
                .total_cmp(&b.utilization())
                .then(a.m.cmp(&b.m))
        })
        .map(|(i, _)| i)
}

/// Picks the option with the least reserved utilization `m E / P`; ties go
/// to the smaller `m`.
pub fn select_config(options: &[ConfigOption]) -> Result<&ConfigOption> {
    select_index(options)
        .map(|i| &options[i])
        .ok_or(Error::Infeasible)
}
