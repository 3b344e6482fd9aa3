//! The `m`-in-parallel reservation system: `m` servers, each guaranteeing
//! `E` units of service in every window of length `P`.
//!
//! In the worst case the very first service of an interval arrives after a
//! gap of `2 (P - E)`, after which all `m` servers deliver `E` units each per
//! period:
//!
//! ```text
//! supply
//!  2mE |                           ______
//!      |                          /
//!   mE |                _________/
//!      |               /
//!    0 |______________/
//!      +--------------+--+--------+--+----> t
//!                2(P-E) 2P-E  3P-2E 3P-E
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReservationConfig {
    m: u32,
    #[serde(rename = "E")]
    budget: f64,
    #[serde(rename = "P")]
    period: f64,
}

impl ReservationConfig {
    pub fn new(m: u32, budget: f64, period: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig(
                "parallelism m must be at least 1".into(),
            ));
        }
        if !(budget.is_finite() && budget > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "service budget E = {budget} must be positive"
            )));
        }
        if !(period.is_finite() && budget <= period) {
            return Err(Error::InvalidConfig(format!(
                "service budget E = {budget} exceeds period P = {period}"
            )));
        }
        Ok(ReservationConfig { m, budget, period })
    }

    pub fn parallelism(&self) -> u32 {
        self.m
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    fn gap(&self) -> f64 {
        self.period - self.budget
    }

    /// Minimum service delivered in any interval of length `t`.
    pub fn sbf(&self, t: f64) -> f64 {
        let m = f64::from(self.m);
        let gap = self.gap();
        if gap == 0.0 {
            return m * t.max(0.0);
        }
        let since = t - 2.0 * gap;
        if since <= 0.0 {
            return 0.0;
        }
        let cycles = (since / self.period).floor();
        let offset = since - cycles * self.period;
        m * (cycles * self.budget + offset.min(self.budget))
    }

    /// Smallest `t` with `sbf(t) >= demand`:
    /// `(ceil(demand / (m E)) + 1) (P - E) + demand / m`.
    ///
    /// Returns 0 for a non-positive demand.
    pub fn inverse_sbf(&self, demand: f64) -> f64 {
        if demand <= 0.0 {
            return 0.0;
        }
        let m = f64::from(self.m);
        let windows = (demand / (m * self.budget)).ceil();
        (windows + 1.0) * self.gap() + demand / m
    }

    /// Service-time bound for a workload that already includes backlog and
    /// parallelism loss; empty workloads complete immediately.
    pub fn service_time(&self, workload: f64) -> f64 {
        if workload == 0.0 {
            0.0
        } else {
            self.inverse_sbf(workload)
        }
    }

    /// Response-time bound of one DAG job with the given volume, length and
    /// pending backlog at release.
    pub fn response_time_bound(&self, volume: f64, length: f64, backlog: f64) -> Result<f64> {
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !(finite_nonneg(volume) && finite_nonneg(length) && finite_nonneg(backlog)) {
            return Err(Error::InvalidArgument(format!(
                "volume {volume}, length {length} and backlog {backlog} must be finite and non-negative"
            )));
        }
        if length > volume * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "length {length} exceeds volume {volume}"
            )));
        }
        let workload = volume + f64::from(self.m - 1) * length + backlog;
        Ok(self.service_time(workload))
    }

    /// Reserved processor share `m E / P`.
    pub fn utilization(&self) -> f64 {
        f64::from(self.m) * self.budget / self.period
    }
}

/// Advisory processor-budget summary over a set of reservations. Passing it
/// does not prove the reservations can be scheduled on `processors` cores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilizationHint {
    pub utilization: f64,
    pub max_parallelism: u32,
    pub processors: u32,
    pub pass: bool,
}

pub fn utilization_hint(configs: &[ReservationConfig], processors: u32) -> UtilizationHint {
    let utilization: f64 = configs.iter().map(ReservationConfig::utilization).sum();
    let max_parallelism = configs.iter().map(|c| c.m).max().unwrap_or(0);
    UtilizationHint {
        utilization,
        max_parallelism,
        processors,
        pass: utilization <= f64::from(processors),
    }
}
