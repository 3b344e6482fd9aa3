//! Finite discrete distributions over (volume, length) and the response-time
//! random variables derived from them.

use serde::{Deserialize, Serialize};

use crate::dag::DagRealization;
use crate::error::{Error, Result};
use crate::reservation::ReservationConfig;
use crate::PROBABILITY_TOLERANCE;

/// Relative slack allowed when checking `length <= volume`; the two sums are
/// accumulated in different orders.
const LENGTH_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointAtom {
    pub probability: f64,
    pub length: f64,
    pub volume: f64,
}

/// Joint distribution of a task's DAG volume and length. Atoms keep the order
/// in which their (volume, length) pair was first seen.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    atoms: Vec<JointAtom>,
}

fn canonical(x: f64) -> f64 {
    // folds -0.0 into 0.0 so exact-equality merging is bitwise stable
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

impl JointDistribution {
    pub fn new(atoms: impl IntoIterator<Item = JointAtom>) -> Result<Self> {
        let mut merged: Vec<JointAtom> = Vec::new();
        for a in atoms {
            if !(a.probability.is_finite()
                && a.probability > 0.0
                && a.probability <= 1.0 + PROBABILITY_TOLERANCE)
            {
                return Err(Error::InvalidDistribution(format!(
                    "probability {} outside (0, 1]",
                    a.probability
                )));
            }
            if !(a.volume.is_finite() && a.volume >= 0.0 && a.length.is_finite() && a.length >= 0.0)
            {
                return Err(Error::InvalidDistribution(format!(
                    "volume {} and length {} must be finite and non-negative",
                    a.volume, a.length
                )));
            }
            if a.length > a.volume * (1.0 + LENGTH_SLACK) {
                return Err(Error::InvalidDistribution(format!(
                    "length {} exceeds volume {}",
                    a.length, a.volume
                )));
            }
            let (volume, length) = (canonical(a.volume), canonical(a.length));
            match merged
                .iter_mut()
                .find(|m| m.volume == volume && m.length == length)
            {
                Some(m) => m.probability += a.probability,
                None => merged.push(JointAtom {
                    probability: a.probability,
                    volume,
                    length,
                }),
            }
        }
        if merged.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let total: f64 = merged.iter().map(|a| a.probability).sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(JointDistribution { atoms: merged })
    }

    pub fn from_realizations(rs: &[DagRealization]) -> Result<Self> {
        if rs.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        Self::new(rs.iter().map(|r| JointAtom {
            probability: r.probability,
            volume: r.volume,
            length: r.length,
        }))
    }

    pub fn atoms(&self) -> &[JointAtom] {
        &self.atoms
    }

    /// `P(volume <= u, length <= v)`.
    pub fn joint_cdf(&self, u: f64, v: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.volume <= u && a.length <= v)
            .map(|a| a.probability)
            .sum()
    }

    /// Workload `vol + (m - 1) len + backlog` per atom.
    pub fn workload_rv(&self, m: u32, backlog: f64) -> DiscreteRv {
        let parallel_loss = f64::from(m.saturating_sub(1));
        DiscreteRv::from_pairs(
            self.atoms
                .iter()
                .map(|a| (a.probability, a.volume + parallel_loss * a.length + backlog)),
        )
    }

    /// Response-time bound per atom for a fixed backlog bound.
    pub fn response_time_rv(&self, cfg: &ReservationConfig, backlog: f64) -> DiscreteRv {
        let work = self.workload_rv(cfg.parallelism(), backlog);
        DiscreteRv::from_pairs(work.atoms().iter().map(|&(p, w)| (p, cfg.service_time(w))))
    }

    /// `P(R <= u)` evaluated through the unit-interval partition of
    /// `X = W / (m E)`: for every integer `l` in
    /// `floor(inf X) ..= ceil(sup X)`, sum the mass with `l < X <= l + 1` and
    /// `X <= (u - (P - E)(l + 2)) / E`. Atoms with zero workload contribute
    /// when `u >= 0`.
    pub fn response_time_cdf_formula(&self, cfg: &ReservationConfig, backlog: f64, u: f64) -> f64 {
        let (m, e, p) = (f64::from(cfg.parallelism()), cfg.budget(), cfg.period());
        let work = self.workload_rv(cfg.parallelism(), backlog);
        // (probability, W, X)
        let xs: Vec<(f64, f64, f64)> = work
            .atoms()
            .iter()
            .map(|&(prob, w)| (prob, w, w / (m * e)))
            .collect();

        let mut total: f64 = xs
            .iter()
            .filter(|a| a.2 == 0.0 && u >= 0.0)
            .map(|a| a.0)
            .sum();
        let positive: Vec<(f64, f64, f64)> = xs.into_iter().filter(|a| a.2 > 0.0).collect();
        let Some(lo) = positive.iter().map(|a| a.2).reduce(f64::min) else {
            return total;
        };
        let hi = positive.iter().map(|a| a.2).fold(lo, f64::max);

        // Only cells that hold mass contribute; visit those in increasing l.
        let mut cells: Vec<u64> = positive.iter().map(|a| a.2.ceil() as u64 - 1).collect();
        cells.sort_unstable();
        cells.dedup();
        let (first, last) = (lo.floor() as u64, hi.ceil() as u64);
        for l in cells.into_iter().filter(|l| (first..=last).contains(l)) {
            let lf = l as f64;
            // `X <= (u - (P - E)(l + 2)) / E`, multiplied out by `E` so that
            // an atom sitting exactly at `u` rounds the same way as in
            // `service_time`.
            let delay = (lf + 2.0) * (p - e);
            total += positive
                .iter()
                .filter(|&&(_, w, x)| lf < x && x <= lf + 1.0 && delay + w / m <= u)
                .map(|a| a.0)
                .sum::<f64>();
        }
        total
    }
}

/// A finite discrete random variable with strictly increasing support.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteRv {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteRv {
    /// Builds from `(probability, value)` pairs, merging exactly equal values.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut atoms: Vec<(f64, f64)> =
            pairs.into_iter().map(|(p, v)| (p, canonical(v))).collect();
        atoms.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (p, v) in atoms {
            match merged.last_mut() {
                Some(last) if last.1 == v => last.0 += p,
                _ => merged.push((p, v)),
            }
        }
        DiscreteRv { atoms: merged }
    }

    /// `(probability, value)` sorted by value.
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn max_value(&self) -> Option<f64> {
        self.atoms.last().map(|a| a.1)
    }

    /// `P(X > threshold)`. Exactly 1 below the support and exactly 0 at or
    /// above its maximum, so stability tests are not at the mercy of
    /// rounding in the total mass.
    pub fn exceedance(&self, threshold: f64) -> f64 {
        mass(&self.atoms, |v| v > threshold)
    }

    /// `P(X <= u)`, with the same exact ends as [`DiscreteRv::exceedance`].
    pub fn cdf(&self, u: f64) -> f64 {
        mass(&self.atoms, |v| v <= u)
    }
}

fn mass(atoms: &[(f64, f64)], keep: impl Fn(f64) -> bool) -> f64 {
    let mut kept = 0usize;
    let mut total = 0.0;
    for a in atoms.iter().filter(|a| keep(a.1)) {
        kept += 1;
        total += a.0;
    }
    match kept {
        0 => 0.0,
        k if k == atoms.len() => 1.0,
        _ => total.clamp(0.0, 1.0),
    }
}
