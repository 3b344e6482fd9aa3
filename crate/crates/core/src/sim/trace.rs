use std::io::{self, Write};

use serde::Serialize;

use crate::reservation::ReservationConfig;

/// Relative tolerance for comparing simulated quantities against analytic
/// bounds; simulated times accumulate rounding over many events.
pub const SIM_TOLERANCE: f64 = 1e-9;

fn within(observed: f64, bound: f64) -> bool {
    observed <= bound + SIM_TOLERANCE * bound.abs().max(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceHeader {
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub generator: &'static str,
    pub seed: u64,
    pub jobs: u64,
    pub supply: &'static str,
    pub m: u32,
    #[serde(rename = "E")]
    pub budget: f64,
    #[serde(rename = "P")]
    pub period: f64,
    pub deadline: f64,
    pub task_period: f64,
    pub tardiness_bound: f64,
}

/// One simulated job. `response` is `None` for aborted jobs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JobRecord {
    pub job: u64,
    pub release: f64,
    /// Index of the sampled realization in enumeration order.
    pub atom: usize,
    #[serde(rename = "resp")]
    pub response: Option<f64>,
    #[serde(rename = "tard")]
    pub tardiness: f64,
    /// Service delivered to earlier jobs of the task after this job's
    /// release, i.e. capacity this job could not use.
    pub backlog: f64,
}

impl JobRecord {
    pub fn aborted(&self) -> bool {
        self.response.is_none()
    }

    pub fn missed(&self, deadline: f64) -> bool {
        self.response.is_none_or(|r| r > deadline)
    }
}

/// Empirical frequency of `k` consecutive misses following a hit (or the
/// first job): `runs` out of `windows` eligible start positions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConsecutiveMisses {
    pub k: u32,
    pub windows: u64,
    pub runs: u64,
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub jobs: u64,
    pub completed: u64,
    pub aborted: u64,
    pub misses: u64,
    pub miss_rate: f64,
    pub max_tardiness: f64,
    pub max_backlog: f64,
    pub max_response: f64,
    pub consecutive: Vec<ConsecutiveMisses>,
    pub work_conservation_violations: u64,
}

/// One observation of a job's cumulative work and delivered service,
/// both measured from the instant the job became the FIFO head.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LemmaSample {
    pub job: u32,
    pub time: f64,
    pub work: f64,
    pub service: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub header: TraceHeader,
    pub jobs: Vec<JobRecord>,
    pub aggregate: Aggregate,
    /// `(volume, length)` per realization index.
    pub atoms: Vec<(f64, f64)>,
    pub lemma: Option<Vec<LemmaSample>>,
}

pub(crate) fn consecutive_misses(missed: &[bool], k: u32) -> ConsecutiveMisses {
    let k_len = k as usize;
    let (mut windows, mut runs) = (0u64, 0u64);
    if missed.len() >= k_len {
        for start in 0..=missed.len() - k_len {
            if start > 0 && missed[start - 1] {
                continue;
            }
            windows += 1;
            if missed[start..start + k_len].iter().all(|&m| m) {
                runs += 1;
            }
        }
    }
    let frequency = if windows == 0 {
        0.0
    } else {
        runs as f64 / windows as f64
    };
    ConsecutiveMisses {
        k,
        windows,
        runs,
        frequency,
    }
}

/// Jobs that violate an analytic bound, by kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BoundCheck {
    /// Response time above `R'(observed backlog)`.
    pub dominance: Vec<u64>,
    /// Response time above `R'(rho m)` after a miss or `R'(0)` after a hit.
    pub corollary: Vec<u64>,
    /// Backlog at release above `rho m`.
    pub backlog: Vec<u64>,
    /// Tardiness above `rho`.
    pub tardiness: Vec<u64>,
}

impl BoundCheck {
    pub fn is_clean(&self) -> bool {
        self.dominance.is_empty()
            && self.corollary.is_empty()
            && self.backlog.is_empty()
            && self.tardiness.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LemmaViolation {
    pub sample: LemmaSample,
    pub allowance: f64,
}

impl SimTrace {
    fn cfg(&self) -> ReservationConfig {
        ReservationConfig::new(self.header.m, self.header.budget, self.header.period)
            .expect("trace of a valid config")
    }

    /// Checks every job against the per-realization response-time bounds.
    pub fn check_bounds(&self) -> BoundCheck {
        let cfg = self.cfg();
        let deadline = self.header.deadline;
        let rho = self.header.tardiness_bound;
        let hot_backlog = rho * f64::from(cfg.parallelism());
        let mut out = BoundCheck::default();
        let mut prev_missed = false;
        for j in &self.jobs {
            let (volume, length) = self.atoms[j.atom];
            if !within(j.backlog, hot_backlog) {
                out.backlog.push(j.job);
            }
            if !within(j.tardiness, rho) {
                out.tardiness.push(j.job);
            }
            if let Some(resp) = j.response {
                let own = cfg
                    .response_time_bound(volume, length, j.backlog)
                    .expect("non-negative inputs");
                if !within(resp, own) {
                    out.dominance.push(j.job);
                }
                let assumed = if prev_missed { hot_backlog } else { 0.0 };
                let cor = cfg
                    .response_time_bound(volume, length, assumed)
                    .expect("non-negative inputs");
                if !within(resp, cor) {
                    out.corollary.push(j.job);
                }
            }
            prev_missed = j.missed(deadline);
        }
        out
    }

    /// `work >= service - (m - 1) len(G)` at every recorded event. Returns
    /// `None` when recording was disabled.
    pub fn check_work_service_lemma(&self) -> Option<Result<(), LemmaViolation>> {
        let samples = self.lemma.as_ref()?;
        let loss = f64::from(self.header.m - 1);
        for s in samples {
            let (_, length) = self.atoms[self.jobs[s.job as usize].atom];
            let allowance = loss * length;
            if !within(s.service - allowance, s.work) {
                return Some(Err(LemmaViolation {
                    sample: *s,
                    allowance,
                }));
            }
        }
        Some(Ok(()))
    }

    /// Header line, one line per job, then the aggregate line.
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> io::Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for j in &self.jobs {
            serde_json::to_writer(&mut out, j)?;
            out.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut out, &self.aggregate)?;
        out.write_all(b"\n")?;
        out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consecutive_runs_follow_a_hit() {
        // hit, miss, miss, hit, miss, miss, miss
        let m = [false, true, true, false, true, true, true];
        let c1 = consecutive_misses(&m, 1);
        // eligible starts: 0, 1, 4 -> misses at 1 and 4
        assert_eq!((c1.windows, c1.runs), (3, 2));
        let c2 = consecutive_misses(&m, 2);
        assert_eq!((c2.windows, c2.runs), (3, 2));
        let c3 = consecutive_misses(&m, 3);
        // 1..4 ends in a hit, 4..7 is all misses
        assert_eq!((c3.windows, c3.runs), (3, 1));
    }

    #[test]
    fn leading_misses_count_from_job_zero() {
        let c = consecutive_misses(&[true, true, false], 2);
        assert_eq!((c.windows, c.runs), (1, 1));
        assert_eq!(consecutive_misses(&[true], 2).windows, 0);
    }
}
