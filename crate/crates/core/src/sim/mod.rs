//! Discrete-event simulation of one task on its reservation system.
//!
//! Jobs are released periodically at `0, T, 2T, ...`; each draws a DAG
//! realization independently from the task's distribution. Jobs are served
//! in FIFO order: only the head-of-line job receives service, and within it
//! ready subjobs are list-scheduled onto idle servers (smallest node id
//! first). A running subjob is suspended when its service segment ends and
//! resumes on any server in a later segment. A job still unfinished at
//! `release + D + rho` is aborted and its remaining work discarded.
//!
//! Event ties at one instant are resolved in a fixed order: subjob
//! completions, releases, aborts, activation of the next job, end of the
//! service segment, dispatch.

mod supply;
mod trace;

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::TaskSpec;
use crate::dag::DagRealization;
use crate::error::{Error, Result};
use crate::reservation::ReservationConfig;

pub use supply::SupplyPattern;
pub use trace::{
    Aggregate, BoundCheck, ConsecutiveMisses, JobRecord, LemmaSample, LemmaViolation, SimTrace,
    TraceHeader, SIM_TOLERANCE,
};

use supply::Supply;

/// Name of the seeded generator, echoed in every trace header.
pub const GENERATOR: &str = "rand_chacha::ChaCha8Rng/seed_from_u64";

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub task: TaskSpec,
    pub cfg: ReservationConfig,
    pub num_jobs: u64,
    pub seed: u64,
    pub supply: SupplyPattern,
    /// Record per-event work/service samples for the work-service check.
    pub record_lemma: bool,
}

/// A realization flattened into index-based adjacency, subjobs in id order.
struct Compiled {
    exec: Vec<f64>,
    succ: Vec<Vec<usize>>,
    npred: Vec<usize>,
}

impl Compiled {
    fn new(r: &DagRealization) -> Self {
        let pos = |id| {
            r.subjobs
                .binary_search_by_key(&id, |s: &(crate::dag::NodeId, f64)| s.0)
                .expect("edge endpoint")
        };
        let n = r.subjobs.len();
        let mut succ = vec![Vec::new(); n];
        let mut npred = vec![0; n];
        for &(a, b) in &r.edges {
            let (ia, ib) = (pos(a), pos(b));
            succ[ia].push(ib);
            npred[ib] += 1;
        }
        Compiled {
            exec: r.subjobs.iter().map(|s| s.1).collect(),
            succ,
            npred,
        }
    }
}

struct Pending {
    record: usize,
    abort_at: f64,
    service_at_release: f64,
}

struct Active {
    record: usize,
    realization: usize,
    abort_at: f64,
    remaining: Vec<f64>,
    preds_left: Vec<usize>,
    ready: BTreeSet<usize>,
    /// `(subjob, absolute finish time if not suspended)`.
    running: Vec<(usize, f64)>,
    done: usize,
    work: f64,
    service_at_activation: f64,
}

struct Engine<'a> {
    compiled: &'a [Compiled],
    deadline: f64,
    rho: f64,
    m: usize,
    supply: Supply,
    segment: (f64, f64),
    /// Cumulative service delivered by all servers since time 0.
    service: f64,
    records: Vec<JobRecord>,
    pending: VecDeque<Pending>,
    active: Option<Active>,
    lemma: Option<Vec<LemmaSample>>,
    conservation_violations: u64,
}

impl Engine<'_> {
    fn serving(&self, t: f64) -> bool {
        self.segment.0 <= t && t < self.segment.1
    }

    fn finish_running(&mut self, t: f64) {
        let Some(a) = self.active.as_mut() else {
            return;
        };
        let compiled = &self.compiled[a.realization];
        let mut i = 0;
        while i < a.running.len() {
            let (v, finish) = a.running[i];
            if finish <= t {
                a.running.swap_remove(i);
                a.remaining[v] = 0.0;
                complete_subjob(a, compiled, v);
            } else {
                i += 1;
            }
        }
    }

    /// Completes zero-length ready subjobs; they need no service.
    fn drain_instant(a: &mut Active, compiled: &Compiled) {
        while let Some(&v) = a.ready.iter().find(|&&v| a.remaining[v] == 0.0) {
            a.ready.remove(&v);
            complete_subjob(a, compiled, v);
        }
    }

    fn settle_jobs(&mut self, t: f64) {
        loop {
            if let Some(a) = self.active.as_mut() {
                Self::drain_instant(a, &self.compiled[a.realization]);
                if a.done == a.remaining.len() {
                    let a = self.active.take().expect("active");
                    self.sample(&a, t);
                    let rec = &mut self.records[a.record];
                    let resp = t - rec.release;
                    rec.response = Some(resp);
                    rec.tardiness = (resp - self.deadline).max(0.0);
                    continue;
                }
                if t >= a.abort_at {
                    let a = self.active.take().expect("active");
                    self.sample(&a, t);
                    self.abort(a.record);
                    continue;
                }
                break;
            }
            // Jobs that never reached the head of the queue in time.
            while self.pending.front().is_some_and(|p| t >= p.abort_at) {
                let p = self.pending.pop_front().expect("front");
                self.records[p.record].backlog = self.service - p.service_at_release;
                self.abort(p.record);
            }
            let Some(p) = self.pending.pop_front() else {
                break;
            };
            let realization = self.records[p.record].atom;
            let compiled = &self.compiled[realization];
            self.records[p.record].backlog = self.service - p.service_at_release;
            let ready = (0..compiled.exec.len())
                .filter(|&v| compiled.npred[v] == 0)
                .collect();
            let a = Active {
                record: p.record,
                realization,
                abort_at: p.abort_at,
                remaining: compiled.exec.clone(),
                preds_left: compiled.npred.clone(),
                ready,
                running: Vec::with_capacity(self.m),
                done: 0,
                work: 0.0,
                service_at_activation: self.service,
            };
            self.sample(&a, t);
            self.active = Some(a);
        }
    }

    fn abort(&mut self, record: usize) {
        let rec = &mut self.records[record];
        rec.response = None;
        rec.tardiness = self.rho;
    }

    fn sample(&mut self, a: &Active, t: f64) {
        if let Some(samples) = self.lemma.as_mut() {
            samples.push(LemmaSample {
                job: a.record as u32,
                time: t,
                work: a.work,
                service: self.service - a.service_at_activation,
            });
        }
    }

    fn roll_segment(&mut self, t: f64) {
        while t >= self.segment.1 {
            if let Some(a) = self.active.as_mut() {
                for (v, finish) in a.running.drain(..) {
                    a.remaining[v] = (finish - t).max(0.0);
                    a.ready.insert(v);
                }
            }
            self.segment = self.supply.next_segment();
        }
    }

    fn dispatch(&mut self, t: f64) {
        let serving = self.serving(t);
        let m = self.m;
        let Some(a) = self.active.as_mut() else {
            return;
        };
        if serving {
            while a.running.len() < m {
                let Some(v) = a.ready.pop_first() else { break };
                a.running.push((v, t + a.remaining[v]));
            }
            if !a.ready.is_empty() && a.running.len() < m {
                self.conservation_violations += 1;
            }
        }
    }

    fn next_event(&self, t: f64, next_release: f64) -> f64 {
        let mut next = next_release;
        if let Some(a) = &self.active {
            next = next.min(a.abort_at);
            if self.serving(t) {
                next = next.min(self.segment.1);
                for &(_, finish) in &a.running {
                    next = next.min(finish);
                }
            } else {
                next = next.min(self.segment.0);
            }
        }
        next
    }

    fn advance(&mut self, t: f64, to: f64) {
        if to > t && self.serving(t) {
            let dt = to - t;
            self.service += self.m as f64 * dt;
            if let Some(a) = self.active.as_mut() {
                a.work += a.running.len() as f64 * dt;
            }
        }
    }
}

fn complete_subjob(a: &mut Active, compiled: &Compiled, v: usize) {
    a.done += 1;
    for &w in &compiled.succ[v] {
        a.preds_left[w] -= 1;
        if a.preds_left[w] == 0 {
            a.ready.insert(w);
        }
    }
}

/// Runs the simulation. Identical configurations (seed included) produce
/// identical traces.
pub fn run(sim: &SimConfig) -> Result<SimTrace> {
    sim.task.validate()?;
    if sim.num_jobs == 0 {
        return Err(Error::InvalidArgument(
            "number of jobs must be at least 1".into(),
        ));
    }
    if sim.num_jobs > u64::from(u32::MAX) {
        return Err(Error::InvalidArgument(
            "number of jobs exceeds 2^32 - 1".into(),
        ));
    }
    let realizations = sim.task.realizations()?.ok_or_else(|| {
        Error::InvalidTask("simulation needs a DAG, not only a distribution".into())
    })?;
    let compiled: Vec<Compiled> = realizations.iter().map(Compiled::new).collect();
    let mut cumulative = Vec::with_capacity(realizations.len());
    let mut acc = 0.0;
    for r in &realizations {
        acc += r.probability;
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let mut draw = || {
        let u: f64 = rng.random::<f64>() * acc;
        cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(cumulative.len() - 1)
    };

    let task = &sim.task;
    let mut supply = Supply::new(sim.supply, &sim.cfg);
    let segment = supply.next_segment();
    let mut e = Engine {
        compiled: &compiled,
        deadline: task.deadline,
        rho: task.tardiness_bound,
        m: sim.cfg.parallelism() as usize,
        supply,
        segment,
        service: 0.0,
        records: Vec::with_capacity(sim.num_jobs as usize),
        pending: VecDeque::new(),
        active: None,
        lemma: sim.record_lemma.then(Vec::new),
        conservation_violations: 0,
    };

    let release_of = |j: u64| j as f64 * task.period;
    let mut released = 0u64;
    let mut t = 0.0f64;
    loop {
        e.finish_running(t);
        while released < sim.num_jobs && release_of(released) <= t {
            let release = release_of(released);
            e.records.push(JobRecord {
                job: released,
                release,
                atom: draw(),
                response: None,
                tardiness: 0.0,
                backlog: 0.0,
            });
            e.pending.push_back(Pending {
                record: e.records.len() - 1,
                abort_at: release + task.deadline + task.tardiness_bound,
                service_at_release: e.service,
            });
            released += 1;
        }
        e.settle_jobs(t);
        e.roll_segment(t);
        e.dispatch(t);

        let next_release = if released < sim.num_jobs {
            release_of(released)
        } else {
            f64::INFINITY
        };
        if e.active.is_none() && e.pending.is_empty() && released == sim.num_jobs {
            break;
        }
        let next = e.next_event(t, next_release);
        debug_assert!(next >= t && next.is_finite());
        e.advance(t, next);
        t = next;
        if let Some(a) = e.active.take() {
            e.sample(&a, t);
            e.active = Some(a);
        }
    }

    let missed: Vec<bool> = e.records.iter().map(|r| r.missed(task.deadline)).collect();
    let max_k = task
        .constraints
        .iter()
        .map(|c| c.k)
        .max()
        .unwrap_or(0)
        .max(3);
    let misses = missed.iter().filter(|&&m| m).count() as u64;
    let aborted = e.records.iter().filter(|r| r.aborted()).count() as u64;
    let jobs = e.records.len() as u64;
    let aggregate = Aggregate {
        kind: "aggregate",
        jobs,
        completed: jobs - aborted,
        aborted,
        misses,
        miss_rate: misses as f64 / jobs as f64,
        max_tardiness: e.records.iter().map(|r| r.tardiness).fold(0.0, f64::max),
        max_backlog: e.records.iter().map(|r| r.backlog).fold(0.0, f64::max),
        max_response: e
            .records
            .iter()
            .filter_map(|r| r.response)
            .fold(0.0, f64::max),
        consecutive: (1..=max_k)
            .map(|k| trace::consecutive_misses(&missed, k))
            .collect(),
        work_conservation_violations: e.conservation_violations,
    };
    let header = TraceHeader {
        kind: "header",
        generator: GENERATOR,
        seed: sim.seed,
        jobs: sim.num_jobs,
        supply: sim.supply.name(),
        m: sim.cfg.parallelism(),
        budget: sim.cfg.budget(),
        period: sim.cfg.period(),
        deadline: task.deadline,
        task_period: task.period,
        tardiness_bound: task.tardiness_bound,
    };
    Ok(SimTrace {
        header,
        jobs: e.records,
        aggregate,
        atoms: realizations.iter().map(|r| (r.volume, r.length)).collect(),
        lemma: e.lemma,
    })
}
