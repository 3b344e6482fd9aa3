use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dagreserve_core::optimizer::optimize_distribution;
use dagreserve_core::sim::{self, SimConfig};
use dagreserve_core::{
    check_constraints_with, utilization_hint, BoundKind, ConfigMenu, ConstraintCheck,
    DagRealization, JointAtom, JointDistribution, MissReport, NodeId, OptimizerOptions,
    ReservationConfig, TaskSpec, UtilizationHint,
};
use serde::{Deserialize, Serialize};

use crate::taskset::{TaskEntry, TaskSetFile};
use crate::{
    AnalyzeArgs, CliError, ConfigArgs, EnumerateArgs, InputArgs, OptimizeArgs, SimulateArgs,
};

/// Result of a command that ran to completion.
#[derive(Debug, Default)]
pub struct Outcome {
    pub pass: bool,
    /// Reasons for failure, printed to standard error.
    pub diagnostics: Vec<String>,
}

impl Outcome {
    fn pass() -> Self {
        Outcome {
            pass: true,
            diagnostics: Vec::new(),
        }
    }

    fn from_diagnostics(diagnostics: Vec<String>) -> Self {
        Outcome {
            pass: diagnostics.is_empty(),
            diagnostics,
        }
    }
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(std::io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io {
            path: path.into(),
            source,
        })
}

pub fn validate(args: &InputArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let file = TaskSetFile::load(&args.input)?;
    let violations = file.violations();
    for v in &violations {
        writeln!(out, "E: {v}")?;
    }
    if violations.is_empty() {
        writeln!(out, "ok: {} task(s) valid", file.tasks.len())?;
    }
    Ok(Outcome {
        pass: violations.is_empty(),
        diagnostics: Vec::new(),
    })
}

// ---------------------------------------------------------------- enumerate

#[derive(Debug, Serialize, Deserialize)]
pub struct ChoiceJson {
    pub condition: NodeId,
    pub branch: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RealizationJson {
    pub index: usize,
    pub probability: f64,
    pub volume: f64,
    pub length: f64,
    pub choices: Vec<ChoiceJson>,
    pub subjobs: Vec<NodeId>,
    pub edges: Vec<(NodeId, NodeId)>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EnumerationJson {
    pub task: String,
    /// Merged (volume, length) atoms, reusable as a task's `distribution`.
    pub distribution: Vec<JointAtom>,
    /// Empty for tasks given as a distribution.
    pub realizations: Vec<RealizationJson>,
}

impl RealizationJson {
    fn new(index: usize, r: &DagRealization) -> Self {
        RealizationJson {
            index,
            probability: r.probability,
            volume: r.volume,
            length: r.length,
            choices: r
                .choices
                .iter()
                .map(|&(condition, branch)| ChoiceJson { condition, branch })
                .collect(),
            subjobs: r.subjobs.iter().map(|s| s.0).collect(),
            edges: r.edges.clone(),
        }
    }
}

/// Probability to 12 decimals with trailing zeros removed, so that products
/// such as `0.7 * 0.4` print as `0.28`.
fn short(x: f64) -> String {
    let s = format!("{x:.12}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_string()
}

pub fn enumerate(args: &EnumerateArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let file = TaskSetFile::load(&args.input)?;
    let expect: Option<Vec<JointAtom>> = match &args.expect {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            Some(
                serde_json::from_str(&text).map_err(|source| CliError::Parse {
                    path: path.clone(),
                    source,
                })?,
            )
        }
        None => None,
    };
    let (_, spec) = file.task(&args.task)?;
    let realizations = spec.realizations()?.unwrap_or_default();
    let distribution = spec.distribution()?;
    if args.json {
        let doc = EnumerationJson {
            task: args.task.clone(),
            distribution: distribution.atoms().to_vec(),
            realizations: realizations
                .iter()
                .enumerate()
                .map(|(i, r)| RealizationJson::new(i, r))
                .collect(),
        };
        write_json(out, &doc)?;
        return Ok(Outcome::pass());
    }
    let rows: Vec<JointAtom> = if realizations.is_empty() {
        distribution.atoms().to_vec()
    } else {
        realizations
            .iter()
            .map(|r| JointAtom {
                probability: r.probability,
                length: r.length,
                volume: r.volume,
            })
            .collect()
    };
    write_table(out, &args.task, rows, expect.as_deref())?;
    Ok(Outcome::pass())
}

/// Fixed-width realization table, sorted by probability (descending) then
/// volume. With `expect`, a row whose computed length differs from the
/// expected row of equal probability and volume is marked `*`, and a row
/// with no expected counterpart is marked `?`.
pub fn write_table(
    out: &mut dyn Write,
    task: &str,
    mut rows: Vec<JointAtom>,
    expect: Option<&[JointAtom]>,
) -> Result<(), CliError> {
    rows.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then(a.volume.total_cmp(&b.volume))
    });
    writeln!(out, "task {task}: {} realization(s)", rows.len())?;
    writeln!(
        out,
        "{:>4}  {:>14}  {:>12}   {:>12}",
        "#", "probability", "length", "volume"
    )?;
    let mut notes = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let flag = match expect {
            None => ' ',
            Some(expected) => {
                let twin = expected.iter().find(|x| {
                    (x.probability - r.probability).abs() <= 1e-9
                        && (x.volume - r.volume).abs() <= 1e-9
                });
                match twin {
                    Some(x) if (x.length - r.length).abs() > 1e-9 => {
                        notes.push(format!(
                            "* row {}: computed length {} differs from expected {}",
                            i + 1,
                            short(r.length),
                            short(x.length)
                        ));
                        '*'
                    }
                    Some(_) => ' ',
                    None => {
                        notes.push(format!(
                            "? row {}: no expected row with this probability and volume",
                            i + 1
                        ));
                        '?'
                    }
                }
            }
        };
        writeln!(
            out,
            "{:>4}  {:>14}  {:>12}{flag}  {:>12}",
            i + 1,
            short(r.probability),
            short(r.length),
            short(r.volume)
        )?;
    }
    for n in notes {
        writeln!(out, "{n}")?;
    }
    Ok(())
}

// ------------------------------------------------------------------ analyze

fn config_for(
    entry: &TaskEntry,
    spec: &TaskSpec,
    c: &ConfigArgs,
) -> Result<ReservationConfig, CliError> {
    let period = c.p.or(entry.p).unwrap_or(spec.period);
    Ok(ReservationConfig::new(c.m, c.e, period)?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnalysisJson {
    pub task: String,
    pub config: ReservationConfig,
    pub report: MissReport,
    pub constraints: ConstraintCheck,
}

pub fn analyze_task(
    spec: &TaskSpec,
    cfg: &ReservationConfig,
    bound: BoundKind,
) -> Result<(MissReport, ConstraintCheck), CliError> {
    let report = dagreserve_core::analyze(spec, cfg)?;
    let check = check_constraints_with(spec, &report, bound);
    Ok((report, check))
}

pub fn analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let file = TaskSetFile::load(&args.input)?;
    let (entry, spec) = file.task(&args.task)?;
    let cfg = config_for(entry, &spec, &args.config)?;
    let (report, constraints) = analyze_task(&spec, &cfg, args.bound)?;
    let mut diagnostics = Vec::new();
    if !report.stable {
        diagnostics.push(format!("unstable: P(R1 > D) = {}", report.p_miss_hot));
    }
    for v in constraints.verdicts.iter().filter(|v| !v.pass) {
        diagnostics.push(format!(
            "constraint k = {}: bound {} exceeds theta {}",
            v.k, v.bound, v.theta
        ));
    }
    write_json(
        out,
        &AnalysisJson {
            task: args.task.clone(),
            config: cfg,
            report,
            constraints,
        },
    )?;
    Ok(Outcome::from_diagnostics(diagnostics))
}

// ----------------------------------------------------------------- optimize

#[derive(Debug, Serialize, Deserialize)]
pub struct OptimizeJson {
    pub menus: Vec<ConfigMenu>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilization_hint: Option<UtilizationHint>,
}

pub fn optimize_file(
    file: &TaskSetFile,
    opts: &OptimizerOptions,
) -> Result<OptimizeJson, CliError> {
    file.ensure_valid()?;
    let mut menus = Vec::with_capacity(file.tasks.len());
    for entry in &file.tasks {
        let spec = entry.to_spec().expect("validated above");
        let d: JointDistribution = spec.distribution()?;
        menus.push(ConfigMenu::new(
            entry.name.clone(),
            optimize_distribution(&d, &spec, opts)?,
        ));
    }
    let utilization_hint = file.processors.map(|m| {
        let chosen: Vec<ReservationConfig> = menus
            .iter()
            .filter_map(|menu| menu.selected_option().map(|o| o.config()))
            .collect();
        utilization_hint(&chosen, m)
    });
    Ok(OptimizeJson {
        menus,
        utilization_hint,
    })
}

pub fn optimize(args: &OptimizeArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let file = TaskSetFile::load(&args.input)?;
    let bound = if args.tight_bound {
        BoundKind::Tight
    } else {
        BoundKind::Simple
    };
    let doc = optimize_file(
        &file,
        &OptimizerOptions {
            bound,
            eps_rel: args.eps,
        },
    )?;
    let diagnostics = doc
        .menus
        .iter()
        .filter(|m| m.options.is_empty())
        .map(|m| format!("task {}: infeasible", m.task))
        .collect();
    match &args.output {
        Some(path) => {
            let mut w = create(path)?;
            write_json(&mut w, &doc)?;
            w.flush()?;
        }
        None => write_json(out, &doc)?,
    }
    Ok(Outcome::from_diagnostics(diagnostics))
}

// ----------------------------------------------------------------- simulate

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let file = TaskSetFile::load(&args.input)?;
    let (entry, spec) = file.task(&args.task)?;
    let cfg = config_for(entry, &spec, &args.config)?;
    let sim_cfg = SimConfig {
        task: spec,
        cfg,
        num_jobs: args.jobs,
        seed: args.seed,
        supply: args.supply,
        record_lemma: args.check_lemma,
    };
    let trace = sim::run(&sim_cfg)?;
    let mut w = create(&args.output)?;
    trace.write_ndjson(&mut w)?;

    let mut diagnostics = Vec::new();
    let check = trace.check_bounds();
    let kinds = [
        ("response above its per-job bound", &check.dominance),
        (
            "response above the bound implied by the previous job",
            &check.corollary,
        ),
        ("backlog at release above rho * m", &check.backlog),
        ("tardiness above rho", &check.tardiness),
    ];
    for (what, jobs) in kinds {
        if let Some(first) = jobs.first() {
            diagnostics.push(format!(
                "{} job(s) with {what}, first: job {first}",
                jobs.len()
            ));
        }
    }
    if trace.aggregate.work_conservation_violations > 0 {
        diagnostics.push(format!(
            "{} instant(s) with an idle serving server and a ready subjob",
            trace.aggregate.work_conservation_violations
        ));
    }
    if let Some(Err(v)) = trace.check_work_service_lemma() {
        diagnostics.push(format!(
            "job {} at t = {}: work {} < service {} - {}",
            v.sample.job, v.sample.time, v.sample.work, v.sample.service, v.allowance
        ));
    }
    serde_json::to_writer(&mut *out, &trace.aggregate).map_err(std::io::Error::from)?;
    writeln!(out)?;
    Ok(Outcome::from_diagnostics(diagnostics))
}
