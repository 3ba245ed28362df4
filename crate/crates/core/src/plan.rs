//! Experiment plans: a named list of closed-loop runs read from one TOML
//! file, validated as a whole, then executed by a bounded pool of workers.
//!
//! ```toml
//! plot = true                      # also write a gnuplot script
//!
//! [defaults.controller]            # any run may override single keys
//! alpha = 0.1
//! kp = 2.0
//! tau = 0.5
//! ts = 0.01
//! u_min = 0.0
//! u_max = 250.0
//! u_warmup = "trim"
//!
//! [defaults.sim]
//! h = 0.001
//!
//! [[run]]
//! name = "const-p1-nominal"
//! params = "../params/default.toml"       # paths relative to this file
//! uncertainty = "../uncertainty/perturbed.toml"
//! profile = "../profiles/profile1.toml"
//! reference = { mode = "constant", lambda_const = 2.2 }
//! seed = 11
//! output = "const-p1-nominal.csv"         # relative to the output directory
//! baseline = "const-p1-nominal"           # restoration times side by side
//! [run.controller]
//! kp = 3.0
//! ```
//!
//! Outputs are written atomically: one trace CSV per run, `summary.csv`,
//! `restoration.csv`, `summary.txt` and optionally `plot.gp`.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::{self, ControllerBlock, SimBlock};
use crate::error::{Error, Result};
use crate::mfc::ControllerConfig;
use crate::params::{
    apply_uncertainties, derive_constants, DerivedConstants, PhysicalParams, UncertaintySet,
};
use crate::scenario::{CurrentProfile, ReferenceSpec};
use crate::sim::{run_closed_loop, Restoration, RunMetrics, SimConfig, Trace};

pub const SUMMARY_CSV: &str = "summary.csv";
pub const RESTORATION_CSV: &str = "restoration.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const PLOT_SCRIPT: &str = "plot.gp";

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct Defaults {
    controller: Option<toml::Table>,
    sim: Option<toml::Table>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunEntry {
    name: String,
    params: PathBuf,
    uncertainty: Option<PathBuf>,
    profile: PathBuf,
    reference: ReferenceSpec,
    #[serde(default)]
    seed: u64,
    output: Option<PathBuf>,
    baseline: Option<String>,
    controller: Option<toml::Table>,
    sim: Option<toml::Table>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    #[serde(default)]
    plot: bool,
    #[serde(default)]
    defaults: Defaults,
    #[serde(default)]
    run: Vec<RunEntry>,
}

/// One fully resolved and validated run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub name: String,
    pub params_path: PathBuf,
    pub uncertainty_path: Option<PathBuf>,
    pub profile_path: PathBuf,
    /// Nominal parameters, before uncertainties.
    pub params: PhysicalParams,
    pub uncertainty: UncertaintySet,
    /// Constants of the perturbed parameters.
    pub constants: DerivedConstants,
    pub profile: CurrentProfile,
    pub reference: ReferenceSpec,
    pub controller: ControllerConfig,
    pub sim: SimConfig,
    pub seed: u64,
    /// Trace file, relative to the output directory.
    pub output: PathBuf,
    pub baseline: Option<String>,
}

impl RunSpec {
    pub fn is_nominal(&self) -> bool {
        self.uncertainty.is_identity()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub source: PathBuf,
    pub runs: Vec<RunSpec>,
    pub plot: bool,
}

impl ExperimentPlan {
    pub fn run(&self, name: &str) -> Option<&RunSpec> {
        self.runs.iter().find(|r| r.name == name)
    }
}

pub fn load_plan(path: &Path) -> Result<ExperimentPlan> {
    plan_from_str(&config::read(path)?, path)
}

fn merged(defaults: Option<&toml::Table>, run: Option<&toml::Table>) -> toml::Value {
    let mut table = defaults.cloned().unwrap_or_default();
    if let Some(over) = run {
        table.extend(over.iter().map(|(k, v)| (k.clone(), v.clone())));
    }
    toml::Value::Table(table)
}

fn is_plain_relative(p: &Path) -> bool {
    p.components().all(|c| matches!(c, Component::Normal(_)))
}

/// Parses and validates a plan; relative file references resolve against
/// the directory of `path`. Every nested configuration is checked before
/// anything runs.
pub fn plan_from_str(text: &str, path: &Path) -> Result<ExperimentPlan> {
    let file: PlanFile = config::from_toml(text, path)?;
    if file.run.is_empty() {
        return Err(Error::Config(format!("{}: no runs", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let names: HashSet<&str> = file.run.iter().map(|r| r.name.as_str()).collect();

    let mut runs: Vec<RunSpec> = Vec::with_capacity(file.run.len());
    let mut seen = HashSet::new();
    let mut outputs = HashSet::new();
    for entry in &file.run {
        let invalid = |field: &str, message: String| Error::Validation {
            run: entry.name.clone(),
            field: field.to_owned(),
            message,
        };
        let nested = |field: &'static str| {
            move |e: Error| Error::Validation {
                run: entry.name.clone(),
                field: field.to_owned(),
                message: e.to_string(),
            }
        };
        if entry.name.is_empty() {
            return Err(invalid("name", "run names must not be empty".into()));
        }
        if !seen.insert(entry.name.as_str()) {
            return Err(invalid("name", "duplicate run name".into()));
        }

        let locate = |field: &str, p: &Path| -> Result<PathBuf> {
            let full = base.join(p);
            if full.is_file() {
                Ok(full)
            } else {
                Err(invalid(
                    field,
                    format!("file not found: {}", full.display()),
                ))
            }
        };
        let params_path = locate("params", &entry.params)?;
        let profile_path = locate("profile", &entry.profile)?;
        let uncertainty_path = match &entry.uncertainty {
            Some(p) => Some(locate("uncertainty", p)?),
            None => None,
        };

        let params = config::load_params(&params_path).map_err(nested("params"))?;
        let uncertainty = match &uncertainty_path {
            Some(p) => config::load_uncertainty(p).map_err(nested("uncertainty"))?,
            None => UncertaintySet::default(),
        };
        let constants = apply_uncertainties(&params, &uncertainty)
            .and_then(|p| derive_constants(&p))
            .map_err(nested("uncertainty"))?;
        let profile = config::load_profile(&profile_path).map_err(nested("profile"))?;
        entry.reference.validate().map_err(nested("reference"))?;

        let block: ControllerBlock =
            merged(file.defaults.controller.as_ref(), entry.controller.as_ref())
                .try_into()
                .map_err(|e: toml::de::Error| invalid("controller", e.message().to_owned()))?;
        let controller = block.resolve();
        controller.validate().map_err(nested("controller"))?;

        let sim_block: SimBlock = merged(file.defaults.sim.as_ref(), entry.sim.as_ref())
            .try_into()
            .map_err(|e: toml::de::Error| invalid("sim", e.message().to_owned()))?;
        let sim = sim_block.resolve(controller.ts, &profile, entry.seed);
        sim.validate(controller.tau).map_err(nested("sim"))?;
        if sim.duration > profile.duration() {
            return Err(invalid(
                "sim",
                format!(
                    "duration {} s exceeds the profile's {} s",
                    sim.duration,
                    profile.duration()
                ),
            ));
        }

        let output = entry
            .output
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.csv", entry.name)));
        if !is_plain_relative(&output) {
            return Err(invalid(
                "output",
                format!("{} must be a relative path without `..`", output.display()),
            ));
        }
        let reserved = [SUMMARY_CSV, RESTORATION_CSV, SUMMARY_TXT, PLOT_SCRIPT];
        if reserved.iter().any(|r| output == Path::new(r)) {
            return Err(invalid(
                "output",
                format!("{} is reserved", output.display()),
            ));
        }
        if !outputs.insert(output.clone()) {
            return Err(invalid(
                "output",
                format!("{} is used twice", output.display()),
            ));
        }
        if let Some(b) = &entry.baseline {
            if !names.contains(b.as_str()) || b == &entry.name {
                return Err(invalid("baseline", format!("no other run named `{b}`")));
            }
        }

        runs.push(RunSpec {
            name: entry.name.clone(),
            params_path,
            uncertainty_path,
            profile_path,
            params,
            uncertainty,
            constants,
            profile,
            reference: entry.reference,
            controller,
            sim,
            seed: entry.seed,
            output,
            baseline: entry.baseline.clone(),
        });
    }
    Ok(ExperimentPlan {
        source: path.to_path_buf(),
        runs,
        plot: file.plot,
    })
}

#[derive(Debug, Clone)]
pub enum RunStatus {
    Completed(RunMetrics),
    /// Stopped early; the partial trace was still written when there was one.
    Aborted {
        time: Option<f64>,
        cause: String,
    },
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub name: String,
    pub output: PathBuf,
    pub status: RunStatus,
}

impl RunOutcome {
    pub fn metrics(&self) -> Option<&RunMetrics> {
        match &self.status {
            RunStatus::Completed(m) => Some(m),
            RunStatus::Aborted { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanReport {
    /// In plan order, whatever the completion order.
    pub outcomes: Vec<RunOutcome>,
}

impl PlanReport {
    pub fn any_aborted(&self) -> bool {
        self.outcomes.iter().any(|o| o.metrics().is_none())
    }

    pub fn outcome(&self, name: &str) -> Option<&RunOutcome> {
        self.outcomes.iter().find(|o| o.name == name)
    }
}

/// Writes through a temporary file in the destination directory, renamed
/// into place once complete.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        write(&mut buf)?;
        buf.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn execute(spec: &RunSpec, out_dir: &Path) -> Result<RunOutcome> {
    let path = out_dir.join(&spec.output);
    let result = run_closed_loop(
        &spec.constants,
        &spec.profile,
        &spec.reference,
        &spec.controller,
        &spec.sim,
    );
    let (trace, status) = match result {
        Ok(out) => (Some(out.trace), RunStatus::Completed(out.metrics)),
        Err(Error::Aborted(a)) => {
            let status = RunStatus::Aborted {
                time: Some(a.time),
                cause: a.cause.clone(),
            };
            (Some(a.partial), status)
        }
        Err(e) => (
            None,
            RunStatus::Aborted {
                time: None,
                cause: e.to_string(),
            },
        ),
    };
    if let Some(trace) = &trace {
        write_atomic(&path, |w| trace.write_csv(w))?;
    }
    match &status {
        RunStatus::Completed(m) => log::info!(
            "{}: done, lambda_min {:.3}, longest restoration {}",
            spec.name,
            m.lambda_min,
            m.max_restoration()
                .map_or("unsettled".into(), |d| format!("{d:.2} s"))
        ),
        RunStatus::Aborted { cause, .. } => log::error!("{}: aborted: {cause}", spec.name),
    }
    Ok(RunOutcome {
        name: spec.name.clone(),
        output: spec.output.clone(),
        status,
    })
}

/// Runs every plan entry on at most `jobs` threads and writes the traces and
/// reports under `out_dir`. Aborted runs do not stop the others; they show
/// up in the report. Errors are I/O failures only.
pub fn run_plan(plan: &ExperimentPlan, out_dir: &Path, jobs: usize) -> Result<PlanReport> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let workers = jobs.clamp(1, plan.runs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunOutcome>>>> =
        plan.runs.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(spec) = plan.runs.get(i) else { break };
                let outcome = execute(spec, out_dir);
                *slots[i].lock().expect("result slot poisoned") = Some(outcome);
            });
        }
    });

    let outcomes = slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("result slot poisoned")
                .expect("run skipped")
        })
        .collect::<Result<Vec<_>>>()?;
    let report = PlanReport { outcomes };
    write_reports(plan, &report, out_dir)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run: String,
    pub reference: String,
    pub profile: String,
    pub uncertainty: String,
    pub status: String,
    pub trace: String,
    pub band: f64,
    pub steps: usize,
    pub settled_steps: usize,
    pub max_restoration: Option<f64>,
    pub max_abs_e: Option<f64>,
    pub iae: Option<f64>,
    pub lambda_min: Option<f64>,
    pub starvation: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestorationRow {
    pub run: String,
    pub step: usize,
    pub step_time: f64,
    pub xi_before: f64,
    pub xi_after: f64,
    /// Empty when unsettled.
    pub restoration: Option<f64>,
    pub baseline: Option<String>,
    pub baseline_restoration: Option<f64>,
    /// `restoration - baseline_restoration`.
    pub excess: Option<f64>,
}

fn file_label(p: &Path) -> String {
    p.file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

pub fn summary_rows(plan: &ExperimentPlan, report: &PlanReport) -> Vec<SummaryRow> {
    plan.runs
        .iter()
        .zip(&report.outcomes)
        .map(|(spec, outcome)| {
            let m = outcome.metrics();
            let status = match &outcome.status {
                RunStatus::Completed(_) => "completed".to_owned(),
                RunStatus::Aborted { time: Some(t), .. } => format!("aborted at {t} s"),
                RunStatus::Aborted { time: None, .. } => "failed".to_owned(),
            };
            SummaryRow {
                run: spec.name.clone(),
                reference: spec.reference.label(),
                profile: file_label(&spec.profile_path),
                uncertainty: spec
                    .uncertainty_path
                    .as_deref()
                    .map_or_else(|| "nominal".to_owned(), file_label),
                status,
                trace: spec.output.display().to_string(),
                band: spec.sim.band,
                steps: m.map_or(0, |m| m.restorations.len()),
                settled_steps: m.map_or(0, |m| {
                    m.restorations
                        .iter()
                        .filter(|r| r.duration.is_some())
                        .count()
                }),
                max_restoration: m.and_then(RunMetrics::max_restoration),
                max_abs_e: m.map(|m| m.max_abs_e),
                iae: m.map(|m| m.iae),
                lambda_min: m.map(|m| m.lambda_min),
                starvation: m.map(|m| m.starvation),
            }
        })
        .collect()
}

pub fn restoration_rows(plan: &ExperimentPlan, report: &PlanReport) -> Vec<RestorationRow> {
    let by_name: HashMap<&str, &RunOutcome> = report
        .outcomes
        .iter()
        .map(|o| (o.name.as_str(), o))
        .collect();
    let mut rows = Vec::new();
    for (spec, outcome) in plan.runs.iter().zip(&report.outcomes) {
        let Some(m) = outcome.metrics() else { continue };
        let base: Option<&[Restoration]> = spec
            .baseline
            .as_deref()
            .and_then(|b| by_name.get(b))
            .and_then(|o| o.metrics())
            .map(|bm| bm.restorations.as_slice());
        for (i, r) in m.restorations.iter().enumerate() {
            let b = base
                .and_then(|b| b.get(i))
                .filter(|b| b.step_time == r.step_time);
            let baseline_restoration = b.and_then(|b| b.duration);
            rows.push(RestorationRow {
                run: spec.name.clone(),
                step: i + 1,
                step_time: r.step_time,
                xi_before: r.xi_before,
                xi_after: r.xi_after,
                restoration: r.duration,
                baseline: spec.baseline.clone(),
                baseline_restoration,
                excess: r.duration.zip(baseline_restoration).map(|(a, b)| a - b),
            });
        }
    }
    rows
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        for r in rows {
            out.serialize(r)?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    })
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.digits$}"))
}

fn summary_text(summary: &[SummaryRow], restorations: &[RestorationRow]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<24} {:<14} {:<10} {:<10} {:>8} {:>9} {:>9} {:>10} {:>6}  status\n",
        "run",
        "reference",
        "profile",
        "case",
        "settled",
        "max_rest",
        "max|e|",
        "lambda_min",
        "starv"
    ));
    for r in summary {
        s.push_str(&format!(
            "{:<24} {:<14} {:<10} {:<10} {:>8} {:>9} {:>9} {:>10} {:>6}  {}\n",
            r.run,
            r.reference,
            r.profile,
            r.uncertainty,
            format!("{}/{}", r.settled_steps, r.steps),
            fmt_opt(r.max_restoration, 2),
            fmt_opt(r.max_abs_e, 4),
            fmt_opt(r.lambda_min, 4),
            r.starvation.map_or("-", |b| if b { "yes" } else { "no" }),
            r.status,
        ));
    }
    s.push_str("\nrestoration times, s (unsettled shown as -)\n");
    s.push_str(&format!(
        "{:<24} {:>4} {:>8} {:>14} {:>9} {:>9} {:>8}\n",
        "run", "step", "t", "current, A", "time", "baseline", "excess"
    ));
    for r in restorations {
        s.push_str(&format!(
            "{:<24} {:>4} {:>8.2} {:>14} {:>9} {:>9} {:>8}\n",
            r.run,
            r.step,
            r.step_time,
            format!("{} -> {}", r.xi_before, r.xi_after),
            fmt_opt(r.restoration, 2),
            fmt_opt(r.baseline_restoration, 2),
            fmt_opt(r.excess, 2),
        ));
    }
    s
}

fn plot_script(plan: &ExperimentPlan) -> String {
    let mut s = String::from(
        "# gnuplot script: excess ratio and motor current of every run\n\
         set datafile separator ','\n\
         set terminal pngcairo size 1000,700\n\
         set grid\n",
    );
    for run in &plan.runs {
        let csv = run.output.display();
        s.push_str(&format!(
            "\nset output '{name}.png'\n\
             set multiplot layout 2,1 title '{name}'\n\
             set ylabel 'excess ratio'\n\
             plot '{csv}' using 't':'lambda' with lines title 'lambda', \\\n\
             \x20    '' using 't':'lambda_ref' with lines dashtype 2 title 'reference'\n\
             set ylabel 'motor current, A'\n\
             set xlabel 't, s'\n\
             plot '{csv}' using 't':'u_applied' with lines title 'u'\n\
             unset multiplot\n\
             unset xlabel\n",
            name = run.name,
        ));
    }
    s
}

fn write_reports(plan: &ExperimentPlan, report: &PlanReport, out_dir: &Path) -> Result<()> {
    let summary = summary_rows(plan, report);
    let restorations = restoration_rows(plan, report);
    write_rows(&out_dir.join(SUMMARY_CSV), &summary)?;
    write_rows(&out_dir.join(RESTORATION_CSV), &restorations)?;
    let text = summary_text(&summary, &restorations);
    write_atomic(&out_dir.join(SUMMARY_TXT), |w| {
        w.write_all(text.as_bytes())
            .map_err(|e| Error::io(SUMMARY_TXT, e))
    })?;
    if plan.plot {
        let script = plot_script(plan);
        write_atomic(&out_dir.join(PLOT_SCRIPT), |w| {
            w.write_all(script.as_bytes())
                .map_err(|e| Error::io(PLOT_SCRIPT, e))
        })?;
    }
    Ok(())
}

/// Reads back a trace written by [`run_plan`].
pub fn read_trace(path: &Path) -> Result<Trace> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Trace::read_csv(std::io::BufReader::new(file))
}
