//! Seeded synthetic runs and batch summaries.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::container::write_json_pretty;
use crate::data::{generate_instance, initial_point, recovery_error, SyntheticSpec};
use crate::diagnostics::{audit_trace, best_criticality, CriticalityReport};
use crate::error::Result;
use crate::oracles::{build_problem, Model};
use crate::solver::{solve, IterationRecord, SolveStatus, SolverConfig};

/// Seed of run `index` in a batch started from `master`.
pub fn run_seed(master: u64, index: usize) -> u64 {
    master.wrapping_add(index as u64)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub status: Option<SolveStatus>,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub rec_err: Option<f64>,
    pub eps_measure: Option<f64>,
    pub admissible: bool,
    /// Initial-point construction time.
    pub startup_s: f64,
    pub solve_s: f64,
    pub history: Vec<IterationRecord>,
    pub audit: Option<CriticalityReport>,
    pub error: Option<String>,
}

impl RunOutcome {
    pub fn succeeded(&self) -> bool {
        self.status == Some(SolveStatus::Converged) && self.error.is_none()
    }

    fn failed(seed: u64, error: String) -> Self {
        RunOutcome {
            seed,
            status: None,
            objective: None,
            iterations: 0,
            rec_err: None,
            eps_measure: None,
            admissible: false,
            startup_s: 0.0,
            solve_s: 0.0,
            history: Vec::new(),
            audit: None,
            error: Some(error),
        }
    }
}

/// Generates one instance, starts from the one-hot initial point and solves.
/// With `audit`, the full trace is recorded and checked afterwards.
pub fn run_synthetic(
    spec: &SyntheticSpec,
    model: Model,
    config: &SolverConfig,
    audit: bool,
) -> RunOutcome {
    match try_run(spec, model, config, audit) {
        Ok(out) => out,
        Err(e) => RunOutcome::failed(spec.seed, e.to_string()),
    }
}

fn try_run(
    spec: &SyntheticSpec,
    model: Model,
    config: &SolverConfig,
    audit: bool,
) -> Result<RunOutcome> {
    let generated = generate_instance(spec)?;
    let problem = build_problem(generated.instance, model)?;

    let t0 = Instant::now();
    let start = initial_point(&problem)?;
    let startup_s = t0.elapsed().as_secs_f64();

    let cfg = SolverConfig {
        record_trace: audit || config.record_trace,
        ..*config
    };
    let result = solve(&problem, &start.x0, &cfg)?;

    let objective = result.final_objective.finite();
    let rec_err = recovery_error(&result.final_x, &generated.x_true).ok();
    let eps_measure = best_criticality(&problem, &result.final_x, &[result.final_alpha, 1.0])
        .ok()
        .map(|(m, _)| m);
    let report = if audit && !result.trace.is_empty() {
        Some(audit_trace(&problem, &result.trace, cfg.sigma)?)
    } else {
        None
    };
    Ok(RunOutcome {
        seed: spec.seed,
        status: Some(result.status),
        objective,
        iterations: result.iterations,
        rec_err,
        eps_measure,
        admissible: start.admissible,
        startup_s,
        solve_s: result.wall_time,
        history: result.history,
        audit: report,
        error: None,
    })
}

/// Runs `runs` seeds derived from `master_seed`, in parallel when asked.
/// Output is ordered by seed regardless of scheduling.
pub fn run_batch(
    base: &SyntheticSpec,
    model: Model,
    config: &SolverConfig,
    master_seed: u64,
    runs: usize,
    audit: bool,
    parallel: bool,
) -> Vec<RunOutcome> {
    let specs: Vec<SyntheticSpec> = (0..runs)
        .map(|i| SyntheticSpec {
            seed: run_seed(master_seed, i),
            ..*base
        })
        .collect();
    let mut out: Vec<RunOutcome> = if parallel {
        specs
            .par_iter()
            .map(|s| run_synthetic(s, model, config, audit))
            .collect()
    } else {
        specs
            .iter()
            .map(|s| run_synthetic(s, model, config, audit))
            .collect()
    };
    out.sort_by_key(|r| r.seed);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub obj: f64,
    pub iters: f64,
    pub rec_err: f64,
    pub eps_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Runs included in the statistics (converged, no error).
    pub count: usize,
    pub failures: usize,
    pub mean: Metrics,
    pub std: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub status: Option<SolveStatus>,
    pub obj: Option<f64>,
    pub iters: usize,
    pub rec_err: Option<f64>,
    pub eps_measure: Option<f64>,
    pub admissible: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub model: String,
    pub scale: Option<usize>,
    pub synthetic: SyntheticSpec,
    pub master_seed: u64,
    pub runs: usize,
    pub solver: SolverConfig,
}

/// Everything deterministic about a batch. Wall-clock numbers live in
/// [`BatchTiming`] so that repeated batches produce identical summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub spec: BatchSpec,
    pub seeds: Vec<u64>,
    pub per_run: Vec<RunSummary>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub seed: u64,
    pub startup_s: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTiming {
    pub per_run: Vec<RunTiming>,
    pub mean_time_s: f64,
    pub std_time_s: f64,
    pub mean_startup_s: f64,
    pub std_startup_s: f64,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(outcomes: &[RunOutcome]) -> Aggregate {
    let ok: Vec<&RunOutcome> = outcomes.iter().filter(|r| r.succeeded()).collect();
    let col = |f: &dyn Fn(&RunOutcome) -> Option<f64>| -> (f64, f64) {
        let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
        mean_std(&v)
    };
    let (obj_m, obj_s) = col(&|r| r.objective);
    let (it_m, it_s) = col(&|r| Some(r.iterations as f64));
    let (re_m, re_s) = col(&|r| r.rec_err);
    let (eps_m, eps_s) = col(&|r| r.eps_measure);
    Aggregate {
        count: ok.len(),
        failures: outcomes.len() - ok.len(),
        mean: Metrics {
            obj: obj_m,
            iters: it_m,
            rec_err: re_m,
            eps_measure: eps_m,
        },
        std: Metrics {
            obj: obj_s,
            iters: it_s,
            rec_err: re_s,
            eps_measure: eps_s,
        },
    }
}

pub fn summarize(spec: BatchSpec, outcomes: &[RunOutcome]) -> BatchSummary {
    BatchSummary {
        spec,
        seeds: outcomes.iter().map(|r| r.seed).collect(),
        per_run: outcomes
            .iter()
            .map(|r| RunSummary {
                seed: r.seed,
                status: r.status,
                obj: r.objective,
                iters: r.iterations,
                rec_err: r.rec_err,
                eps_measure: r.eps_measure,
                admissible: r.admissible,
                error: r.error.clone(),
            })
            .collect(),
        aggregate: aggregate(outcomes),
    }
}

pub fn timing(outcomes: &[RunOutcome]) -> BatchTiming {
    let per_run: Vec<RunTiming> = outcomes
        .iter()
        .map(|r| RunTiming {
            seed: r.seed,
            startup_s: r.startup_s,
            time_s: r.solve_s,
        })
        .collect();
    let (mean_time_s, std_time_s) = mean_std(&per_run.iter().map(|t| t.time_s).collect::<Vec<_>>());
    let (mean_startup_s, std_startup_s) =
        mean_std(&per_run.iter().map(|t| t.startup_s).collect::<Vec<_>>());
    BatchTiming {
        per_run,
        mean_time_s,
        std_time_s,
        mean_startup_s,
        std_startup_s,
    }
}

/// One table row in the `mean(std)` layout: Time, Iter, Obj, RecErr.
pub fn render_table(summary: &BatchSummary, timing: &BatchTiming) -> String {
    let a = &summary.aggregate;
    let header = format!(
        "{:<8} {:>22} {:>10} {:>22} {:>22}\n",
        "Model", "Time", "Iter", "Obj", "RecErr"
    );
    let row = format!(
        "{:<8} {:>22} {:>10} {:>22} {:>22}\n",
        summary.spec.model,
        format!(
            "{:.3}({:.3}) [{:.3}]",
            timing.mean_time_s, timing.std_time_s, timing.mean_startup_s
        ),
        format!("{:.0}({:.0})", a.mean.iters, a.std.iters),
        format!("{:.3}({:.2E})", a.mean.obj, a.std.obj),
        format!("{:.2E}({:.2E})", a.mean.rec_err, a.std.rec_err),
    );
    let footer = format!(
        "{} runs, {} failed; startup time in brackets\n",
        summary.per_run.len(),
        a.failures
    );
    header + &row + &footer
}

pub fn write_summary(path: &Path, summary: &BatchSummary) -> Result<()> {
    write_json_pretty(path, summary)
}

pub fn write_timing(path: &Path, timing: &BatchTiming) -> Result<()> {
    write_json_pretty(path, timing)
}
