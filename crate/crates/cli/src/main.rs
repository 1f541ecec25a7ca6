use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ampda::data::results::write_trace_csv;
use ampda::data::{
    initial_point, read_libsvm, recovery_error, InstanceFile, IterateLog, SyntheticSpec,
};
use ampda::diagnostics::{audit_trace, best_criticality, rebuild_trace, CriticalityReport};
use ampda::experiment::{
    render_table, run_batch, summarize, timing, write_summary, write_timing, BatchSpec,
};
use ampda::{build_problem, solve, Error, Model, RecoveryInstance, SolveStatus, SolverConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array1, Array2};
use serde::Serialize;

const DEFAULT_MASTER_SEED: u64 = 20250101;
const WORKERS_ENV: &str = "AMPDA_WORKERS";

/// Robust sparse recovery with fractional regularizers.
#[derive(Parser, Debug)]
#[command(name = "ampda", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic instance file.
    Generate(GenerateArgs),
    /// Solve one instance and write its trace and summary.
    Solve(SolveArgs),
    /// Audit a recorded iterate log against its instance.
    Check(CheckArgs),
    /// Solve a batch of seeded synthetic instances and tabulate the results.
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Variant {
    /// l1/l2 with outlier-trimmed least squares.
    L1l2,
    /// l1 over the largest-K norm with outlier-trimmed least squares.
    L1sk,
    /// l1/l2 with plain least squares.
    #[value(name = "l1l2-ls")]
    L1l2Ls,
}

impl Variant {
    fn model(self) -> Model {
        match self {
            Variant::L1l2 | Variant::L1l2Ls => Model::L1OverL2,
            Variant::L1sk => Model::L1OverTopK,
        }
    }

    fn default_lambda(self) -> f64 {
        match self {
            Variant::L1l2 => 5.0,
            Variant::L1sk => 0.5,
            Variant::L1l2Ls => 1.0,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Variant::L1l2 => "l1l2",
            Variant::L1sk => "l1sk",
            Variant::L1l2Ls => "l1l2-ls",
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha_min: Option<f64>,
    #[arg(long)]
    alpha_max: Option<f64>,
    /// Relative step tolerance for termination.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    max_backtracks: Option<usize>,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig, Failure> {
        let d = SolverConfig::default();
        let cfg = SolverConfig {
            sigma: self.sigma.unwrap_or(d.sigma),
            gamma: self.gamma.unwrap_or(d.gamma),
            alpha_min: self.alpha_min.unwrap_or(d.alpha_min),
            alpha_max: self.alpha_max.unwrap_or(d.alpha_max),
            term_tol: self.tol.unwrap_or(d.term_tol),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            max_backtracks: self.max_backtracks.unwrap_or(d.max_backtracks),
            ..d
        };
        cfg.validate().map_err(Failure::usage)?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "l1l2")]
    variant: Variant,
    /// Size multiplier R.
    #[arg(short = 'R', long, default_value_t = 1)]
    scale: usize,
    #[arg(long, default_value_t = DEFAULT_MASTER_SEED)]
    seed: u64,
    #[arg(long)]
    lambda: Option<f64>,
    /// Instance file to write.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct ProblemArgs {
    #[arg(long, value_enum, default_value = "l1l2")]
    variant: Variant,
    /// Overrides the value stored in the instance.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mu: Option<usize>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct InputArgs {
    /// Instance file written by `generate`.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Measurements in LIBSVM text: labels form `b`, features form the rows of `A`.
    #[arg(long)]
    libsvm: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Box half-width for LIBSVM input.
    #[arg(long, default_value_t = 5.0)]
    bound: f64,
    /// JSON array with a starting point, bypassing the admissibility test.
    #[arg(long)]
    x0: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Also write every iterate to iterates.json.
    #[arg(long)]
    trace: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    iterates: PathBuf,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Central-difference step for the gradient check.
    #[arg(long, default_value_t = 1e-6)]
    fd_step: f64,
    /// Report file to write.
    #[arg(short, long, default_value = "report.json")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "l1l2")]
    variant: Variant,
    #[arg(short = 'R', long, default_value_t = 1)]
    scale: usize,
    #[arg(long, default_value_t = 50)]
    runs: usize,
    /// Master seed; run `i` uses `seed + i`.
    #[arg(long, default_value_t = DEFAULT_MASTER_SEED)]
    seed: u64,
    #[arg(long)]
    lambda: Option<f64>,
    /// Record and audit every trace.
    #[arg(long)]
    audit: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn new(code: u8, msg: impl fmt::Display) -> Self {
        Failure {
            code,
            msg: msg.to_string(),
        }
    }

    fn usage(msg: impl fmt::Display) -> Self {
        Self::new(1, msg)
    }

    fn io(msg: impl fmt::Display) -> Self {
        Self::new(2, msg)
    }

    fn numerical(msg: impl fmt::Display) -> Self {
        Self::new(3, msg)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Argument(_) => 1,
            Error::Io { .. } | Error::Parse { .. } | Error::Serde(_) | Error::Csv(_) => 2,
            Error::NonFinite { .. } | Error::Domain(_) | Error::Construction(_) => 3,
        };
        Failure::new(code, e)
    }
}

/// Errors while reading an input file are I/O or parse failures, whatever the cause.
fn reading(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure::io(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_workers()?;
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Check(a) => cmd_check(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

fn configure_workers() -> Result<(), Failure> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::usage(format!(
            "{WORKERS_ENV} must be a positive integer, got `{value}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(Failure::usage)
}

fn synthetic_spec(
    variant: Variant,
    scale: usize,
    lambda: Option<f64>,
    seed: u64,
) -> Result<SyntheticSpec, Failure> {
    let mut spec =
        SyntheticSpec::from_scale(scale, variant.model(), seed).map_err(Failure::usage)?;
    spec.lambda = lambda.unwrap_or(variant.default_lambda());
    if variant == Variant::L1l2Ls {
        spec.mu_model = 0;
    }
    spec.validate().map_err(Failure::usage)?;
    Ok(spec)
}

fn cmd_generate(a: &GenerateArgs) -> Result<(), Failure> {
    let spec = synthetic_spec(a.variant, a.scale, a.lambda, a.seed)?;
    let generated = ampda::data::generate_instance(&spec)?;
    InstanceFile::from_generated(&generated).save(&a.output)?;
    println!(
        "wrote {} ({} x {}, seed {})",
        a.output.display(),
        spec.m,
        spec.n,
        spec.seed
    );
    Ok(())
}

/// Applies command-line overrides and the variant's rules to an instance.
fn configure_instance(
    mut inst: RecoveryInstance,
    p: &ProblemArgs,
) -> Result<RecoveryInstance, Failure> {
    if let Some(l) = p.lambda {
        inst.lambda = l;
    }
    if let Some(k) = p.k {
        inst.k = Some(k);
    }
    if let Some(mu) = p.mu {
        inst.mu = mu;
    }
    if p.variant == Variant::L1l2Ls {
        if p.mu.is_some_and(|mu| mu != 0) {
            return Err(Failure::usage("variant l1l2-ls fixes mu = 0"));
        }
        inst.mu = 0;
    }
    if p.variant == Variant::L1sk && inst.k.is_none() {
        return Err(Failure::usage("variant l1sk requires --k"));
    }
    inst.validate().map_err(Failure::usage)?;
    Ok(inst)
}

fn load_instance(path: &Path) -> Result<(RecoveryInstance, Option<Array1<f64>>), Failure> {
    let file = InstanceFile::load(path).map_err(reading(path))?;
    let inst = file.to_instance().map_err(reading(path))?;
    Ok((inst, file.x_true()))
}

fn libsvm_instance(path: &Path, p: &ProblemArgs, bound: f64) -> Result<RecoveryInstance, Failure> {
    if bound <= 0.0 || !bound.is_finite() {
        return Err(Failure::usage("--bound must be positive"));
    }
    let (a, b): (Array2<f64>, Array1<f64>) = read_libsvm(path, None).map_err(reading(path))?;
    let n = a.ncols();
    Ok(RecoveryInstance {
        a,
        b,
        lambda: p.variant.default_lambda(),
        mu: 0,
        k: None,
        lower: Array1::from_elem(n, -bound),
        upper: Array1::from_elem(n, bound),
    })
}

fn read_point(path: &Path) -> Result<Array1<f64>, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let v: Vec<f64> =
        serde_json::from_str(&text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    Ok(Array1::from(v))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::io)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct SolveSummary {
    variant: &'static str,
    status: SolveStatus,
    objective: Option<f64>,
    iterations: usize,
    backtracks: usize,
    final_alpha: f64,
    eps_measure: Option<f64>,
    alpha_used: Option<f64>,
    /// `None` when the starting point was supplied by the user.
    admissible: Option<bool>,
    rec_err: Option<f64>,
    time_s: f64,
    final_x: Vec<f64>,
}

fn cmd_solve(a: &SolveArgs) -> Result<(), Failure> {
    let config = SolverConfig {
        record_trace: a.trace,
        ..a.solver.config()?
    };
    let (raw, x_true) = match (&a.input.instance, &a.input.libsvm) {
        (Some(path), _) => load_instance(path)?,
        (None, Some(path)) => (libsvm_instance(path, &a.problem, a.bound)?, None),
        (None, None) => unreachable!("clap enforces one input"),
    };
    let inst = configure_instance(raw, &a.problem)?;
    let problem = build_problem(inst, a.problem.variant.model())?;

    let (x0, admissible) = match &a.x0 {
        Some(path) => (read_point(path)?, None),
        None => {
            let start = initial_point(&problem)?;
            if !start.admissible {
                return Err(Failure::numerical(format!(
                    "initial point is not admissible (margin {:.3e}); pass --x0 to force a start",
                    start.margin
                )));
            }
            (start.x0, Some(true))
        }
    };
    if x0.len() != problem.instance().cols() {
        return Err(Failure::usage(format!(
            "starting point has length {}, expected {}",
            x0.len(),
            problem.instance().cols()
        )));
    }

    let result = solve(&problem, &x0, &config)?;
    create_dir(&a.out_dir)?;

    let criticality = best_criticality(&problem, &result.final_x, &[result.final_alpha, 1.0]).ok();
    write_trace_csv(
        &a.out_dir.join("trace.csv"),
        &result.history,
        criticality.map(|(m, _)| m),
    )?;
    if a.trace {
        let points = result.trace.iter().map(|s| s.x.to_vec()).collect();
        let alphas = result.trace.iter().map(|s| s.alpha_accepted).collect();
        IterateLog::new(config.sigma, points, alphas).save(&a.out_dir.join("iterates.json"))?;
    }
    let summary = SolveSummary {
        variant: a.problem.variant.name(),
        status: result.status,
        objective: result.final_objective.finite(),
        iterations: result.iterations,
        backtracks: result.total_backtracks(),
        final_alpha: result.final_alpha,
        eps_measure: criticality.map(|(m, _)| m),
        alpha_used: criticality.map(|(_, a)| a),
        admissible,
        rec_err: x_true.and_then(|xt| recovery_error(&result.final_x, &xt).ok()),
        time_s: result.wall_time,
        final_x: result.final_x.to_vec(),
    };
    write_json(&a.out_dir.join("summary.json"), &summary)?;

    println!(
        "status {:?}, F = {}, {} iterations, criticality {}",
        result.status,
        summary
            .objective
            .map_or("inf".to_string(), |v| format!("{v:.10e}")),
        result.iterations,
        summary
            .eps_measure
            .map_or("n/a".to_string(), |v| format!("{v:.3e}")),
    );
    match result.status {
        SolveStatus::Converged => Ok(()),
        other => Err(Failure::numerical(format!(
            "solver stopped with status {other:?}"
        ))),
    }
}

fn cmd_check(a: &CheckArgs) -> Result<(), Failure> {
    let (raw, _) = load_instance(&a.instance)?;
    let inst = configure_instance(raw, &a.problem)?;
    let problem = build_problem(inst, a.problem.variant.model())?;
    let log = IterateLog::load(&a.iterates).map_err(reading(&a.iterates))?;
    if log.points.is_empty() {
        return Err(Failure::io(format!(
            "{}: no iterates",
            a.iterates.display()
        )));
    }
    let points: Vec<Array1<f64>> = log.points.iter().map(|p| Array1::from(p.clone())).collect();
    if points.iter().any(|p| p.len() != problem.instance().cols()) {
        return Err(Failure::io(format!(
            "{}: iterate length does not match the instance",
            a.iterates.display()
        )));
    }

    let report: CriticalityReport = match rebuild_trace(&problem, &points, &log.alphas) {
        Ok(trace) => audit_trace(&problem, &trace, log.sigma)?,
        Err(Error::Domain(msg)) => {
            return Err(Failure::numerical(format!(
                "trace leaves the feasible set: {msg}"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    let last = points.last().expect("checked non-empty");
    let report = report.with_gradient_check(&problem, last, a.fd_step)?;
    write_json(&a.output, &report)?;

    println!(
        "{} descent violations, criticality {:.3e} at alpha {:.3e}, gradient error {:.3e}",
        report.descent_violations,
        report.eps_measure,
        report.alpha_used,
        report.grad_check_relerr.unwrap_or(f64::NAN),
    );
    if report.descent_violations == 0 {
        Ok(())
    } else {
        Err(Failure::numerical(format!(
            "{} descent violations",
            report.descent_violations
        )))
    }
}

fn cmd_bench(a: &BenchArgs) -> Result<(), Failure> {
    if a.runs == 0 {
        return Err(Failure::usage("--runs must be positive"));
    }
    let config = a.solver.config()?;
    let base = synthetic_spec(a.variant, a.scale, a.lambda, a.seed)?;
    let outcomes = run_batch(
        &base,
        a.variant.model(),
        &config,
        a.seed,
        a.runs,
        a.audit,
        true,
    );

    let spec = BatchSpec {
        model: a.variant.name().to_string(),
        scale: Some(a.scale),
        synthetic: base,
        master_seed: a.seed,
        runs: a.runs,
        solver: config,
    };
    let summary = summarize(spec, &outcomes);
    let times = timing(&outcomes);
    create_dir(&a.out_dir)?;
    write_summary(&a.out_dir.join("summary.json"), &summary)?;
    write_timing(&a.out_dir.join("timing.json"), &times)?;
    let table = render_table(&summary, &times);
    fs::write(a.out_dir.join("table.txt"), &table).map_err(Failure::io)?;
    let curves: Vec<(u64, &[ampda::solver::IterationRecord])> = outcomes
        .iter()
        .map(|o| (o.seed, o.history.as_slice()))
        .collect();
    ampda::data::results::write_time_curves(&a.out_dir.join("curves.csv"), &curves)?;
    print!("{table}");

    for o in outcomes.iter().filter(|o| !o.succeeded()) {
        eprintln!(
            "seed {}: {}",
            o.seed,
            o.error
                .clone()
                .unwrap_or_else(|| format!("status {:?}", o.status))
        );
    }
    if a.audit {
        let violations: usize = outcomes
            .iter()
            .filter_map(|o| o.audit.map(|r| r.descent_violations))
            .sum();
        println!("{violations} descent violations across all audited runs");
    }
    let failures = summary.aggregate.failures;
    if failures * 10 > a.runs {
        return Err(Failure::numerical(format!(
            "{failures} of {} runs failed",
            a.runs
        )));
    }
    Ok(())
}
