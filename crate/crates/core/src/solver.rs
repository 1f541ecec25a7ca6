//! Alternating maximization proximal descent.
//!
//! Each iteration fixes `c_k = 1/g(x_k)` (the exact maximizer of the min-max
//! objective in its scalar variable), picks subgradients `y_k` of `g` and `z_k`
//! of `h2`, and takes one proximal step on the linearized surrogate
//!
//! ```text
//! x_hat = prox_{alpha c_k f_C}( x_k - alpha (grad h1(x_k) - z_k - c_k^2 f(x_k) y_k) ).
//! ```
//!
//! The stepsize starts from a clamped Barzilai-Borwein guess and is shrunk by
//! `gamma` until `x_hat` has a positive denominator and
//! `Q(x_hat, y_k, z_k, 1/g(x_hat)) + sigma/2 |x_hat - x_k|^2 <= F(x_k)`.

use std::time::Instant;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{
    check_dim, check_finite, check_finite_vec, compose_objective, eval_objective, ExtendedReal,
    FractionalProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Sufficient-decrease weight.
    pub sigma: f64,
    /// Backtracking factor in (0, 1).
    pub gamma: f64,
    /// Stop once `|x_k - x_{k-1}| / |x_k|` drops below this.
    pub term_tol: f64,
    pub max_iters: usize,
    pub max_backtracks: usize,
    /// Only used when reporting epsilon-criticality.
    pub criticality_eps: f64,
    /// Keep the full per-iteration vectors, not just scalar summaries.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha_min: 1e-4,
            alpha_max: 1e4,
            sigma: 1e-5,
            gamma: 0.5,
            term_tol: 1e-6,
            max_iters: 100_000,
            max_backtracks: 200,
            criticality_eps: 1e-4,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha_min", self.alpha_min),
            ("alpha_max", self.alpha_max),
            ("sigma", self.sigma),
            ("term_tol", self.term_tol),
            ("criticality_eps", self.criticality_eps),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Argument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.alpha_min > self.alpha_max {
            return Err(Error::Argument("alpha_min exceeds alpha_max".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Argument(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if self.max_iters == 0 || self.max_backtracks == 0 {
            return Err(Error::Argument("iteration caps must be positive".into()));
        }
        if self.max_backtracks > i32::MAX as usize {
            return Err(Error::Argument("max_backtracks is too large".into()));
        }
        Ok(())
    }
}

/// Everything the algorithm knows about one iterate `x_k`.
///
/// The step fields (`alpha_trial`, `alpha_accepted`, `backtracks`, `step_norm`)
/// describe the move from `x_k` to `x_{k+1}` and are `None` on the last state.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub x: Array1<f64>,
    /// `1 / g(x)`.
    pub c: f64,
    /// Subgradient of the denominator.
    pub y: Array1<f64>,
    /// Subgradient of the subtracted convex part.
    pub z: Array1<f64>,
    pub grad_h1: Array1<f64>,
    pub f_val: f64,
    pub g_val: f64,
    pub h1_val: f64,
    pub h2_val: f64,
    pub objective: f64,
    pub alpha_trial: Option<f64>,
    pub alpha_accepted: Option<f64>,
    pub backtracks: Option<usize>,
    pub step_norm: Option<f64>,
}

impl IterateState {
    /// Evaluates the oracles at `x`. Fails with a domain error when `x` is
    /// outside `Omega ∩ C`.
    pub fn at<P: FractionalProblem + ?Sized>(problem: &P, x: Array1<f64>) -> Result<Self> {
        check_dim(problem, &x)?;
        if !problem.in_constraint_set(&x) || !problem.denominator_positive(&x) {
            return Err(Error::Domain(
                "iterate is outside the objective's domain".into(),
            ));
        }
        let f_val = check_finite(problem.numerator(&x), "numerator")?;
        let g_val = check_finite(problem.denominator(&x), "denominator")?;
        if g_val <= 0.0 {
            return Err(Error::Domain(format!(
                "denominator {g_val} is not positive"
            )));
        }
        let y = check_finite_vec(problem.denominator_subgrad(&x), "denominator_subgrad")?;
        let parts = problem.smooth_parts(&x);
        let h1_val = check_finite(parts.h1, "smooth_value")?;
        let h2_val = check_finite(parts.h2, "subtracted_value")?;
        let grad_h1 = check_finite_vec(parts.grad_h1, "smooth_grad")?;
        let z = check_finite_vec(parts.subgrad_h2, "subtracted_subgrad")?;
        let objective = check_finite(
            compose_objective(f_val / g_val, h1_val, h2_val),
            "objective",
        )?;
        Ok(IterateState {
            x,
            c: 1.0 / g_val,
            y,
            z,
            grad_h1,
            f_val,
            g_val,
            h1_val,
            h2_val,
            objective,
            alpha_trial: None,
            alpha_accepted: None,
            backtracks: None,
            step_norm: None,
        })
    }

    /// Search direction `grad h1(x) - z - c^2 f(x) y` of the linearized surrogate.
    pub fn direction(&self) -> Array1<f64> {
        let w = self.c * self.c * self.f_val;
        let mut d = &self.grad_h1 - &self.z;
        d.scaled_add(-w, &self.y);
        d
    }
}

/// Scalar summary of one iteration, always kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    /// `|x_{k+1} - x_k|`; also the criticality measure of `x_k` at `alpha_k`.
    pub step_norm: Option<f64>,
    pub alpha_trial: Option<f64>,
    pub alpha: Option<f64>,
    pub backtracks: Option<usize>,
    /// Seconds since the solve started when this iterate became available.
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    LineSearchFailure,
    InvalidStart,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub final_x: Array1<f64>,
    pub final_objective: ExtendedReal,
    /// Number of accepted steps.
    pub iterations: usize,
    pub status: SolveStatus,
    /// Last accepted stepsize, or the first trial stepsize when no step was taken.
    pub final_alpha: f64,
    /// One entry per iterate, `iterations + 1` in total.
    pub history: Vec<IterationRecord>,
    /// Full states, populated when `record_trace` is set.
    pub trace: Vec<IterateState>,
    pub wall_time: f64,
}

impl SolveResult {
    pub fn total_backtracks(&self) -> usize {
        self.history.iter().filter_map(|r| r.backtracks).sum()
    }
}

/// Clamped Barzilai-Borwein trial stepsize `|dx|^2 / |<dx, dgrad>|`.
///
/// Returns 1 when no previous iterate exists or the curvature term vanishes.
pub fn bb_trial_stepsize(
    diffs: Option<(&Array1<f64>, &Array1<f64>)>,
    alpha_min: f64,
    alpha_max: f64,
) -> f64 {
    let Some((dx, dgrad)) = diffs else {
        return 1.0;
    };
    let curvature = dx.dot(dgrad).abs();
    if curvature == 0.0 || !curvature.is_finite() {
        return 1.0;
    }
    (dx.dot(dx) / curvature).min(alpha_max).max(alpha_min)
}

/// Proximal step from `state.x` with stepsize `alpha`.
pub fn proximal_step<P: FractionalProblem + ?Sized>(
    problem: &P,
    state: &IterateState,
    alpha: f64,
) -> Array1<f64> {
    let mut v = state.x.clone();
    v.scaled_add(-alpha, &state.direction());
    problem.prox_numerator(&v, alpha * state.c)
}

/// Line-search merit value `Q(x_hat, y_k, z_k, 1/g(x_hat))` with the conjugates
/// of `g` and `h2` eliminated through the Fenchel-Young equality at `x_k`:
///
/// ```text
/// f(x_hat)/g(x_hat)^2 (2 g(x_hat) - g(x_k)) + h1(x_hat) - h2(x_k)
///     + <x_k - x_hat, z_k + f(x_hat)/g(x_hat)^2 y_k>
/// ```
pub fn merit_value<P: FractionalProblem + ?Sized>(
    problem: &P,
    x_hat: &Array1<f64>,
    state: &IterateState,
) -> Result<f64> {
    check_dim(problem, x_hat)?;
    if !problem.denominator_positive(x_hat) {
        return Err(Error::Domain(
            "trial point has a vanishing denominator".into(),
        ));
    }
    let f_hat = check_finite(problem.numerator(x_hat), "numerator")?;
    let g_hat = check_finite(problem.denominator(x_hat), "denominator")?;
    if g_hat <= 0.0 {
        return Err(Error::Domain(format!(
            "denominator {g_hat} is not positive"
        )));
    }
    let h1_hat = check_finite(problem.smooth_value(x_hat), "smooth_value")?;
    Ok(merit_from_parts(f_hat, g_hat, h1_hat, x_hat, state))
}

/// Shares its association order with `compose_objective`: at `x_hat == x_k`
/// the two return the same float.
fn merit_from_parts(
    f_hat: f64,
    g_hat: f64,
    h1_hat: f64,
    x_hat: &Array1<f64>,
    state: &IterateState,
) -> f64 {
    let ratio_term = (f_hat / g_hat) * (2.0 - state.g_val / g_hat);
    let weight = f_hat / (g_hat * g_hat);
    let dx = &state.x - x_hat;
    let coupling = dx.dot(&state.z) + weight * dx.dot(&state.y);
    ratio_term + ((h1_hat - state.h2_val) + coupling)
}

#[derive(Debug, Clone)]
pub struct LineSearchStep {
    pub x_next: Array1<f64>,
    pub alpha: f64,
    pub backtracks: usize,
}

/// Backtracks from `alpha_trial` until the merit condition holds.
///
/// `Ok(None)` means more than `max_backtracks` trials were rejected.
pub fn line_search<P: FractionalProblem + ?Sized>(
    problem: &P,
    state: &IterateState,
    alpha_trial: f64,
    config: &SolverConfig,
) -> Result<Option<LineSearchStep>> {
    let dir = state.direction();
    for backtracks in 0..=config.max_backtracks {
        let alpha = alpha_trial * config.gamma.powi(backtracks as i32);
        let mut v = state.x.clone();
        v.scaled_add(-alpha, &dir);
        let x_hat = problem.prox_numerator(&v, alpha * state.c);
        if problem.denominator_positive(&x_hat) && problem.in_constraint_set(&x_hat) {
            let merit = merit_value(problem, &x_hat, state)?;
            let dx = &x_hat - &state.x;
            if merit + 0.5 * config.sigma * dx.dot(&dx) <= state.objective {
                return Ok(Some(LineSearchStep {
                    x_next: x_hat,
                    alpha,
                    backtracks,
                }));
            }
        }
    }
    Ok(None)
}

/// Runs the method from `x0`.
///
/// An infeasible start yields status `InvalidStart`; a line-search breakdown
/// returns the last accepted iterate with status `LineSearchFailure`. Oracle
/// failures (non-finite values) are errors.
pub fn solve<P: FractionalProblem + ?Sized>(
    problem: &P,
    x0: &Array1<f64>,
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    check_dim(problem, x0)?;
    let start = Instant::now();

    let initial = eval_objective(problem, x0)?;
    if !initial.value.is_finite() {
        return Ok(SolveResult {
            final_x: x0.clone(),
            final_objective: ExtendedReal::PosInfinity,
            iterations: 0,
            status: SolveStatus::InvalidStart,
            final_alpha: 1.0,
            history: Vec::new(),
            trace: Vec::new(),
            wall_time: start.elapsed().as_secs_f64(),
        });
    }

    let mut state = IterateState::at(problem, x0.clone())?;
    let mut previous: Option<(Array1<f64>, Array1<f64>)> = None;
    let mut history = Vec::new();
    let mut trace = Vec::new();
    let mut final_alpha = 1.0;
    let mut iterations = 0;

    let status = loop {
        if iterations >= config.max_iters {
            break SolveStatus::MaxIters;
        }
        let diffs = previous
            .as_ref()
            .map(|(xp, gp)| (&state.x - xp, &state.grad_h1 - gp));
        let alpha_trial = bb_trial_stepsize(
            diffs.as_ref().map(|(dx, dg)| (dx, dg)),
            config.alpha_min,
            config.alpha_max,
        );
        if iterations == 0 {
            final_alpha = alpha_trial;
        }

        let Some(step) = line_search(problem, &state, alpha_trial, config)? else {
            break SolveStatus::LineSearchFailure;
        };

        let dx = &step.x_next - &state.x;
        let step_norm = dx.dot(&dx).sqrt();
        let next = IterateState::at(problem, step.x_next)?;
        debug_assert!(
            next.objective + 0.5 * config.sigma * step_norm * step_norm
                <= state.objective + 1e-10 * (1.0 + state.objective.abs()),
            "sufficient decrease violated"
        );

        state.alpha_trial = Some(alpha_trial);
        state.alpha_accepted = Some(step.alpha);
        state.backtracks = Some(step.backtracks);
        state.step_norm = Some(step_norm);
        history.push(record(iterations, &state, start));
        final_alpha = step.alpha;

        let done = std::mem::replace(&mut state, next);
        previous = Some((done.x.clone(), done.grad_h1.clone()));
        if config.record_trace {
            trace.push(done);
        }
        iterations += 1;

        let x_norm = state.x.dot(&state.x).sqrt();
        if x_norm > 1e-300 && step_norm / x_norm < config.term_tol {
            break SolveStatus::Converged;
        }
    };

    history.push(record(iterations, &state, start));
    let final_x = state.x.clone();
    let final_objective = ExtendedReal::Finite(state.objective);
    if config.record_trace {
        trace.push(state);
    }
    Ok(SolveResult {
        final_x,
        final_objective,
        iterations,
        status,
        final_alpha,
        history,
        trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn record(iter: usize, state: &IterateState, start: Instant) -> IterationRecord {
    IterationRecord {
        iter,
        objective: state.objective,
        step_norm: state.step_norm,
        alpha_trial: state.alpha_trial,
        alpha: state.alpha_accepted,
        backtracks: state.backtracks,
        elapsed_s: start.elapsed().as_secs_f64(),
    }
}
