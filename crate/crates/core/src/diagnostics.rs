//! Post-hoc verification of solver output.
//!
//! The criticality measure of `x` at stepsize `alpha` is the distance between `x`
//! and its own proximal step; it vanishes exactly at critical points. Trace
//! audits re-evaluate every recorded iterate and check the two descent
//! inequalities the line search is supposed to enforce.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{check_dim, eval_objective, FractionalProblem};
use crate::solver::{merit_value, proximal_step, IterateState, IterationRecord};

/// Relative slack for all descent checks.
pub const DESCENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalityReport {
    /// Smallest criticality measure over the stepsizes tried.
    pub eps_measure: f64,
    pub alpha_used: f64,
    /// Violations of either the objective descent or the merit sandwich.
    pub descent_violations: usize,
    pub fenchel_residual_g: f64,
    pub fenchel_residual_h2: f64,
    /// Filled in by [`CriticalityReport::with_gradient_check`].
    pub grad_check_relerr: Option<f64>,
}

impl CriticalityReport {
    pub fn with_gradient_check<P: FractionalProblem + ?Sized>(
        mut self,
        problem: &P,
        x: &Array1<f64>,
        step: f64,
    ) -> Result<Self> {
        self.grad_check_relerr = Some(fd_gradient_check(problem, x, step)?);
        Ok(self)
    }
}

/// `| x - prox_{alpha c f_C}(x - alpha (grad h1(x) - z - c^2 f(x) y)) |` with
/// `c = 1/g(x)` and the oracles' own subgradient selections.
pub fn criticality_measure<P: FractionalProblem + ?Sized>(
    problem: &P,
    x: &Array1<f64>,
    alpha: f64,
) -> Result<f64> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::Argument(format!(
            "stepsize must be positive, got {alpha}"
        )));
    }
    let state = IterateState::at(problem, x.clone())?;
    Ok(measure_at_state(problem, &state, alpha))
}

fn measure_at_state<P: FractionalProblem + ?Sized>(
    problem: &P,
    state: &IterateState,
    alpha: f64,
) -> f64 {
    let d = proximal_step(problem, state, alpha) - &state.x;
    d.dot(&d).sqrt()
}

/// Minimum of the criticality measure over `alphas`, with the minimizing stepsize.
pub fn best_criticality<P: FractionalProblem + ?Sized>(
    problem: &P,
    x: &Array1<f64>,
    alphas: &[f64],
) -> Result<(f64, f64)> {
    let state = IterateState::at(problem, x.clone())?;
    let mut best: Option<(f64, f64)> = None;
    for &alpha in alphas {
        if alpha.is_nan() || alpha <= 0.0 {
            return Err(Error::Argument(format!(
                "stepsize must be positive, got {alpha}"
            )));
        }
        let m = measure_at_state(problem, &state, alpha);
        if best.is_none_or(|(b, _)| m < b) {
            best = Some((m, alpha));
        }
    }
    best.ok_or_else(|| Error::Argument("no stepsize given".into()))
}

/// Checks a recorded trace.
///
/// For every consecutive pair the objective and merit value are recomputed
/// from the stored points, so a tampered iterate shows up as a violation
/// even if its cached scalars were left alone. The criticality measure is
/// taken at the last state, at the last accepted stepsize and at 1.
pub fn audit_trace<P: FractionalProblem + ?Sized>(
    problem: &P,
    trace: &[IterateState],
    sigma: f64,
) -> Result<CriticalityReport> {
    let Some(last) = trace.last() else {
        return Err(Error::Argument("cannot audit an empty trace".into()));
    };

    let objectives = trace
        .iter()
        .map(|s| eval_objective(problem, &s.x).map(|v| v.value.finite()))
        .collect::<Result<Vec<_>>>()?;

    let mut violations = 0;
    for k in 0..trace.len().saturating_sub(1) {
        let (cur, nxt) = (&trace[k], &trace[k + 1]);
        let (Some(f_cur), Some(f_next)) = (objectives[k], objectives[k + 1]) else {
            violations += 1;
            continue;
        };
        let dx = &nxt.x - &cur.x;
        let penalty = 0.5 * sigma * dx.dot(&dx);
        let tol = DESCENT_TOL * (1.0 + f_cur.abs());
        if f_next + penalty > f_cur + tol {
            violations += 1;
        }
        // Merit value relative to the stored selections at x_k.
        let merit = match merit_value(problem, &nxt.x, cur) {
            Ok(q) => q,
            Err(Error::Domain(_)) => {
                violations += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if f_next > merit + DESCENT_TOL * (1.0 + merit.abs()) || merit + penalty > f_cur + tol {
            violations += 1;
        }
    }

    let mut fenchel_g: f64 = 0.0;
    let mut fenchel_h2: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for s in trace {
        let g = problem.denominator(&s.x);
        let mut r = (s.x.dot(&s.y) - g).abs() / (1.0 + g.abs());
        if let Some(dual) = problem.denominator_dual_violation(&s.y) {
            r = r.max(dual);
        }
        fenchel_g = fenchel_g.max(r);
        fenchel_h2 = fenchel_h2.max(subgradient_gap(problem, s, &mut rng));
    }

    let mut alphas = vec![1.0];
    if let Some(a) = trace.iter().rev().find_map(|s| s.alpha_accepted) {
        alphas.insert(0, a);
    }
    let state = IterateState::at(problem, last.x.clone())?;
    let (eps_measure, alpha_used) = alphas
        .iter()
        .map(|&a| (measure_at_state(problem, &state, a), a))
        .fold((f64::INFINITY, 1.0), |best, cur| {
            if cur.0 < best.0 {
                cur
            } else {
                best
            }
        });

    Ok(CriticalityReport {
        eps_measure,
        alpha_used,
        descent_violations: violations,
        fenchel_residual_g: fenchel_g,
        fenchel_residual_h2: fenchel_h2,
        grad_check_relerr: None,
    })
}

/// Re-evaluates stored points into states that [`audit_trace`] accepts.
/// `alphas[k]` is the stepsize accepted at point `k`.
pub fn rebuild_trace<P: FractionalProblem + ?Sized>(
    problem: &P,
    points: &[Array1<f64>],
    alphas: &[Option<f64>],
) -> Result<Vec<IterateState>> {
    if points.len() != alphas.len() {
        return Err(Error::Argument(
            "points and stepsizes differ in length".into(),
        ));
    }
    points
        .iter()
        .zip(alphas)
        .map(|(x, &alpha)| {
            let mut s = IterateState::at(problem, x.clone())?;
            s.alpha_accepted = alpha;
            Ok(s)
        })
        .collect()
}

/// Largest relative violation of `h2(w) >= h2(x) + <z, w - x>` over a few
/// random probe points around `x`.
fn subgradient_gap<P: FractionalProblem + ?Sized>(
    problem: &P,
    state: &IterateState,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let h2 = problem.subtracted_value(&state.x);
    let radius = 1.0 + state.x.dot(&state.x).sqrt();
    let mut worst: f64 = 0.0;
    for scale in [1e-3, 1e-1, 1.0] {
        let dir: Array1<f64> =
            Array1::from_iter((0..state.x.len()).map(|_| StandardNormal.sample(rng)));
        let norm = dir.dot(&dir).sqrt().max(f64::MIN_POSITIVE);
        let w = &state.x + &(dir * (scale * radius / norm));
        let gap = h2 + state.z.dot(&(&w - &state.x)) - problem.subtracted_value(&w);
        worst = worst.max(gap.max(0.0) / (1.0 + h2.abs()));
    }
    worst
}

/// Largest coordinatewise error `|fd_i - grad_i| / (1 + |grad_i|)` between the
/// smooth-part gradient oracle and central differences of the value oracle.
pub fn fd_gradient_check<P: FractionalProblem + ?Sized>(
    problem: &P,
    x: &Array1<f64>,
    step: f64,
) -> Result<f64> {
    check_dim(problem, x)?;
    if step.is_nan() || step <= 0.0 {
        return Err(Error::Argument(format!(
            "difference step must be positive, got {step}"
        )));
    }
    let grad = problem.smooth_grad(x);
    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = problem.smooth_value(&probe);
        probe[i] = x[i] - step;
        let down = problem.smooth_value(&probe);
        probe[i] = x[i];
        let fd = (up - down) / (2.0 * step);
        worst = worst.max((fd - grad[i]).abs() / (1.0 + grad[i].abs()));
    }
    Ok(worst)
}

/// A posteriori iteration-complexity bookkeeping.
///
/// The limit value is not known in advance, so the final objective stands in
/// for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityCheck {
    /// First iterate whose criticality measure at its accepted stepsize is at most `eps`.
    pub first_eps_critical: Option<usize>,
    /// `2 (F(x0) - F_final) / (sigma eps^2)`.
    pub iteration_bound: f64,
    /// `first_eps_critical <= iteration_bound` (vacuously false when none was found).
    pub bound_holds: bool,
    /// `min_{k<K} |x_{k+1}-x_k| <= sqrt(2 (F(x0) - F(x_K)) / (sigma K))`.
    pub min_step_bound_holds: bool,
}

pub fn complexity_check(
    history: &[IterationRecord],
    sigma: f64,
    eps: f64,
) -> Option<ComplexityCheck> {
    let first = history.first()?;
    let last = history.last()?;
    let decrease = (first.objective - last.objective).max(0.0);
    let steps: Vec<f64> = history.iter().filter_map(|r| r.step_norm).collect();
    let first_eps_critical = steps.iter().position(|&s| s <= eps);
    let iteration_bound = 2.0 * decrease / (sigma * eps * eps);
    let bound_holds = first_eps_critical.is_some_and(|k| k as f64 <= iteration_bound);
    let min_step_bound_holds = if steps.is_empty() {
        true
    } else {
        let min_step = steps.iter().copied().fold(f64::INFINITY, f64::min);
        let slack = DESCENT_TOL * (1.0 + first.objective.abs());
        min_step <= (2.0 * (decrease + slack) / (sigma * steps.len() as f64)).sqrt()
    };
    Some(ComplexityCheck {
        first_eps_critical,
        iteration_bound,
        bound_holds,
        min_step_bound_holds,
    })
}
