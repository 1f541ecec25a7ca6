//! One-hot starting point for the recovery models.
//!
//! Let `T` zero out every measurement except those kept by `T_mu(b)`. The
//! start puts a single nonzero on the column most correlated with the
//! uncorrupted part `b - Tb`, scaled by the least-squares coefficient on the
//! uncorrupted rows and clamped into the box. When `lower < 0 < upper` this
//! point has an objective value strictly below `lim inf_{x -> 0} F(x)`, which
//! keeps the solver's level set closed.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::oracles::{dist_sq_to_sparse, largest_magnitude_indices, RecoveryProblem};
use crate::problem::eval_objective;

#[derive(Debug, Clone)]
pub struct InitialPoint {
    pub x0: Array1<f64>,
    /// The selected column.
    pub index: usize,
    pub theta: f64,
    /// `F(x0) < 1 + (lambda/2) dist^2(b, S_mu)`.
    pub admissible: bool,
    /// Right-hand side minus `F(x0)`; `-inf` when `x0` is infeasible.
    pub margin: f64,
}

pub fn initial_point(problem: &RecoveryProblem) -> Result<InitialPoint> {
    let inst = problem.instance();
    let (_, n) = inst.a.dim();

    let kept: Vec<usize> = largest_magnitude_indices(&inst.b, inst.mu)
        .into_iter()
        .filter(|&j| inst.b[j] != 0.0)
        .collect();
    let nonzeros = inst.b.iter().filter(|&&v| v != 0.0).count();
    if nonzeros <= inst.mu {
        return Err(Error::Construction(format!(
            "measurement has {nonzeros} nonzeros, not more than mu = {}",
            inst.mu
        )));
    }

    let mut clean = inst.b.clone();
    for &j in &kept {
        clean[j] = 0.0;
    }
    let scores = inst.adjoint(&clean);
    let mut index = 0;
    for i in 1..n {
        if scores[i].abs() > scores[index].abs() {
            index = i;
        }
    }

    let col = inst.a.column(index);
    let masked: f64 = kept.iter().map(|&j| col[j] * col[j]).sum();
    let denom = col.dot(&col) - masked;
    if denom == 0.0 {
        return Err(Error::Construction(format!(
            "column {index} vanishes on the uncorrupted rows"
        )));
    }
    let theta = scores[index] / denom;

    let mut x0 = Array1::zeros(n);
    x0[index] = theta.clamp(inst.lower[index], inst.upper[index]);

    let limit = 1.0 + 0.5 * inst.lambda * dist_sq_to_sparse(&inst.b, inst.mu);
    let (admissible, margin) = match eval_objective(problem, &x0)?.value.finite() {
        Some(f0) => (f0 < limit, limit - f0),
        None => (false, f64::NEG_INFINITY),
    };
    Ok(InitialPoint {
        x0,
        index,
        theta,
        admissible,
        margin,
    })
}
