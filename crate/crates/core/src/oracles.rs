//! Closed-form oracles for the robust sparse-recovery models
//!
//! ```text
//! minimize  |x|_1 / g(x) + (lambda/2) dist^2(Ax - b, S_mu)   over  x != 0, lower <= x <= upper
//! ```
//!
//! where `g` is either the Euclidean norm or the top-K norm and `S_mu` is the set
//! of `mu`-sparse vectors. The squared distance splits as
//! `|Ax - b|^2 - |T_mu(Ax - b)|^2`, giving the smooth part `h1` and the convex
//! subtracted part `h2`.

use std::cmp::Ordering;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::problem::{FractionalProblem, SmoothParts};

/// Sum of absolute values.
pub fn l1_norm(x: &Array1<f64>) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// Euclidean norm together with its gradient `x / |x|`.
pub fn l2_norm_with_subgrad(x: &Array1<f64>) -> Result<(f64, Array1<f64>)> {
    let norm = x.dot(x).sqrt();
    if norm == 0.0 {
        return Err(Error::Domain(
            "Euclidean norm is not differentiable at zero".into(),
        ));
    }
    Ok((norm, x / norm))
}

/// Indices of the `count` entries of largest magnitude, ties going to the
/// lower index. Returned in ascending index order.
pub fn largest_magnitude_indices(z: &Array1<f64>, count: usize) -> Vec<usize> {
    let n = z.len();
    let count = count.min(n);
    if count == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    if count < n {
        // Total order: larger magnitude first, then lower index.
        let cmp = |&a: &usize, &b: &usize| -> Ordering {
            z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b))
        };
        idx.select_nth_unstable_by(count - 1, cmp);
        idx.truncate(count);
    }
    idx.sort_unstable();
    idx
}

/// Top-K norm (sum of the `k` largest magnitudes) and a subgradient.
///
/// The subgradient carries `sign(x_i)` on the selected indices and zero
/// elsewhere; a selected zero entry gets `+1`.
pub fn top_k_norm_with_subgrad(x: &Array1<f64>, k: usize) -> Result<(f64, Array1<f64>)> {
    if k == 0 || k > x.len() {
        return Err(Error::Argument(format!(
            "top-K norm needs 1 <= K <= {}, got K = {k}",
            x.len()
        )));
    }
    let mut y = Array1::zeros(x.len());
    let mut value = 0.0;
    for i in largest_magnitude_indices(x, k) {
        value += x[i].abs();
        y[i] = if x[i] < 0.0 { -1.0 } else { 1.0 };
    }
    Ok((value, y))
}

/// Top-K norm value alone.
pub fn top_k_norm(x: &Array1<f64>, k: usize) -> f64 {
    largest_magnitude_indices(x, k)
        .into_iter()
        .map(|i| x[i].abs())
        .sum()
}

/// Projection onto `count`-sparse vectors: keeps the largest-magnitude entries.
pub fn keep_largest(z: &Array1<f64>, count: usize) -> Array1<f64> {
    let mut out = Array1::zeros(z.len());
    for i in largest_magnitude_indices(z, count) {
        out[i] = z[i];
    }
    out
}

/// Squared Euclidean distance from `z` to the set of `count`-sparse vectors.
/// Sums the discarded entries, so the result is exactly zero for sparse `z`.
pub fn dist_sq_to_sparse(z: &Array1<f64>, count: usize) -> f64 {
    let mut kept = vec![false; z.len()];
    for i in largest_magnitude_indices(z, count) {
        kept[i] = true;
    }
    z.iter()
        .zip(kept)
        .filter(|(_, k)| !k)
        .map(|(v, _)| v * v)
        .sum()
}

/// `sign(t) * max(|t| - w, 0)`.
#[inline]
pub fn soft_threshold(t: f64, w: f64) -> f64 {
    if t > w {
        t - w
    } else if t < -w {
        t + w
    } else {
        0.0
    }
}

/// Minimizer of `w |p|_1 + 0.5 |p - v|^2` over the box `[lower, upper]`.
///
/// Both terms are separable, so each coordinate is soft-thresholded and then
/// clamped to its interval.
pub fn prox_weighted_l1_box(
    v: &Array1<f64>,
    w: f64,
    lower: &Array1<f64>,
    upper: &Array1<f64>,
) -> Result<Array1<f64>> {
    if v.len() != lower.len() || v.len() != upper.len() {
        return Err(Error::Argument(
            "box bounds do not match point length".into(),
        ));
    }
    if w.is_nan() || w < 0.0 {
        return Err(Error::Argument(format!(
            "prox weight must be nonnegative, got {w}"
        )));
    }
    if let Some(i) = (0..v.len()).find(|&i| lower[i] > upper[i]) {
        return Err(Error::Argument(format!(
            "lower bound exceeds upper bound at coordinate {i}"
        )));
    }
    Ok(prox_unchecked(v, w, lower, upper))
}

fn prox_unchecked(
    v: &Array1<f64>,
    w: f64,
    lower: &Array1<f64>,
    upper: &Array1<f64>,
) -> Array1<f64> {
    let mut out = Array1::zeros(v.len());
    for i in 0..v.len() {
        out[i] = soft_threshold(v[i], w).clamp(lower[i], upper[i]);
    }
    out
}

/// Which denominator the recovery model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// `|x|_1 / |x|_2`
    L1OverL2,
    /// `|x|_1 / |x|_(K)`
    L1OverTopK,
}

/// Data of one robust recovery problem.
#[derive(Debug, Clone)]
pub struct RecoveryInstance {
    /// Sensing matrix, `m x n`.
    pub a: Array2<f64>,
    pub b: Array1<f64>,
    pub lambda: f64,
    /// Number of measurements allowed to be outliers; 0 gives plain least squares.
    pub mu: usize,
    /// Top-K parameter, present for the top-K denominator.
    pub k: Option<usize>,
    pub lower: Array1<f64>,
    pub upper: Array1<f64>,
}

impl RecoveryInstance {
    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.a.dim();
        if n == 0 || m == 0 {
            return Err(Error::Argument("sensing matrix must be non-empty".into()));
        }
        if self.b.len() != m {
            return Err(Error::Argument(format!(
                "measurement has length {}, matrix has {m} rows",
                self.b.len()
            )));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Argument(
                "bounds do not match the number of columns".into(),
            ));
        }
        if self.lambda <= 0.0 || !self.lambda.is_finite() {
            return Err(Error::Argument(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.mu > m {
            return Err(Error::Argument(format!("mu = {} exceeds m = {m}", self.mu)));
        }
        if let Some(k) = self.k {
            if k == 0 || k > n {
                return Err(Error::Argument(format!("K = {k} outside 1..={n}")));
            }
        }
        if (0..n).any(|i| self.lower[i] > self.upper[i]) {
            return Err(Error::Argument("lower bound exceeds upper bound".into()));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn residual(&self, x: &Array1<f64>) -> Array1<f64> {
        self.a.dot(x) - &self.b
    }

    /// `h1 = (lambda/2)|r|^2`, `grad h1 = lambda A^T r`, `h2 = (lambda/2)|T_mu(r)|^2`,
    /// `lambda A^T T_mu(r)` as the subgradient of `h2`, with `r = Ax - b`.
    pub fn residual_terms(&self, x: &Array1<f64>) -> Result<SmoothParts> {
        if x.len() != self.cols() {
            return Err(Error::Argument(format!(
                "point has length {}, expected {}",
                x.len(),
                self.cols()
            )));
        }
        Ok(self.residual_terms_unchecked(x))
    }

    fn residual_terms_unchecked(&self, x: &Array1<f64>) -> SmoothParts {
        let r = self.residual(x);
        let kept = largest_magnitude_indices(&r, self.mu);
        let h1 = 0.5 * self.lambda * r.dot(&r);
        let grad_h1 = self.adjoint(&r) * self.lambda;
        let h2 = 0.5 * self.lambda * kept.iter().map(|&j| r[j] * r[j]).sum::<f64>();
        let subgrad_h2 = self.sparse_adjoint(&r, &kept);
        SmoothParts {
            h1,
            grad_h1,
            h2,
            subgrad_h2,
        }
    }

    /// `A^T r`, accumulated row by row.
    pub fn adjoint(&self, r: &Array1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.cols());
        for (row, &w) in self.a.rows().into_iter().zip(r.iter()) {
            out.scaled_add(w, &row);
        }
        out
    }

    /// `lambda * A^T s` where `s` agrees with `r` on `rows` and vanishes elsewhere.
    fn sparse_adjoint(&self, r: &Array1<f64>, rows: &[usize]) -> Array1<f64> {
        let mut out = Array1::zeros(self.cols());
        for &j in rows {
            out.scaled_add(self.lambda * r[j], &self.a.row(j));
        }
        out
    }

    /// Objective value written out directly, bypassing the oracle bundle.
    pub fn objective(&self, model: Model, x: &Array1<f64>) -> Option<f64> {
        let in_box = (0..x.len()).all(|i| self.lower[i] <= x[i] && x[i] <= self.upper[i]);
        if !in_box || x.iter().all(|&v| v == 0.0) {
            return None;
        }
        let den = match model {
            Model::L1OverL2 => x.dot(x).sqrt(),
            Model::L1OverTopK => top_k_norm(x, self.k?),
        };
        let r = self.residual(x);
        Some(l1_norm(x) / den + 0.5 * self.lambda * dist_sq_to_sparse(&r, self.mu))
    }
}

/// Oracle bundle for a [`RecoveryInstance`] under a chosen [`Model`].
#[derive(Debug, Clone)]
pub struct RecoveryProblem {
    instance: RecoveryInstance,
    model: Model,
}

/// Wires the recovery oracles into a [`FractionalProblem`].
pub fn build_problem(instance: RecoveryInstance, model: Model) -> Result<RecoveryProblem> {
    instance.validate()?;
    if model == Model::L1OverTopK && instance.k.is_none() {
        return Err(Error::Argument("the top-K denominator requires K".into()));
    }
    Ok(RecoveryProblem { instance, model })
}

impl RecoveryProblem {
    pub fn instance(&self) -> &RecoveryInstance {
        &self.instance
    }

    pub fn model(&self) -> Model {
        self.model
    }

    fn top_k(&self) -> usize {
        // Checked in build_problem.
        self.instance.k.unwrap_or(1)
    }
}

impl FractionalProblem for RecoveryProblem {
    fn dim(&self) -> usize {
        self.instance.cols()
    }

    fn numerator(&self, x: &Array1<f64>) -> f64 {
        l1_norm(x)
    }

    fn denominator(&self, x: &Array1<f64>) -> f64 {
        match self.model {
            Model::L1OverL2 => x.dot(x).sqrt(),
            Model::L1OverTopK => top_k_norm(x, self.top_k()),
        }
    }

    fn denominator_subgrad(&self, x: &Array1<f64>) -> Array1<f64> {
        match self.model {
            // Zero is a subgradient of the norm at the origin.
            Model::L1OverL2 => {
                l2_norm_with_subgrad(x).map_or_else(|_| Array1::zeros(x.len()), |(_, y)| y)
            }
            Model::L1OverTopK => top_k_norm_with_subgrad(x, self.top_k())
                .map_or_else(|_| Array1::zeros(x.len()), |(_, y)| y),
        }
    }

    fn smooth_value(&self, x: &Array1<f64>) -> f64 {
        let r = self.instance.residual(x);
        0.5 * self.instance.lambda * r.dot(&r)
    }

    fn smooth_grad(&self, x: &Array1<f64>) -> Array1<f64> {
        let r = self.instance.residual(x);
        self.instance.adjoint(&r) * self.instance.lambda
    }

    fn subtracted_value(&self, x: &Array1<f64>) -> f64 {
        let r = self.instance.residual(x);
        0.5 * self.instance.lambda * dist_complement(&r, self.instance.mu)
    }

    fn subtracted_subgrad(&self, x: &Array1<f64>) -> Array1<f64> {
        let r = self.instance.residual(x);
        let kept = largest_magnitude_indices(&r, self.instance.mu);
        self.instance.sparse_adjoint(&r, &kept)
    }

    fn prox_numerator(&self, v: &Array1<f64>, weight: f64) -> Array1<f64> {
        prox_unchecked(v, weight, &self.instance.lower, &self.instance.upper)
    }

    fn denominator_positive(&self, x: &Array1<f64>) -> bool {
        x.iter().any(|&v| v != 0.0)
    }

    fn in_constraint_set(&self, x: &Array1<f64>) -> bool {
        let inst = &self.instance;
        x.len() == inst.cols()
            && (0..x.len()).all(|i| inst.lower[i] <= x[i] && x[i] <= inst.upper[i])
    }

    fn smooth_parts(&self, x: &Array1<f64>) -> SmoothParts {
        self.instance.residual_terms_unchecked(x)
    }

    fn denominator_dual_violation(&self, y: &Array1<f64>) -> Option<f64> {
        let v = match self.model {
            Model::L1OverL2 => (y.dot(y).sqrt() - 1.0).max(0.0),
            Model::L1OverTopK => {
                let sup = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                (sup - 1.0).max(0.0).max(l1_norm(y) - self.top_k() as f64)
            }
        };
        Some(v)
    }
}

/// `|T_mu(r)|^2`.
fn dist_complement(r: &Array1<f64>, mu: usize) -> f64 {
    largest_magnitude_indices(r, mu)
        .into_iter()
        .map(|j| r[j] * r[j])
        .sum()
}
