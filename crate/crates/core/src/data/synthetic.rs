//! Random robust-recovery instances.
//!
//! Every random quantity comes from one ChaCha20 stream seeded with
//! `seed_from_u64(seed)`, normals through `rand_distr::StandardNormal`, in this
//! order:
//!
//! 1. entries of `A`, column by column (a column that normalizes to zero is
//!    redrawn in place);
//! 2. the support of the planted signal (`rand::seq::index::sample`);
//! 3. the signal values, in support-draw order;
//! 4. the outlier positions;
//! 5. one normal per outlier, whose sign fixes the outlier's sign;
//! 6. the dense measurement noise.

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::{Model, RecoveryInstance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Number of unknowns.
    pub n: usize,
    /// Number of measurements.
    pub m: usize,
    /// Nonzeros in the planted signal.
    pub k_true: usize,
    /// Number of corrupted measurements.
    pub mu_true: usize,
    pub lambda: f64,
    /// Top-K parameter handed to the model.
    pub k_model: usize,
    /// Outlier budget handed to the model.
    pub mu_model: usize,
    pub noise_scale: f64,
    pub impulse_magnitude: f64,
    pub seed: u64,
}

/// `ceil(1.3 * v)` in integer arithmetic.
fn inflate(v: usize) -> usize {
    (13 * v).div_ceil(10)
}

impl SyntheticSpec {
    /// Sizes `(n, m, K, mu) = (1280, 365, 40, 5) * scale`, model parameters
    /// inflated by 30%, and `lambda = 5` (Euclidean denominator) or `0.5` (top-K).
    pub fn from_scale(scale: usize, model: Model, seed: u64) -> Result<Self> {
        if scale == 0 {
            return Err(Error::Argument("scale factor must be positive".into()));
        }
        let lambda = match model {
            Model::L1OverL2 => 5.0,
            Model::L1OverTopK => 0.5,
        };
        Self::with_sizes(
            1280 * scale,
            365 * scale,
            40 * scale,
            5 * scale,
            lambda,
            seed,
        )
    }

    /// Arbitrary sizes with the same 30% inflation and default noise levels.
    pub fn with_sizes(
        n: usize,
        m: usize,
        k_true: usize,
        mu_true: usize,
        lambda: f64,
        seed: u64,
    ) -> Result<Self> {
        let spec = SyntheticSpec {
            n,
            m,
            k_true,
            mu_true,
            lambda,
            k_model: inflate(k_true),
            mu_model: inflate(mu_true),
            noise_scale: 0.01,
            impulse_magnitude: 2.0,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.k_true == 0 || self.k_model == 0 {
            return Err(Error::Argument("instance sizes must be positive".into()));
        }
        if self.k_true > self.n || self.k_model > self.n {
            return Err(Error::Argument(
                "sparsity exceeds the number of unknowns".into(),
            ));
        }
        if self.mu_true > self.m || self.mu_model > self.m {
            return Err(Error::Argument(
                "outlier count exceeds the number of measurements".into(),
            ));
        }
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(Error::Argument("lambda must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub instance: RecoveryInstance,
    pub x_true: Array1<f64>,
    /// The outlier vector `z`; the measurement is `A x_true - z + noise`.
    pub impulse: Array1<f64>,
    pub seed: u64,
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn generate_instance(spec: &SyntheticSpec) -> Result<GeneratedInstance> {
    spec.validate()?;
    let (m, n) = (spec.m, spec.n);
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);

    let mut a = Array2::<f64>::zeros((m, n));
    for j in 0..n {
        loop {
            let mut col = a.column_mut(j);
            col.iter_mut().for_each(|v| *v = normal(&mut rng));
            let norm = col.dot(&col).sqrt();
            if norm > 0.0 {
                col.mapv_inplace(|v| v / norm);
                break;
            }
        }
    }

    let support = sample(&mut rng, n, spec.k_true).into_vec();
    let mut x_true = Array1::<f64>::zeros(n);
    for &i in &support {
        x_true[i] = normal(&mut rng);
    }

    let positions = sample(&mut rng, m, spec.mu_true).into_vec();
    let mut impulse = Array1::<f64>::zeros(m);
    for &j in &positions {
        let draw = normal(&mut rng);
        impulse[j] = if draw < 0.0 {
            -spec.impulse_magnitude
        } else {
            spec.impulse_magnitude
        };
    }

    let noise = Array1::from_iter((0..m).map(|_| normal(&mut rng)));
    let b = a.dot(&x_true) - &impulse + &(noise * spec.noise_scale);

    let bound = x_true.iter().fold(5.0_f64, |acc, v| acc.max(v.abs()));
    let instance = RecoveryInstance {
        a,
        b,
        lambda: spec.lambda,
        mu: spec.mu_model,
        k: Some(spec.k_model),
        lower: Array1::from_elem(n, -bound),
        upper: Array1::from_elem(n, bound),
    };
    instance.validate()?;
    Ok(GeneratedInstance {
        instance,
        x_true,
        impulse,
        seed: spec.seed,
    })
}

/// `|x_hat - x_true| / |x_true|`.
pub fn recovery_error(x_hat: &Array1<f64>, x_true: &Array1<f64>) -> Result<f64> {
    if x_hat.len() != x_true.len() {
        return Err(Error::Argument("vectors differ in length".into()));
    }
    let denom = x_true.dot(x_true).sqrt();
    if denom == 0.0 {
        return Err(Error::Argument("reference signal is zero".into()));
    }
    let d = x_hat - x_true;
    Ok(d.dot(&d).sqrt() / denom)
}
