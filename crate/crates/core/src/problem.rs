//! The abstract fractional program
//!
//! ```text
//! minimize  f(x)/g(x) + h1(x) - h2(x)   subject to  g(x) != 0,  x in C
//! ```
//!
//! with `f, g >= 0`, `g` convex, `h1` smooth, `h2` convex and `f + indicator(C)`
//! admitting a cheap proximal map. Concrete models implement [`FractionalProblem`];
//! the solver and the diagnostics only ever talk to that trait.

use ndarray::Array1;

use crate::error::{Error, Result};

/// Oracle bundle for one problem instance.
///
/// Every oracle is total over R^n. Feasibility is reported through
/// [`denominator_positive`](Self::denominator_positive) and
/// [`in_constraint_set`](Self::in_constraint_set), never through the oracles.
pub trait FractionalProblem: Sync {
    fn dim(&self) -> usize;

    /// Numerator `f`, nonnegative.
    fn numerator(&self, x: &Array1<f64>) -> f64;
    /// Denominator `g`, nonnegative and convex.
    fn denominator(&self, x: &Array1<f64>) -> f64;
    /// A deterministic element of the convex subdifferential of `g`.
    fn denominator_subgrad(&self, x: &Array1<f64>) -> Array1<f64>;

    /// Smooth additive term `h1`.
    fn smooth_value(&self, x: &Array1<f64>) -> f64;
    fn smooth_grad(&self, x: &Array1<f64>) -> Array1<f64>;

    /// Convex term `h2` entering the objective with a minus sign.
    fn subtracted_value(&self, x: &Array1<f64>) -> f64;
    fn subtracted_subgrad(&self, x: &Array1<f64>) -> Array1<f64>;

    /// `argmin_p  weight * f(p) + 0.5 * |p - v|^2  over p in C`.
    fn prox_numerator(&self, v: &Array1<f64>, weight: f64) -> Array1<f64>;

    /// Membership in the set where `g` does not vanish.
    fn denominator_positive(&self, x: &Array1<f64>) -> bool;
    fn in_constraint_set(&self, x: &Array1<f64>) -> bool;

    /// All four `h` quantities at once. Implementations sharing work between
    /// them (a common residual, say) should override this.
    fn smooth_parts(&self, x: &Array1<f64>) -> SmoothParts {
        SmoothParts {
            h1: self.smooth_value(x),
            grad_h1: self.smooth_grad(x),
            h2: self.subtracted_value(x),
            subgrad_h2: self.subtracted_subgrad(x),
        }
    }

    /// How far `y` lies outside the domain of the conjugate of `g`, when `g` is
    /// positively homogeneous and that domain is known. `None` means unknown.
    fn denominator_dual_violation(&self, _y: &Array1<f64>) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct SmoothParts {
    pub h1: f64,
    pub grad_h1: Array1<f64>,
    pub h2: f64,
    pub subgrad_h2: Array1<f64>,
}

/// A real number or `+inf`, with the infinity carried as a tag rather than a
/// float sentinel. No arithmetic is defined on this type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PosInfinity,
}

impl ExtendedReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::PosInfinity => None,
        }
    }

    /// Unwraps the finite value.
    ///
    /// Panics on `+inf`: callers must have checked feasibility first.
    pub fn expect_finite(&self) -> f64 {
        match *self {
            ExtendedReal::Finite(v) => v,
            ExtendedReal::PosInfinity => panic!("arithmetic on an infinite extended real"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    pub numerator: f64,
    pub denominator: f64,
    /// `h1(x) - h2(x)`.
    pub smooth_part: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub value: ExtendedReal,
    /// Populated exactly when `value` is finite.
    pub parts: Option<ObjectiveParts>,
}

impl ObjectiveValue {
    fn infinite() -> Self {
        ObjectiveValue {
            value: ExtendedReal::PosInfinity,
            parts: None,
        }
    }
}

pub(crate) fn check_finite(v: f64, oracle: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { oracle })
    }
}

pub(crate) fn check_finite_vec(v: Array1<f64>, oracle: &'static str) -> Result<Array1<f64>> {
    if v.iter().all(|e| e.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFinite { oracle })
    }
}

pub(crate) fn check_dim<P: FractionalProblem + ?Sized>(problem: &P, x: &Array1<f64>) -> Result<()> {
    if x.len() != problem.dim() {
        return Err(Error::Argument(format!(
            "point has length {}, problem dimension is {}",
            x.len(),
            problem.dim()
        )));
    }
    Ok(())
}

/// `f/g + (h1 - h2)`. The solver's line-search merit value is assembled with
/// the same association so that the two agree bit-for-bit at a zero step.
#[inline]
pub(crate) fn compose_objective(ratio: f64, h1: f64, h2: f64) -> f64 {
    ratio + (h1 - h2)
}

/// Extended objective `F(x) = f(x)/g(x) + h1(x) - h2(x)` on `Omega ∩ C`, `+inf` elsewhere.
pub fn eval_objective<P: FractionalProblem + ?Sized>(
    problem: &P,
    x: &Array1<f64>,
) -> Result<ObjectiveValue> {
    check_dim(problem, x)?;
    if !problem.in_constraint_set(x) || !problem.denominator_positive(x) {
        return Ok(ObjectiveValue::infinite());
    }
    let num = check_finite(problem.numerator(x), "numerator")?;
    let den = check_finite(problem.denominator(x), "denominator")?;
    if den <= 0.0 {
        return Ok(ObjectiveValue::infinite());
    }
    let h1 = check_finite(problem.smooth_value(x), "smooth_value")?;
    let h2 = check_finite(problem.subtracted_value(x), "subtracted_value")?;
    let value = check_finite(compose_objective(num / den, h1, h2), "objective")?;
    Ok(ObjectiveValue {
        value: ExtendedReal::Finite(value),
        parts: Some(ObjectiveParts {
            numerator: num,
            denominator: den,
            smooth_part: h1 - h2,
        }),
    })
}

/// The maximizer `1/g(x)` of the min-max objective in its scalar variable.
pub fn optimal_scalar<P: FractionalProblem + ?Sized>(problem: &P, x: &Array1<f64>) -> Result<f64> {
    check_dim(problem, x)?;
    if !problem.denominator_positive(x) {
        return Err(Error::Domain("denominator vanishes at x".into()));
    }
    let den = check_finite(problem.denominator(x), "denominator")?;
    if den <= 0.0 {
        return Err(Error::Domain(format!("denominator {den} is not positive")));
    }
    Ok(1.0 / den)
}

/// Min-max objective `2c f(x) - c^2 f(x) g(x) + h1(x) - h2(x)` on `Omega ∩ C`.
pub fn eval_minmax_objective<P: FractionalProblem + ?Sized>(
    problem: &P,
    x: &Array1<f64>,
    c: f64,
) -> Result<ExtendedReal> {
    check_dim(problem, x)?;
    if !problem.in_constraint_set(x) || !problem.denominator_positive(x) {
        return Ok(ExtendedReal::PosInfinity);
    }
    let num = check_finite(problem.numerator(x), "numerator")?;
    let den = check_finite(problem.denominator(x), "denominator")?;
    let h1 = check_finite(problem.smooth_value(x), "smooth_value")?;
    let h2 = check_finite(problem.subtracted_value(x), "subtracted_value")?;
    let v = 2.0 * c * num - c * c * num * den + (h1 - h2);
    Ok(ExtendedReal::Finite(check_finite(v, "minmax objective")?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{build_problem, Model, RecoveryInstance, RecoveryProblem};
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(model: Model) -> RecoveryProblem {
        let inst = RecoveryInstance {
            a: array![[1.0, 0.0]],
            b: array![1.0],
            lambda: 1.0,
            mu: 0,
            k: Some(1),
            lower: array![-2.0, -2.0],
            upper: array![2.0, 2.0],
        };
        build_problem(inst, model).unwrap()
    }

    fn random_problem(rng: &mut ChaCha8Rng, model: Model) -> RecoveryProblem {
        let (m, n) = (6, 5);
        let inst = RecoveryInstance {
            a: Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0)),
            b: Array1::from_iter((0..m).map(|_| rng.random_range(-2.0..2.0))),
            lambda: 0.8,
            mu: 2,
            k: Some(2),
            lower: Array1::from_elem(n, -3.0),
            upper: Array1::from_elem(n, 3.0),
        };
        build_problem(inst, model).unwrap()
    }

    /// `h1 = sum(x)`, `h2 = 0`, `f = g = 1`; `smooth_value` goes non-finite for `x[0] > 1`.
    struct Blowup;

    impl FractionalProblem for Blowup {
        fn dim(&self) -> usize {
            1
        }
        fn numerator(&self, _: &Array1<f64>) -> f64 {
            1.0
        }
        fn denominator(&self, _: &Array1<f64>) -> f64 {
            1.0
        }
        fn denominator_subgrad(&self, _: &Array1<f64>) -> Array1<f64> {
            array![0.0]
        }
        fn smooth_value(&self, x: &Array1<f64>) -> f64 {
            if x[0] > 1.0 {
                f64::NAN
            } else {
                x[0]
            }
        }
        fn smooth_grad(&self, _: &Array1<f64>) -> Array1<f64> {
            array![1.0]
        }
        fn subtracted_value(&self, _: &Array1<f64>) -> f64 {
            0.0
        }
        fn subtracted_subgrad(&self, _: &Array1<f64>) -> Array1<f64> {
            array![0.0]
        }
        fn prox_numerator(&self, v: &Array1<f64>, _: f64) -> Array1<f64> {
            v.clone()
        }
        fn denominator_positive(&self, _: &Array1<f64>) -> bool {
            true
        }
        fn in_constraint_set(&self, _: &Array1<f64>) -> bool {
            true
        }
    }

    #[test]
    fn objective_on_toy_problem() {
        let p = toy(Model::L1OverL2);
        let v = eval_objective(&p, &array![1.0, 0.0]).unwrap();
        assert_eq!(v.value, ExtendedReal::Finite(1.0));
        let parts = v.parts.unwrap();
        assert_eq!(parts.numerator, 1.0);
        assert_eq!(parts.denominator, 1.0);
        assert_eq!(parts.smooth_part, 0.0);
    }

    #[test]
    fn objective_is_infinite_off_domain() {
        let p = toy(Model::L1OverL2);
        for x in [array![0.0, 0.0], array![2.5, 0.0], array![1.0, -2.1]] {
            let v = eval_objective(&p, &x).unwrap();
            assert_eq!(v.value, ExtendedReal::PosInfinity);
            assert!(v.parts.is_none());
            assert_eq!(
                eval_minmax_objective(&p, &x, 1.0).unwrap(),
                ExtendedReal::PosInfinity
            );
        }
        assert!(matches!(
            eval_objective(&p, &array![1.0]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn optimal_scalar_examples() {
        let p = build_problem(
            RecoveryInstance {
                a: Array2::zeros((1, 2)),
                b: array![0.0],
                lambda: 1.0,
                mu: 0,
                k: None,
                lower: array![-10.0, -10.0],
                upper: array![10.0, 10.0],
            },
            Model::L1OverL2,
        )
        .unwrap();
        assert!((optimal_scalar(&p, &array![3.0, -4.0]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(optimal_scalar(&p, &array![2.0, 0.0]).unwrap(), 0.5);
        assert_eq!(optimal_scalar(&p, &array![0.0, -1.0]).unwrap(), 1.0);
        assert!(matches!(
            optimal_scalar(&p, &array![0.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn minmax_matches_objective_at_optimal_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for model in [Model::L1OverL2, Model::L1OverTopK] {
            let p = random_problem(&mut rng, model);
            for _ in 0..200 {
                let x = Array1::from_iter((0..5).map(|_| rng.random_range(-3.0..3.0)));
                let f = eval_objective(&p, &x).unwrap().value.expect_finite();
                let c = optimal_scalar(&p, &x).unwrap();
                let at_c = eval_minmax_objective(&p, &x, c).unwrap().expect_finite();
                assert!((at_c - f).abs() <= 1e-12 * (1.0 + f.abs()), "{at_c} vs {f}");
                let h = p.smooth_value(&x) - p.subtracted_value(&x);
                assert_eq!(
                    eval_minmax_objective(&p, &x, 0.0).unwrap().expect_finite(),
                    h
                );
                // The scalar sweep never beats 1/g, and F bounds every slice.
                for i in 0..=400 {
                    let ci = 4.0 * c * i as f64 / 400.0;
                    let v = eval_minmax_objective(&p, &x, ci).unwrap().expect_finite();
                    assert!(v <= at_c + 1e-12 * (1.0 + at_c.abs()));
                    assert!(v <= f + 1e-12 * (1.0 + f.abs()));
                }
            }
        }
    }

    #[test]
    fn subgradient_inequalities() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for model in [Model::L1OverL2, Model::L1OverTopK] {
            let p = random_problem(&mut rng, model);
            for _ in 0..1000 {
                let x = Array1::from_iter((0..5).map(|_| rng.random_range(-3.0..3.0)));
                let w = Array1::from_iter((0..5).map(|_| rng.random_range(-3.0..3.0)));
                let y = p.denominator_subgrad(&x);
                let gap = p.denominator(&w) - p.denominator(&x) - y.dot(&(&w - &x));
                assert!(gap >= -1e-12, "denominator gap {gap}");
                let z = p.subtracted_subgrad(&x);
                let gap = p.subtracted_value(&w) - p.subtracted_value(&x) - z.dot(&(&w - &x));
                assert!(
                    gap >= -1e-10 * (1.0 + p.subtracted_value(&w)),
                    "h2 gap {gap}"
                );
            }
        }
    }

    #[test]
    fn non_finite_oracle_is_reported() {
        assert!(eval_objective(&Blowup, &array![0.5]).is_ok());
        assert!(matches!(
            eval_objective(&Blowup, &array![2.0]),
            Err(Error::NonFinite {
                oracle: "smooth_value"
            })
        ));
        assert!(matches!(
            eval_minmax_objective(&Blowup, &array![2.0], 1.0),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    #[should_panic]
    fn infinite_value_has_no_arithmetic() {
        ExtendedReal::PosInfinity.expect_finite();
    }
}
