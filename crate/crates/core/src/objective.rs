//! The pointwise log-growth objective
//!
//! ```text
//! L(λ) = −λᵀb + ½λᵀcλ + Σ_i w_i (λᵀh(x_i) − ln(1 + λᵀx_i))
//! ```
//!
//! and its smoothed family `L_δ`, in which `ln((1+λᵀx)⁺)` is replaced by
//! `ln(1 − δ + δ(1+λᵀx)⁺)` and the truncated term is damped by `δ`. `L` is
//! `+∞` outside the admissible domain; `L_δ` is finite everywhere.

use thiserror::Error;

use crate::model::{admissible_domain, truncate, Characteristics, Matrix, Vector};
use crate::sampling::{aux_stream, unit_direction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("smoothing parameter {0} outside (0, 1)")]
    InvalidDelta(f64),
    #[error("λ has dimension {found}, model has {expected}")]
    Dimension { expected: usize, found: usize },
}

/// Extended-real value with optional derivatives. `value == +∞` implies both
/// derivatives are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: Option<Vector>,
    pub hessian: Option<Matrix>,
}

impl ObjectiveEval {
    fn infinite() -> Self {
        Self {
            value: f64::INFINITY,
            gradient: None,
            hessian: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

fn check_dim(chars: &Characteristics, lambda: &Vector) -> Result<(), ObjectiveError> {
    if lambda.len() != chars.dim() {
        return Err(ObjectiveError::Dimension {
            expected: chars.dim(),
            found: lambda.len(),
        });
    }
    Ok(())
}

fn quadratic_part(chars: &Characteristics, lambda: &Vector) -> f64 {
    -lambda.dot(&chars.b) + 0.5 * lambda.dot(&(&chars.c * lambda))
}

/// `L(λ)` only, without derivatives.
pub fn value(chars: &Characteristics, lambda: &Vector) -> f64 {
    let mut v = quadratic_part(chars, lambda);
    for (_, a) in chars.jumps.charged() {
        let u = lambda.dot(&a.x);
        if 1.0 + u <= 0.0 {
            return f64::INFINITY;
        }
        v += a.w * (lambda.dot(&truncate(&a.x)) - u.ln_1p());
    }
    v
}

/// `L(λ)` with gradient `−b + cλ + Σ w_i(h(x_i) − x_i/(1+λᵀx_i))` and Hessian
/// `c + Σ w_i x_i x_iᵀ/(1+λᵀx_i)²`.
pub fn evaluate(chars: &Characteristics, lambda: &Vector) -> Result<ObjectiveEval, ObjectiveError> {
    check_dim(chars, lambda)?;
    let cl = &chars.c * lambda;
    let mut value = -lambda.dot(&chars.b) + 0.5 * lambda.dot(&cl);
    let mut grad = cl - &chars.b;
    let mut hess = chars.c.clone();
    for (_, a) in chars.jumps.charged() {
        let u = lambda.dot(&a.x);
        let margin = 1.0 + u;
        if margin <= 0.0 {
            return Ok(ObjectiveEval::infinite());
        }
        let h = truncate(&a.x);
        value += a.w * (lambda.dot(&h) - u.ln_1p());
        grad += (h - &a.x / margin) * a.w;
        hess.ger(a.w / (margin * margin), &a.x, &a.x, 1.0);
    }
    Ok(ObjectiveEval {
        value,
        gradient: Some(grad),
        hessian: Some(hess),
    })
}

/// `f_δ(λ, x) = δλᵀh(x) − ln(1 − δ + δ(1+λᵀx)⁺)`.
pub fn smoothed_integrand(lambda: &Vector, x: &Vector, delta: f64) -> f64 {
    let u = lambda.dot(x);
    delta * lambda.dot(&truncate(x)) - (1.0 - delta + delta * (1.0 + u).max(0.0)).ln()
}

/// `L_δ(λ)`. Derivatives are reported wherever no atom sits exactly on the
/// kink `1 + λᵀx = 0`.
pub fn evaluate_smoothed(
    chars: &Characteristics,
    lambda: &Vector,
    delta: f64,
) -> Result<ObjectiveEval, ObjectiveError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ObjectiveError::InvalidDelta(delta));
    }
    check_dim(chars, lambda)?;
    let cl = &chars.c * lambda;
    let mut value = -lambda.dot(&chars.b) + 0.5 * lambda.dot(&cl);
    let mut grad = Some(cl - &chars.b);
    let mut hess = Some(chars.c.clone());
    for (_, a) in chars.jumps.charged() {
        let u = lambda.dot(&a.x);
        let h = truncate(&a.x);
        value += a.w * smoothed_integrand(lambda, &a.x, delta);
        if 1.0 + u == 0.0 {
            grad = None;
            hess = None;
            continue;
        }
        if let (Some(g), Some(hm)) = (grad.as_mut(), hess.as_mut()) {
            *g += &h * (a.w * delta);
            if 1.0 + u > 0.0 {
                let inner = 1.0 + delta * u;
                *g -= &a.x * (a.w * delta / inner);
                hm.ger(a.w * delta * delta / (inner * inner), &a.x, &a.x, 1.0);
            }
        }
    }
    Ok(ObjectiveEval {
        value,
        gradient: grad,
        hessian: hess,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityCheck {
    pub passed: bool,
    pub pairs: usize,
    /// Pairs where both endpoints are finite.
    pub finite_pairs: usize,
    /// Largest `L(mid) − ½L(λ₁) − ½L(λ₂)` over finite pairs.
    pub worst_gap: f64,
}

/// Midpoint convexity on `n_samples` random pairs drawn from a box that
/// straddles the domain boundary, with `+∞` handled as an extended real.
pub fn check_convexity_sample(
    chars: &Characteristics,
    seed: u64,
    n_samples: usize,
) -> ConvexityCheck {
    let d = chars.dim();
    let domain = admissible_domain(chars);
    // Reach a few times past the nearest constraint so some pairs are infeasible.
    let reach = domain
        .constraints
        .iter()
        .map(|h| 3.0 / h.normal.norm())
        .fold(0.0_f64, f64::max)
        .max(5.0);
    let mut rng = aux_stream(seed, 1);
    let mut worst = f64::NEG_INFINITY;
    let mut finite_pairs = 0;
    let mut passed = true;
    for _ in 0..n_samples {
        let a = unit_direction(&mut rng, d) * (reach * rand::Rng::random::<f64>(&mut rng));
        let b = unit_direction(&mut rng, d) * (reach * rand::Rng::random::<f64>(&mut rng));
        let mid = (&a + &b) * 0.5;
        let (la, lb, lm) = (value(chars, &a), value(chars, &b), value(chars, &mid));
        if !(la.is_finite() && lb.is_finite()) {
            // right side is +∞; nothing can violate it
            continue;
        }
        finite_pairs += 1;
        let gap = lm - 0.5 * la - 0.5 * lb;
        worst = worst.max(gap);
        let tol = 1e-10 * (1.0 + la.abs() + lb.abs());
        if !(gap <= tol) {
            passed = false;
        }
    }
    ConvexityCheck {
        passed,
        pairs: n_samples,
        finite_pairs,
        worst_gap: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpAtom, JumpMeasure};

    fn one_dim(b: f64, c: f64, atoms: &[(f64, f64)]) -> Characteristics {
        let jumps = JumpMeasure::new(
            atoms
                .iter()
                .map(|&(x, w)| JumpAtom::new(Vector::from_element(1, x), w))
                .collect(),
        );
        Characteristics::new(
            Vector::from_element(1, b),
            Matrix::from_element(1, 1, c),
            jumps,
        )
        .unwrap()
    }

    fn s(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    #[test]
    fn zero_model_is_flat() {
        let ch = one_dim(0.0, 0.0, &[]);
        let e = evaluate(&ch, &s(3.7)).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.gradient.unwrap()[0], 0.0);
    }

    #[test]
    fn merton_value_at_optimum() {
        let ch = one_dim(0.08, 0.04, &[]);
        let e = evaluate(&ch, &s(2.0)).unwrap();
        assert!((e.value + 0.08).abs() < 1e-15);
        assert!(e.gradient.unwrap()[0].abs() < 1e-15);
        // grid cross-check: the quadratic never dips below −0.08
        let min = (0..=4000)
            .map(|k| value(&ch, &s(-10.0 + 0.005 * k as f64)))
            .fold(f64::INFINITY, f64::min);
        assert!((min + 0.08).abs() < 1e-12);
    }

    #[test]
    fn boundary_is_infinite() {
        let ch = one_dim(0.0, 0.0, &[(-0.5, 1.0)]);
        let e = evaluate(&ch, &s(2.0)).unwrap();
        assert_eq!(e.value, f64::INFINITY);
        assert!(e.gradient.is_none() && e.hessian.is_none());
        assert_eq!(value(&ch, &s(5.0)), f64::INFINITY);
    }

    #[test]
    fn smoothed_is_zero_at_origin() {
        let ch = one_dim(0.3, 0.2, &[(-0.5, 1.0), (0.7, 2.0)]);
        for delta in [0.1, 0.5, 0.99] {
            assert_eq!(evaluate_smoothed(&ch, &s(0.0), delta).unwrap().value, 0.0);
        }
    }

    #[test]
    fn smoothed_hand_value_past_boundary() {
        let ch = one_dim(0.0, 0.0, &[(-0.5, 1.0)]);
        let v = evaluate_smoothed(&ch, &s(2.0), 0.5).unwrap();
        // 0.5·2·(−0.5) − ln(0.5)
        let expected = -0.5 + std::f64::consts::LN_2;
        assert!((v.value - expected).abs() < 1e-15);
        assert!((v.value - 0.193147).abs() < 1e-6);
        // exactly on the kink: no derivatives
        assert!(v.gradient.is_none());
    }

    #[test]
    fn smoothed_increases_toward_exact() {
        let ch = one_dim(0.1, 0.0, &[(0.5, 1.0), (-0.5, 1.0)]);
        let lam = s(1.2);
        let exact = value(&ch, &lam);
        let vals: Vec<f64> = [0.9, 0.99, 0.999]
            .iter()
            .map(|&d| evaluate_smoothed(&ch, &lam, d).unwrap().value)
            .collect();
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2] && vals[2] <= exact);
        assert!(exact - vals[2] < exact - vals[0]);
    }

    #[test]
    fn smoothed_rejects_bad_delta() {
        let ch = one_dim(0.0, 0.0, &[]);
        for d in [0.0, 1.0, -0.2, f64::NAN] {
            assert!(evaluate_smoothed(&ch, &s(0.0), d).is_err());
        }
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let ch = one_dim(0.0, 0.0, &[]);
        assert!(evaluate(&ch, &Vector::zeros(2)).is_err());
    }

    #[test]
    fn convexity_examples() {
        let diff = one_dim(0.08, 0.04, &[]);
        assert!(check_convexity_sample(&diff, 7, 1000).passed);
        let two = one_dim(0.1, 0.0, &[(0.5, 1.0), (-0.5, 1.0)]);
        let check = check_convexity_sample(&two, 7, 1000);
        assert!(check.passed);
        // the sampling box straddles the boundary
        assert!(check.finite_pairs > 0 && check.finite_pairs < 1000);
    }

    #[test]
    fn large_atoms_are_not_truncated_into_drift() {
        let ch = one_dim(0.0, 0.0, &[(2.0, 1.0)]);
        let e = evaluate(&ch, &s(0.5)).unwrap();
        assert!((e.value + 2.0_f64.ln()).abs() < 1e-15);
        assert!((e.gradient.unwrap()[0] + 1.0).abs() < 1e-15);
    }
}
