//! Deflators `Z = E(β·Xᶜ + (f − 1)⋆(μ − ν))·exp(−V)` and their validation.

use rand::Rng;

use crate::linalg::{null_space, stack_rows};
use crate::model::{admissible_domain, truncate, Characteristics, MarketModel, Vector};
use crate::sampling::{aux_stream, feasible_probe, unit_direction};
use crate::solver::SolveReport;

use super::exponential::LinearExponent;
use super::ProcessError;

/// A solve report must have a first-order residual at most this large.
pub const CERTIFIED_RESIDUAL: f64 = 1e-8;
/// Slack in the drift inequality, relative to `‖θ‖` and the drift scale.
pub const DRIFT_TOL: f64 = 1e-9;

/// `(β, f, v)` on one segment; `f_values` is indexed like the jump measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub beta: Vector,
    pub f_values: Vec<f64>,
    pub v_drift: f64,
}

impl Triplet {
    /// Magnitude of the terms summed in the drift per unit `‖θ‖`.
    pub fn drift_scale(&self, chars: &Characteristics) -> f64 {
        let mut s = chars.b.norm() + chars.c.norm() * self.beta.norm();
        for (i, a) in chars.jumps.charged() {
            s += a.w * (truncate(&a.x).norm() + a.x.norm() * self.f_values[i].abs());
        }
        s.max(1.0)
    }

    pub fn exponent(&self, chars: &Characteristics) -> LinearExponent {
        LinearExponent::deflator(chars, &self.beta, &self.f_values, self.v_drift)
    }

    /// `v + ½βᵀcβ + Σ w_i(f_i − 1 − ln f_i)`.
    pub fn log_rate(&self, chars: &Characteristics) -> f64 {
        self.v_drift
            + 0.5 * self.beta.dot(&(&chars.c * &self.beta))
            + chars
                .jumps
                .charged()
                .map(|(i, a)| {
                    let f = self.f_values[i];
                    a.w * (f - 1.0 - f.ln())
                })
                .sum::<f64>()
    }

    /// `θᵀb + θᵀcβ + Σ w_i(f_i θᵀx_i − θᵀh(x_i))`.
    pub fn drift(&self, chars: &Characteristics, theta: &Vector) -> f64 {
        theta.dot(&chars.b)
            + theta.dot(&(&chars.c * &self.beta))
            + chars
                .jumps
                .charged()
                .map(|(i, a)| {
                    a.w * (self.f_values[i] * theta.dot(&a.x) - theta.dot(&truncate(&a.x)))
                })
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeflatorParam {
    pub segments: Vec<Triplet>,
    pub valid: bool,
    /// `Σ Δt·log_rate`, a lower bound on `E[−ln Z_T]` attained by the optimum.
    pub log_value: f64,
}

impl DeflatorParam {
    /// Deflator built from triplets; `valid` stays false until validated.
    pub fn new(model: &MarketModel, segments: Vec<Triplet>) -> Result<Self, ProcessError> {
        check_triplets(model, &segments)?;
        let log_value = model
            .segments()
            .iter()
            .zip(model.spans())
            .zip(&segments)
            .map(|((s, (a, b)), t)| (b - a) * t.log_rate(&s.chars))
            .sum();
        Ok(Self {
            segments,
            valid: false,
            log_value,
        })
    }

    pub fn exponents(&self, model: &MarketModel) -> Vec<LinearExponent> {
        model
            .segments()
            .iter()
            .zip(&self.segments)
            .map(|(s, t)| t.exponent(&s.chars))
            .collect()
    }
}

fn check_triplets(model: &MarketModel, segments: &[Triplet]) -> Result<(), ProcessError> {
    if segments.len() != model.segments().len() {
        return Err(ProcessError::SegmentCount {
            expected: model.segments().len(),
            found: segments.len(),
        });
    }
    for (k, (s, t)) in model.segments().iter().zip(segments).enumerate() {
        if t.beta.len() != model.dim() || t.f_values.len() != s.chars.jumps.len() {
            return Err(ProcessError::Dimension);
        }
        if let Some(i) = t.f_values.iter().position(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(ProcessError::NonPositiveF {
                segment: k,
                atom: i,
            });
        }
        if !(t.v_drift >= 0.0 && t.v_drift.is_finite()) {
            return Err(ProcessError::NegativeDrift(k));
        }
    }
    Ok(())
}

/// `β = −φ̃`, `f_i = 1/(1 + φ̃ᵀx_i)`, `v = dṼ/dt` from a certified report.
pub fn build_deflator(
    model: &MarketModel,
    report: &SolveReport,
) -> Result<DeflatorParam, ProcessError> {
    if let Some(s) = report
        .segments
        .iter()
        .find(|s| !s.certified(CERTIFIED_RESIDUAL))
    {
        return Err(ProcessError::Uncertified(s.kkt_residual));
    }
    if report.segments.len() != model.segments().len() {
        return Err(ProcessError::SegmentCount {
            expected: model.segments().len(),
            found: report.segments.len(),
        });
    }
    let triplets = model
        .segments()
        .iter()
        .zip(&report.segments)
        .map(|(s, sol)| Triplet {
            beta: -&sol.phi,
            f_values: s
                .chars
                .jumps
                .atoms()
                .iter()
                .map(|a| {
                    if a.is_charged() {
                        1.0 / (1.0 + sol.phi.dot(&a.x))
                    } else {
                        1.0
                    }
                })
                .collect(),
            v_drift: sol.v_drift,
        })
        .collect();
    let mut p = DeflatorParam::new(model, triplets)?;
    p.valid = true;
    Ok(p)
}

/// The candidate `Z ≡ 1`: `β = 0`, `f = 1`, `v = 0`.
pub fn naive_deflator(model: &MarketModel) -> DeflatorParam {
    let triplets = model
        .segments()
        .iter()
        .map(|s| Triplet {
            beta: Vector::zeros(model.dim()),
            f_values: vec![1.0; s.chars.jumps.len()],
            v_drift: 0.0,
        })
        .collect();
    DeflatorParam::new(model, triplets).expect("well-formed")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftCheck {
    pub segment: usize,
    pub theta: Vector,
    pub drift: f64,
    pub v_drift: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeflatorValidation {
    pub valid: bool,
    pub checks: Vec<DriftCheck>,
    /// Largest `drift − v` over all probes.
    pub max_excess: f64,
    pub log_value: f64,
}

/// Admissible probe fractions for one segment: `±r·e_i` and `n` random
/// points in the ball of radius `r`, each pulled inside the domain.
pub fn probe_thetas(chars: &Characteristics, radius: f64, n: usize, seed: u64) -> Vec<Vector> {
    let d = chars.dim();
    let domain = admissible_domain(chars);
    let origin = Vector::zeros(d);
    let mut out = Vec::with_capacity(2 * d + n);
    for i in 0..d {
        for sign in [1.0, -1.0] {
            let e = Vector::from_fn(d, |r, _| if r == i { sign } else { 0.0 });
            let reach = 0.9 * domain.max_step(&origin, &e);
            out.push(e * radius.min(reach));
        }
    }
    let mut rng = aux_stream(seed, 4);
    out.extend((0..n).map(|_| feasible_probe(&mut rng, &domain, &origin, radius)));
    out
}

/// Checks the drift inequality on every segment for `n_probes` admissible
/// fractions and the positivity of `f`.
pub fn validate_deflator(
    model: &MarketModel,
    param: &DeflatorParam,
    n_probes: usize,
    seed: u64,
) -> Result<DeflatorValidation, ProcessError> {
    check_triplets(model, &param.segments)?;
    let mut checks = Vec::new();
    let mut max_excess = f64::NEG_INFINITY;
    for (k, (s, t)) in model.segments().iter().zip(&param.segments).enumerate() {
        let radius = 2.0 * t.beta.norm().max(1.0);
        let scale = t.drift_scale(&s.chars);
        for theta in probe_thetas(&s.chars, radius, n_probes, seed.wrapping_add(k as u64)) {
            let drift = t.drift(&s.chars, &theta);
            let excess = drift - t.v_drift;
            max_excess = max_excess.max(excess);
            checks.push(DriftCheck {
                segment: k,
                passed: excess <= DRIFT_TOL * theta.norm().max(1.0) * scale,
                theta,
                drift,
                v_drift: t.v_drift,
            });
        }
    }
    assert!(param.log_value.is_finite());
    Ok(DeflatorValidation {
        valid: checks.iter().all(|c| c.passed),
        checks,
        max_excess,
        log_value: param.log_value,
    })
}

/// Perturbs a valid triplet along directions that keep
/// `b + cβ + Σ w_i(f_i x_i − h(x_i))` unchanged and raises `v` by `|eps|`.
pub fn perturb_triplet<R: Rng>(
    chars: &Characteristics,
    t: &Triplet,
    eps: f64,
    rng: &mut R,
) -> Triplet {
    let d = chars.dim();
    let charged: Vec<(usize, Vector)> = chars
        .jumps
        .charged()
        .map(|(i, a)| (i, &a.x * a.w))
        .collect();
    let m = charged.len();
    // rows of [c | w_1 x_1 … w_m x_m]
    let rows: Vec<Vector> = (0..d)
        .map(|r| {
            Vector::from_fn(d + m, |j, _| {
                if j < d {
                    chars.c[(r, j)]
                } else {
                    charged[j - d].1[r]
                }
            })
        })
        .collect();
    let refs: Vec<&Vector> = rows.iter().collect();
    let basis = null_space(&stack_rows(&refs, d + m), 1e-10);
    let mut out = t.clone();
    out.v_drift += eps.abs();
    if basis.is_empty() {
        return out;
    }
    let coeffs = unit_direction(rng, basis.len());
    let mut dir = Vector::zeros(d + m);
    for (b, c) in basis.iter().zip(coeffs.iter()) {
        dir += b * *c;
    }
    // keep every f positive
    let mut scale = eps.abs();
    for (j, (i, _)) in charged.iter().enumerate() {
        let df = dir[d + j];
        if df < 0.0 {
            scale = scale.min(0.5 * t.f_values[*i] / -df);
        }
    }
    out.beta += dir.rows(0, d) * scale;
    for (j, (i, _)) in charged.iter().enumerate() {
        out.f_values[*i] += scale * dir[d + j];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpAtom, JumpMeasure, Matrix};
    use crate::solver::{solve, SolveOptions};

    fn merton() -> MarketModel {
        let ch = Characteristics::diffusive(
            Vector::from_element(1, 0.08),
            Matrix::from_element(1, 1, 0.04),
        )
        .unwrap();
        MarketModel::constant(ch, 1.0)
    }

    fn two_atom() -> MarketModel {
        let ch = Characteristics::new(
            Vector::from_element(1, 0.1),
            Matrix::zeros(1, 1),
            JumpMeasure::new(vec![
                JumpAtom::new(Vector::from_element(1, 0.5), 1.0),
                JumpAtom::new(Vector::from_element(1, -0.5), 1.0),
            ]),
        )
        .unwrap();
        MarketModel::constant(ch, 1.0)
    }

    #[test]
    fn merton_optimal_triplet() {
        let m = merton();
        let r = solve(&m, &SolveOptions::default()).unwrap();
        let p = build_deflator(&m, &r).unwrap();
        assert!((p.segments[0].beta[0] + 2.0).abs() < 1e-12);
        assert!((p.log_value - 0.08).abs() < 1e-12);
        let v = validate_deflator(&m, &p, 50, 1).unwrap();
        assert!(v.valid);
    }

    #[test]
    fn naive_fails_with_drift() {
        let m = merton();
        let v = validate_deflator(&m, &naive_deflator(&m), 50, 1).unwrap();
        assert!(!v.valid);
        let c = v
            .checks
            .iter()
            .find(|c| (c.theta[0] - 2.0).abs() < 1e-15)
            .unwrap();
        assert!((c.drift - 0.16).abs() < 1e-15);
    }

    #[test]
    fn two_atom_f_values() {
        let m = two_atom();
        let r = solve(&m, &SolveOptions::default()).unwrap();
        let p = build_deflator(&m, &r).unwrap();
        let u = 0.5 * r.segments[0].phi[0];
        assert!((p.segments[0].f_values[0] - 1.0 / (1.0 + u)).abs() < 1e-15);
        assert!((p.segments[0].f_values[1] - 1.0 / (1.0 - u)).abs() < 1e-15);
        assert!(validate_deflator(&m, &p, 50, 2).unwrap().valid);
    }

    #[test]
    fn perturbations_stay_valid_and_cost_more() {
        let m = two_atom();
        let r = solve(&m, &SolveOptions::default()).unwrap();
        let p = build_deflator(&m, &r).unwrap();
        let mut rng = aux_stream(9, 0);
        for _ in 0..10 {
            let t = perturb_triplet(&m.segments()[0].chars, &p.segments[0], 0.05, &mut rng);
            let q = DeflatorParam::new(&m, vec![t]).unwrap();
            assert!(validate_deflator(&m, &q, 50, 3).unwrap().valid);
            assert!(q.log_value >= p.log_value - 1e-12);
        }
    }

    #[test]
    fn rejects_bad_f() {
        let m = two_atom();
        let t = Triplet {
            beta: Vector::zeros(1),
            f_values: vec![1.0, 0.0],
            v_drift: 0.0,
        };
        assert!(matches!(
            DeflatorParam::new(&m, vec![t]),
            Err(ProcessError::NonPositiveF {
                segment: 0,
                atom: 1
            })
        ));
    }
}
