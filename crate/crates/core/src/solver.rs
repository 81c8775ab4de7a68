//! Pointwise minimization of `L` per segment and the optimality diagnostics
//! built on the minimizer `φ̃`.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{self, GeometryError};
use crate::linalg::orthogonal_complement;
use crate::model::{
    admissible_domain, truncate, Characteristics, DomainDescription, MarketModel, Matrix, Vector,
};
use crate::objective;
use crate::sampling::{aux_stream, feasible_probe};

/// Continuation ladder tried when plain Newton stalls.
pub const DELTA_LADDER: [f64; 4] = [0.5, 0.9, 0.99, 0.999];
/// Below this constraint margin the optimum is certified directionally.
pub const BOUNDARY_MARGIN: f64 = 1e-7;
const ARMIJO: f64 = 1e-4;
const FRACTION_TO_BOUNDARY: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Gradient-norm tolerance, relative to the gradient's term magnitude.
    pub tol: f64,
    pub max_iter: usize,
    /// Random probes for the first-order certificate.
    pub n_probes: usize,
    /// Sampled directions for the attainment certificate.
    pub n_dirs: usize,
    pub seed: u64,
    /// Run the smoothing ladder even when Newton would converge alone.
    pub force_continuation: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            n_probes: 64,
            n_dirs: 256,
            seed: 42,
            force_continuation: false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("minimum not attained on segment {segment}: L decreases without bound along {direction:?} (recession value {recession_value:e})")]
    NotAttained {
        segment: usize,
        direction: Vec<f64>,
        recession_value: f64,
    },
    #[error("no convergence on segment {segment} after {iterations} iterations (gradient norm {grad_norm:e})")]
    MaxIterations {
        segment: usize,
        iterations: usize,
        grad_norm: f64,
        trace: Vec<f64>,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("φ has dimension {found}, model has {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("expected {expected} fractions, one per segment, got {found}")]
    SegmentCount { expected: usize, found: usize },
    #[error("fraction on segment {0} leaves the admissible domain")]
    Infeasible(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSolution {
    pub start: f64,
    pub end: f64,
    pub phi: Vector,
    /// `L(φ̃)`.
    pub value: f64,
    pub grad_norm: f64,
    pub kkt_residual: f64,
    /// `dṼ/dt`.
    pub v_drift: f64,
    /// Integrand of the integrability expectation per unit time.
    pub condi11_rate: f64,
    pub min_margin: f64,
    /// Directional certificate used instead of the gradient norm.
    pub boundary: bool,
    pub iterations: usize,
    /// Smoothing levels visited before the exact stage.
    pub delta_ladder: Vec<f64>,
    /// Objective value after each accepted step.
    pub trace: Vec<f64>,
}

impl SegmentSolution {
    /// First-order residual within `tol` per unit of `‖φ‖`, the probe radius.
    pub fn certified(&self, tol: f64) -> bool {
        self.kkt_residual <= tol * self.phi.norm().max(1.0)
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub horizon: f64,
    pub segments: Vec<SegmentSolution>,
    /// `Σ Δt·condi11_rate`.
    pub condi11_value: f64,
    /// `Σ Δt·L(φ̃)`; the optimal expected log-wealth is its negative.
    pub integrated_value: f64,
}

impl SolveReport {
    pub fn phis(&self) -> Vec<Vector> {
        self.segments.iter().map(|s| s.phi.clone()).collect()
    }

    /// Optimal expected terminal log-wealth.
    pub fn optimal_log_wealth(&self) -> f64 {
        -self.integrated_value
    }

    pub fn certified(&self, tol: f64) -> bool {
        self.segments.iter().all(|s| s.certified(tol))
    }
}

/// Pathwise conversion between fractions and holdings.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioPair {
    pub phi: Vec<Vector>,
}

impl PortfolioPair {
    /// `θ = φ·E_−(φ·X)` given the pre-jump wealth.
    pub fn theta(&self, segment: usize, wealth_prev: f64) -> Vector {
        &self.phi[segment] * wealth_prev
    }

    /// `φ = θ/(1 + (θ·X)_−)` given the pre-jump gains.
    pub fn phi_from_theta(theta: &Vector, gains_prev: f64) -> Vector {
        theta / (1.0 + gains_prev)
    }
}

pub fn fraction_to_holdings(phi: &[Vector]) -> PortfolioPair {
    PortfolioPair { phi: phi.to_vec() }
}

/// Magnitude of the terms in `∇L(λ)`, used to scale the stopping rule.
fn gradient_scale(chars: &Characteristics, lambda: &Vector) -> f64 {
    let mut s = chars.b.norm() + chars.c.norm() * lambda.norm();
    for (_, a) in chars.jumps.charged() {
        let m = 1.0 + lambda.dot(&a.x);
        s += a.w * (truncate(&a.x).norm() + a.x.norm() / m.abs());
    }
    s
}

struct NewtonOutcome {
    lambda: Vector,
    value: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

/// Damped Newton in the coordinates `λ = Qμ`, keeping each iterate's
/// constraint margin above a fixed fraction of the previous one.
fn newton<F>(
    eval: F,
    chars: &Characteristics,
    domain: &DomainDescription,
    q: &Matrix,
    start: Vector,
    tol: f64,
    max_iter: usize,
) -> NewtonOutcome
where
    F: Fn(&Vector) -> objective::ObjectiveEval,
{
    let mut lambda = start;
    let mut current = eval(&lambda);
    let mut trace = Vec::new();
    let mut grad_norm = f64::INFINITY;
    for it in 0..=max_iter {
        let (g, h) = match (&current.gradient, &current.hessian) {
            (Some(g), Some(h)) => (q.transpose() * g, q.transpose() * h * q),
            _ => break,
        };
        grad_norm = g.norm();
        if grad_norm <= tol * gradient_scale(chars, &lambda).max(1.0) {
            polish(&eval, domain, q, &mut lambda, &mut current, &mut grad_norm);
            return NewtonOutcome {
                lambda,
                value: current.value,
                grad_norm,
                iterations: it,
                converged: true,
                trace,
            };
        }
        if it == max_iter {
            break;
        }
        let step = newton_step(&h, &g);
        let dir = q * &step;
        let slope = current.gradient.as_ref().map_or(0.0, |g| g.dot(&dir));
        let floor = FRACTION_TO_BOUNDARY * domain.margin(&lambda);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-20 {
            let cand = &lambda + &dir * t;
            if domain.is_unconstrained() || domain.margin(&cand) >= floor {
                let e = eval(&cand);
                if e.value.is_finite() && e.value <= current.value + ARMIJO * t * slope {
                    accepted = Some((cand, e));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, e)) => {
                let stalled = e.value >= current.value
                    && (&cand - &lambda).norm() <= f64::EPSILON * lambda.norm().max(1.0);
                lambda = cand;
                current = e;
                trace.push(current.value);
                if stalled {
                    break;
                }
            }
            None => break,
        }
    }
    // value decreases below rounding near the optimum; gradient steps still help
    if let Some(g) = &current.gradient {
        grad_norm = (q.transpose() * g).norm();
    }
    polish(&eval, domain, q, &mut lambda, &mut current, &mut grad_norm);
    let converged = grad_norm <= tol * gradient_scale(chars, &lambda).max(1.0);
    NewtonOutcome {
        lambda,
        value: current.value,
        grad_norm,
        iterations: trace.len(),
        converged,
        trace,
    }
}

/// Full Newton steps past the stopping rule while the reduced gradient
/// keeps shrinking, to push it down to rounding level.
fn polish<F>(
    eval: &F,
    domain: &DomainDescription,
    q: &Matrix,
    lambda: &mut Vector,
    current: &mut objective::ObjectiveEval,
    grad_norm: &mut f64,
) where
    F: Fn(&Vector) -> objective::ObjectiveEval,
{
    for _ in 0..4 {
        if *grad_norm == 0.0 {
            return;
        }
        let (Some(g), Some(h)) = (&current.gradient, &current.hessian) else {
            return;
        };
        let g = q.transpose() * g;
        let step = q * newton_step(&(q.transpose() * h * q), &g);
        let cand = &*lambda + step;
        if !domain.is_unconstrained()
            && domain.margin(&cand) < FRACTION_TO_BOUNDARY * domain.margin(lambda)
        {
            return;
        }
        let e = eval(&cand);
        let Some(gn) = e.gradient.as_ref().map(|g| (q.transpose() * g).norm()) else {
            return;
        };
        if !(gn < *grad_norm) {
            return;
        }
        *lambda = cand;
        *current = e;
        *grad_norm = gn;
    }
}

/// Solves `H p = −g` by Cholesky, regularizing when `H` is not positive
/// definite.
fn newton_step(h: &Matrix, g: &Vector) -> Vector {
    let n = h.nrows();
    let mut tau = 0.0;
    let base = h.diagonal().amax().max(1e-300);
    for _ in 0..60 {
        let m = h + Matrix::identity(n, n) * tau;
        if let Some(ch) = m.cholesky() {
            return -ch.solve(g);
        }
        tau = if tau == 0.0 { base * 1e-12 } else { tau * 10.0 };
    }
    -g
}

fn reduced_basis(chars: &Characteristics) -> Matrix {
    orthogonal_complement(&geometry::constancy_basis(chars), chars.dim())
}

/// Outcome of minimizing the smoothed objective over the admissible domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedMinimum {
    pub lambda: Vector,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `L_δ` over the admissible domain starting from `start`.
pub fn minimize_smoothed(
    chars: &Characteristics,
    delta: f64,
    start: &Vector,
    opts: &SolveOptions,
) -> Result<SmoothedMinimum, objective::ObjectiveError> {
    objective::evaluate_smoothed(chars, start, delta)?;
    let domain = admissible_domain(chars);
    let q = reduced_basis(chars);
    let eval = |l: &Vector| objective::evaluate_smoothed(chars, l, delta).expect("validated input");
    let out = newton(
        eval,
        chars,
        &domain,
        &q,
        start.clone(),
        opts.tol,
        opts.max_iter,
    );
    Ok(SmoothedMinimum {
        lambda: out.lambda,
        value: out.value,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
        converged: out.converged,
    })
}

/// Minimizes `L` on one segment. `segment` only labels errors.
pub fn solve_segment(
    chars: &Characteristics,
    segment: usize,
    opts: &SolveOptions,
) -> Result<SegmentSolution, SolveError> {
    let cert = geometry::attainment_certificate(chars, opts.n_dirs, opts.seed)?;
    if let Some(w) = cert.witness {
        return Err(SolveError::NotAttained {
            segment,
            direction: w.direction.iter().copied().collect(),
            recession_value: w.recession_value,
        });
    }
    let d = chars.dim();
    let domain = admissible_domain(chars);
    let q = reduced_basis(chars);
    let exact = |l: &Vector| objective::evaluate(chars, l).expect("dimension checked");

    let mut ladder = Vec::new();
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut out = if opts.force_continuation {
        None
    } else {
        Some(newton(
            exact,
            chars,
            &domain,
            &q,
            Vector::zeros(d),
            opts.tol,
            opts.max_iter,
        ))
    };
    if !out.as_ref().is_some_and(|o| o.converged) {
        let mut lambda = Vector::zeros(d);
        if let Some(o) = out.take() {
            iterations += o.iterations;
            trace.extend(o.trace);
        }
        for &delta in &DELTA_LADDER {
            let eval = |l: &Vector| objective::evaluate_smoothed(chars, l, delta).expect("valid δ");
            let o = newton(eval, chars, &domain, &q, lambda, opts.tol, opts.max_iter);
            ladder.push(delta);
            iterations += o.iterations;
            lambda = o.lambda;
        }
        out = Some(newton(
            exact,
            chars,
            &domain,
            &q,
            lambda,
            opts.tol,
            opts.max_iter,
        ));
    }
    let out = out.expect("exact stage ran");
    iterations += out.iterations;
    trace.extend(out.trace);

    let phi = out.lambda;
    let min_margin = domain.margin(&phi);
    let boundary = min_margin < BOUNDARY_MARGIN;
    let kkt_residual = verify_first_order(chars, &phi, opts.n_probes, opts.seed);
    let scale = gradient_scale(chars, &phi).max(1.0);
    let certified = out.converged || (boundary && kkt_residual <= opts.tol * scale);
    if !certified {
        return Err(SolveError::MaxIterations {
            segment,
            iterations,
            grad_norm: out.grad_norm,
            trace,
        });
    }
    Ok(SegmentSolution {
        start: 0.0,
        end: 0.0,
        value: out.value,
        grad_norm: out.grad_norm,
        kkt_residual,
        v_drift: v_drift(chars, &phi),
        condi11_rate: condi11_rate(chars, &phi),
        min_margin,
        boundary,
        iterations,
        delta_ladder: ladder,
        trace,
        phi,
    })
}

/// Solves every segment independently; reports come back in segment order.
pub fn solve(model: &MarketModel, opts: &SolveOptions) -> Result<SolveReport, SolveError> {
    let spans = model.spans();
    let solved: Vec<Result<SegmentSolution, SolveError>> = model
        .segments()
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            solve_segment(&s.chars, k, opts).map(|mut sol| {
                (sol.start, sol.end) = spans[k];
                sol
            })
        })
        .collect();
    let segments = solved.into_iter().collect::<Result<Vec<_>, _>>()?;
    let condi11_value = segments.iter().map(|s| s.duration() * s.condi11_rate).sum();
    let integrated_value = segments.iter().map(|s| s.duration() * s.value).sum();
    Ok(SolveReport {
        horizon: model.horizon(),
        segments,
        condi11_value,
        integrated_value,
    })
}

/// First-order condition at `phi`: the largest `−(φ − phi)ᵀ∇L(phi)` over
/// random feasible probes `φ` and the probes `0` and `2·phi` (pulled inside
/// the domain). Nonpositive at the minimizer; `+∞` if `phi` is infeasible.
pub fn verify_first_order(
    chars: &Characteristics,
    phi: &Vector,
    n_probes: usize,
    seed: u64,
) -> f64 {
    let g = match objective::evaluate(chars, phi) {
        Ok(e) => match e.gradient {
            Some(g) => g,
            None => return f64::INFINITY,
        },
        Err(_) => return f64::INFINITY,
    };
    let domain = admissible_domain(chars);
    let lhs = |p: &Vector| -(p - phi).dot(&g);
    let mut worst = lhs(&Vector::zeros(phi.len()));
    let reach = domain.max_step(phi, phi);
    worst = worst.max(lhs(&(phi * (1.0 + (0.9 * reach).min(1.0)))));
    let mut rng = aux_stream(seed, 3);
    let radius = phi.norm().max(1.0);
    for _ in 0..n_probes {
        worst = worst.max(lhs(&feasible_probe(&mut rng, &domain, phi, radius)));
    }
    worst
}

/// `φᵀ(b − cφ) + Σ w_i(φᵀx_i/(1+φᵀx_i) − φᵀh(x_i))`, clamped at zero
/// against rounding.
pub fn v_drift(chars: &Characteristics, phi: &Vector) -> f64 {
    let mut s = phi.dot(&(&chars.b - &chars.c * phi));
    for (_, a) in chars.jumps.charged() {
        let u = phi.dot(&a.x);
        s += a.w * (u / (1.0 + u) - phi.dot(&truncate(&a.x)));
    }
    s.max(0.0)
}

/// `v_drift + ½φᵀcφ + Σ w_i(ln(1+φᵀx_i) − φᵀx_i/(1+φᵀx_i))`.
pub fn condi11_rate(chars: &Characteristics, phi: &Vector) -> f64 {
    let mut s = v_drift(chars, phi) + 0.5 * phi.dot(&(&chars.c * phi));
    for (_, a) in chars.jumps.charged() {
        let u = phi.dot(&a.x);
        s += a.w * (u.ln_1p() - u / (1.0 + u));
    }
    s
}

/// Integrability expectation for deterministic characteristics, one `phi`
/// per segment.
pub fn condi11_evaluate(model: &MarketModel, phi: &[Vector]) -> Result<f64, SolveError> {
    check_fractions(model, phi)?;
    let total = model
        .segments()
        .iter()
        .zip(model.spans())
        .zip(phi)
        .map(|((s, (a, b)), p)| (b - a) * condi11_rate(&s.chars, p))
        .sum::<f64>();
    assert!(total.is_finite());
    Ok(total)
}

/// Checks one admissible fraction per segment.
pub fn check_fractions(model: &MarketModel, phi: &[Vector]) -> Result<(), SolveError> {
    if phi.len() != model.segments().len() {
        return Err(SolveError::SegmentCount {
            expected: model.segments().len(),
            found: phi.len(),
        });
    }
    for (k, (s, p)) in model.segments().iter().zip(phi).enumerate() {
        if p.len() != model.dim() {
            return Err(SolveError::Dimension {
                expected: model.dim(),
                found: p.len(),
            });
        }
        if !admissible_domain(&s.chars).contains(p) {
            return Err(SolveError::Infeasible(k));
        }
    }
    Ok(())
}

/// The two nonnegativity margins at `phi`: `−φᵀ∇L(φ)` and `−L(φ)`.
pub fn positivity_margins(chars: &Characteristics, phi: &Vector) -> (f64, f64) {
    let mut first = phi.dot(&chars.b) - phi.dot(&(&chars.c * phi));
    let mut second = phi.dot(&chars.b) - 0.5 * phi.dot(&(&chars.c * phi));
    for (_, a) in chars.jumps.charged() {
        let u = phi.dot(&a.x);
        let ph = phi.dot(&truncate(&a.x));
        first += a.w * (u / (1.0 + u) - ph);
        second += a.w * (u.ln_1p() - ph);
    }
    (first, second)
}
