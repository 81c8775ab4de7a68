//! Stochastic exponentials of processes that are linear in the scenario.
//!
//! On each segment `U = aᵀXᶜ + d·t + Σ j(ΔX)` with `Xᶜ = σW`, `σσᵀ = c`, so
//!
//! ```text
//! ln E(U)_t = aᵀXᶜ_t + (d − ½aᵀca)·t + Σ_{s≤t} ln(1 + j(ΔX_s))
//! ```
//!
//! and products of such exponentials stay in the class by Yor's formula.

use crate::linalg::psd_sqrt;
use crate::model::{Characteristics, MarketModel, Vector};

use super::paths::{ScenarioPath, TimeGrid};
use super::ProcessError;

/// One segment of `U`: continuous loading `a`, drift `d` and jump size per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearExponent {
    pub loading: Vector,
    pub drift: f64,
    /// `ΔU` when atom `i` jumps, indexed like the segment's jump measure.
    pub jumps: Vec<f64>,
}

impl LinearExponent {
    /// `U = φ·X`: drift `φᵀ(b − Σ_{|x|≤1} w x)`, jumps `φᵀx_i`.
    pub fn wealth(chars: &Characteristics, phi: &Vector) -> Self {
        let b = &chars.b - chars.jumps.small_jump_compensator(chars.dim());
        Self {
            loading: phi.clone(),
            drift: phi.dot(&b),
            jumps: chars.jumps.atoms().iter().map(|a| phi.dot(&a.x)).collect(),
        }
    }

    /// `U = β·Xᶜ + (f − 1)⋆(μ − ν) − v·t`.
    pub fn deflator(
        chars: &Characteristics,
        beta: &Vector,
        f_values: &[f64],
        v_drift: f64,
    ) -> Self {
        let compensator: f64 = chars
            .jumps
            .charged()
            .map(|(i, a)| a.w * (f_values[i] - 1.0))
            .sum();
        Self {
            loading: beta.clone(),
            drift: -compensator - v_drift,
            jumps: f_values.iter().map(|f| f - 1.0).collect(),
        }
    }

    /// `U + V + [U, V]`.
    pub fn yor(&self, other: &Self, chars: &Characteristics) -> Self {
        Self {
            loading: &self.loading + &other.loading,
            drift: self.drift + other.drift + self.loading.dot(&(&chars.c * &other.loading)),
            jumps: self
                .jumps
                .iter()
                .zip(&other.jumps)
                .map(|(a, b)| a + b + a * b)
                .collect(),
        }
    }

    /// Drift of `ln E(U)` per unit time, excluding jumps.
    pub fn log_drift(&self, chars: &Characteristics) -> f64 {
        self.drift - 0.5 * self.loading.dot(&(&chars.c * &self.loading))
    }

    /// `ln E[E(U)_t]/t` for this segment.
    pub fn expected_growth_rate(&self, chars: &Characteristics) -> f64 {
        self.drift
            + chars
                .jumps
                .charged()
                .map(|(i, a)| a.w * self.jumps[i])
                .sum::<f64>()
    }

    /// `E[ln E(U)_t]/t` for this segment.
    pub fn expected_log_rate(&self, chars: &Characteristics) -> f64 {
        self.log_drift(chars)
            + chars
                .jumps
                .charged()
                .map(|(i, a)| a.w * self.jumps[i].ln_1p())
                .sum::<f64>()
    }
}

#[derive(Debug, Clone)]
struct Compiled {
    sigma_loading: Vector,
    log_drift: f64,
    log_jumps: Vec<f64>,
}

/// A piecewise [`LinearExponent`] prepared for fast path evaluation.
#[derive(Debug, Clone)]
pub struct ExponentProcess {
    segments: Vec<Compiled>,
}

impl ExponentProcess {
    /// Fails when some charged atom would make `1 + ΔU ≤ 0`.
    pub fn new(model: &MarketModel, parts: &[LinearExponent]) -> Result<Self, ProcessError> {
        if parts.len() != model.segments().len() {
            return Err(ProcessError::SegmentCount {
                expected: model.segments().len(),
                found: parts.len(),
            });
        }
        let segments = model
            .segments()
            .iter()
            .zip(parts)
            .enumerate()
            .map(|(k, (s, e))| {
                if e.loading.len() != model.dim() || e.jumps.len() != s.chars.jumps.len() {
                    return Err(ProcessError::Dimension);
                }
                if let Some((i, _)) = s
                    .chars
                    .jumps
                    .charged()
                    .find(|(i, _)| !(1.0 + e.jumps[*i] > 0.0))
                {
                    return Err(ProcessError::DomainViolation {
                        segment: k,
                        atom: i,
                    });
                }
                Ok(Compiled {
                    sigma_loading: psd_sqrt(&s.chars.c) * &e.loading,
                    log_drift: e.log_drift(&s.chars),
                    log_jumps: e.jumps.iter().map(|j| j.ln_1p()).collect(),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { segments })
    }

    /// `ln E(U)` at every grid point.
    pub fn log_path(&self, grid: &TimeGrid, path: &ScenarioPath) -> Vec<f64> {
        let mut out = Vec::with_capacity(grid.len());
        out.push(0.0);
        let mut jumps = path.jumps.iter().peekable();
        let mut acc = 0.0;
        for k in 1..grid.len() {
            let s = &self.segments[grid.step_segment(k)];
            acc += s.sigma_loading.dot(&path.dw[k]) + s.log_drift * grid.dt(k);
            while let Some(j) = jumps.next_if(|j| j.step == k) {
                acc += s.log_jumps[j.atom];
            }
            out.push(acc);
        }
        out
    }

    /// Jump sizes `ΔU` along the path, for bracket computations.
    pub fn jump_sizes(&self, grid: &TimeGrid, path: &ScenarioPath) -> Vec<f64> {
        path.jumps
            .iter()
            .map(|j| self.segments[grid.step_segment(j.step)].log_jumps[j.atom].exp_m1())
            .collect()
    }
}
