//! Scalar inequalities behind the integrability arguments, with grid scans.
//!
//! * growth bound: `(1+y)ln(1+y) − y ≥ (1−δ)/2 · y²/(1+y)·1{|y|≤δ} + δ/(2(1+δ))·|y|·1{|y|>δ}` for `y ≥ −1`
//! * jump bound: `y − ln(1+y) ≥ δ|y|/max(2(1−δ), 1+δ²)·1{|y|>δ} + y²/(1+δ)·1{|y|≤δ}` for `y > −1`
//! * smoothing sandwich for `f_δ(λ, x)`:
//!   `−δ|λ|²|x|² ≤ f_δ ≤ max(1/(2(1−δ)²), −δ−ln(1−δ))·|λ|²|x|²` on `|x| ≤ 1` and
//!   `−δ|λ||x| ≤ f_δ ≤ −ln(1−δ)` on `|x| > 1`
//! * bracket bound: `√[K,K] ≤ √⟨Kᶜ⟩ + Σ|ΔK|·1{|ΔK|>δ} + √(Σ ΔK²·1{|ΔK|≤δ})`

use crate::model::Vector;
use crate::objective::smoothed_integrand;

/// Violations count only beyond this absolute slack.
pub const SLACK: f64 = 1e-12;
pub const GRID_POINTS: usize = 1000;

/// `δ ∈ {0.1, …, 0.9}`.
pub fn delta_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

/// `n` equally spaced points on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// `(1+y)ln(1+y) − y`, continuous at `y = −1`.
pub fn growth_lhs(y: f64) -> f64 {
    if y == -1.0 {
        1.0
    } else {
        (1.0 + y) * y.ln_1p() - y
    }
}

pub fn growth_rhs(y: f64, delta: f64) -> f64 {
    if y.abs() <= delta {
        0.5 * (1.0 - delta) * y * y / (1.0 + y)
    } else {
        delta / (2.0 * (1.0 + delta)) * y.abs()
    }
}

/// `y − ln(1+y)`.
pub fn jump_lhs(y: f64) -> f64 {
    y - y.ln_1p()
}

pub fn jump_rhs(y: f64, delta: f64) -> f64 {
    if y.abs() > delta {
        delta * y.abs() / (2.0 * (1.0 - delta)).max(1.0 + delta * delta)
    } else {
        y * y / (1.0 + delta)
    }
}

/// Lower and upper sandwich bounds on `f_δ(λ, x)` given `|λ|` and `|x|`.
pub fn sandwich_bounds(lambda_norm: f64, x_norm: f64, delta: f64) -> (f64, f64) {
    let s = lambda_norm * x_norm;
    if x_norm <= 1.0 {
        let k = (0.5 / (1.0 - delta).powi(2)).max(-delta - (-delta).ln_1p());
        (-delta * s * s, k * s * s)
    } else {
        (-delta * s, -(-delta).ln_1p())
    }
}

/// Left and right side of the bracket bound for one path.
pub fn bracket_bound(continuous_qv: f64, jumps: &[f64], delta: f64) -> (f64, f64) {
    let total: f64 = continuous_qv + jumps.iter().map(|j| j * j).sum::<f64>();
    let big: f64 = jumps
        .iter()
        .filter(|j| j.abs() > delta)
        .map(|j| j.abs())
        .sum();
    let small: f64 = jumps
        .iter()
        .filter(|j| j.abs() <= delta)
        .map(|j| j * j)
        .sum();
    (total.sqrt(), continuous_qv.sqrt() + big + small.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub delta: f64,
    pub point: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityScan {
    pub name: &'static str,
    pub points: usize,
    pub violations: usize,
    /// Largest `rhs − lhs` among violations.
    pub worst: Option<Violation>,
}

impl InequalityScan {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn record(&mut self, v: Violation) {
        self.violations += 1;
        let gap = v.rhs - v.lhs;
        if self.worst.as_ref().is_none_or(|w| gap > w.rhs - w.lhs) {
            self.worst = Some(v);
        }
    }

    fn new(name: &'static str) -> Self {
        Self {
            name,
            points: 0,
            violations: 0,
            worst: None,
        }
    }
}

fn scan_lower(
    name: &'static str,
    ys: &[f64],
    lhs: fn(f64) -> f64,
    rhs: fn(f64, f64) -> f64,
) -> InequalityScan {
    let mut scan = InequalityScan::new(name);
    for delta in delta_grid() {
        for &y in ys {
            scan.points += 1;
            let (l, r) = (lhs(y), rhs(y, delta));
            if !(l >= r - SLACK) {
                scan.record(Violation {
                    delta,
                    point: y,
                    lhs: l,
                    rhs: r,
                });
            }
        }
    }
    scan
}

/// Growth bound on `y ∈ [−1, 9]`.
pub fn scan_growth() -> InequalityScan {
    scan_lower(
        "growth-bound",
        &linear_grid(-1.0, 9.0, GRID_POINTS),
        growth_lhs,
        growth_rhs,
    )
}

/// Jump bound on `y ∈ (−1, 9]`.
pub fn scan_jump() -> InequalityScan {
    let step = 10.0 / GRID_POINTS as f64;
    scan_lower(
        "jump-bound",
        &linear_grid(-1.0 + step, 9.0, GRID_POINTS),
        jump_lhs,
        jump_rhs,
    )
}

/// Sandwich bounds for scalar `λ ∈ [−5, 5]` against small and large atoms.
pub fn scan_sandwich() -> InequalityScan {
    let mut scan = InequalityScan::new("smoothing-sandwich");
    let lambdas = linear_grid(-5.0, 5.0, GRID_POINTS);
    let atoms = [-5.0, -2.0, -1.0, -0.5, -0.1, 0.1, 0.5, 1.0, 2.0, 5.0];
    for delta in delta_grid() {
        for &l in &lambdas {
            for &x in &atoms {
                scan.points += 1;
                let f = smoothed_integrand(
                    &Vector::from_element(1, l),
                    &Vector::from_element(1, x),
                    delta,
                );
                let (lo, hi) = sandwich_bounds(l.abs(), x.abs(), delta);
                if f < lo - SLACK {
                    scan.record(Violation {
                        delta,
                        point: l,
                        lhs: f,
                        rhs: lo,
                    });
                }
                if f > hi + SLACK {
                    scan.record(Violation {
                        delta,
                        point: l,
                        lhs: hi,
                        rhs: f,
                    });
                }
            }
        }
    }
    scan
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growth_bound_holds() {
        let s = scan_growth();
        assert_eq!(s.points, 9 * GRID_POINTS);
        assert!(s.passed(), "{:?}", s.worst);
    }

    #[test]
    fn sandwich_holds() {
        assert!(scan_sandwich().passed());
    }

    #[test]
    fn jump_bound_counterexample() {
        // at δ = 0.5, y = 0.1: 0.1 − ln 1.1 ≈ 0.00469 < 0.01/1.5
        assert!(jump_lhs(0.1) < jump_rhs(0.1, 0.5));
        assert!(!scan_jump().passed());
    }

    #[test]
    fn bracket_examples() {
        assert_eq!(bracket_bound(0.04, &[], 0.5), (0.2, 0.2));
        let (l, r) = bracket_bound(0.0, &[0.8], 0.5);
        assert!((l - 0.8).abs() < 1e-15 && (r - 0.8).abs() < 1e-15);
        let (l, r) = bracket_bound(0.04, &[0.3, -0.4, 0.9], 0.5);
        assert!((l - 1.1f64.sqrt()).abs() < 1e-15);
        assert!((r - (0.2 + 0.9 + 0.5)).abs() < 1e-15);
        assert!(l <= r);
    }
}
