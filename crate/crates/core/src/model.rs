//! Market models given by predictable characteristics.
//!
//! A model is a finite list of time segments on `[0, T]`, each carrying a
//! constant triple `(b, c, F)`: the truncated drift, the diffusion covariance
//! and a jump measure with finitely many atoms. The operational clock is the
//! identity, so every rate below is per unit of calendar time.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative tolerance on the smallest eigenvalue of `c`, scaled by the largest.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("model must have at least one asset")]
    Empty,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("segment starts must begin at 0 and be strictly increasing (segment {0})")]
    SegmentOrder(usize),
    #[error("time {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },
}

/// Truncation function `h(x) = x·1{|x| ≤ 1}` under the Euclidean norm.
pub fn truncate(x: &Vector) -> Vector {
    if is_small_jump(x) {
        x.clone()
    } else {
        Vector::zeros(x.len())
    }
}

pub fn is_small_jump(x: &Vector) -> bool {
    x.norm() <= 1.0
}

/// One atom of the jump measure: relative jump size `x` arriving with
/// intensity `w` per unit time.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpAtom {
    pub x: Vector,
    pub w: f64,
}

impl JumpAtom {
    pub fn new(x: Vector, w: f64) -> Self {
        Self { x, w }
    }

    /// Atoms with zero intensity carry no mass and are skipped by every
    /// integral against `F`.
    pub fn is_charged(&self) -> bool {
        self.w > 0.0
    }
}

/// Finite-atom jump measure `F(dx) = Σ w_i δ_{x_i}(dx)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpMeasure {
    atoms: Vec<JumpAtom>,
}

impl JumpMeasure {
    pub fn new(atoms: Vec<JumpAtom>) -> Self {
        Self { atoms }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn atoms(&self) -> &[JumpAtom] {
        &self.atoms
    }

    /// Atoms with positive intensity, with their original indices.
    pub fn charged(&self) -> impl Iterator<Item = (usize, &JumpAtom)> {
        self.atoms
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_charged())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_intensity(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    /// `Σ w_i |x_i| 1{|x_i| > 1}`; finite iff the model is σ-special.
    pub fn large_jump_moment(&self) -> f64 {
        self.atoms
            .iter()
            .filter(|a| !is_small_jump(&a.x))
            .map(|a| a.w * a.x.norm())
            .sum()
    }

    /// Compensator rate of the small jumps, `Σ_{|x_i| ≤ 1} w_i x_i`.
    pub fn small_jump_compensator(&self, dim: usize) -> Vector {
        let mut acc = Vector::zeros(dim);
        for (_, a) in self.charged() {
            if is_small_jump(&a.x) {
                acc.axpy(a.w, &a.x, 1.0);
            }
        }
        acc
    }

    fn scaled(&self, kappa: f64) -> Self {
        Self::new(
            self.atoms
                .iter()
                .map(|a| JumpAtom::new(a.x.clone(), a.w * kappa))
                .collect(),
        )
    }
}

/// Local characteristics `(b, c, F)` active on one time segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Characteristics {
    pub b: Vector,
    pub c: Matrix,
    pub jumps: JumpMeasure,
}

impl Characteristics {
    /// Checks shapes and finiteness only; semantic checks live in
    /// [`validate_model`].
    pub fn new(b: Vector, c: Matrix, jumps: JumpMeasure) -> Result<Self, ModelError> {
        let d = b.len();
        if d == 0 {
            return Err(ModelError::Empty);
        }
        if c.nrows() != d || c.ncols() != d {
            return Err(ModelError::Dimension {
                what: "c".into(),
                expected: d,
                found: if c.nrows() != d { c.nrows() } else { c.ncols() },
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("b".into()));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("c".into()));
        }
        for (i, a) in jumps.atoms().iter().enumerate() {
            if a.x.len() != d {
                return Err(ModelError::Dimension {
                    what: format!("atoms[{i}].x"),
                    expected: d,
                    found: a.x.len(),
                });
            }
            if a.x.iter().any(|v| !v.is_finite()) || !a.w.is_finite() {
                return Err(ModelError::NonFinite(format!("atoms[{i}]")));
            }
        }
        Ok(Self { b, c, jumps })
    }

    /// Pure diffusion with no jumps.
    pub fn diffusive(b: Vector, c: Matrix) -> Result<Self, ModelError> {
        Self::new(b, c, JumpMeasure::empty())
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Multiplies `b`, `c` and every intensity by `kappa`.
    pub fn scaled(&self, kappa: f64) -> Self {
        Self {
            b: &self.b * kappa,
            c: &self.c * kappa,
            jumps: self.jumps.scaled(kappa),
        }
    }

    /// Rough magnitude of the characteristics, used to scale tolerances.
    pub fn scale(&self) -> f64 {
        let jumps: f64 = self.jumps.charged().map(|(_, a)| a.w * a.x.norm()).sum();
        self.b.norm() + self.c.norm() + jumps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub chars: Characteristics,
}

/// Piecewise-constant characteristics on `[0, horizon]`.
///
/// Segment `k` is active on `[start_k, start_{k+1})`, the last one on
/// `[start_last, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    dim: usize,
    horizon: f64,
    segments: Vec<Segment>,
}

impl MarketModel {
    pub fn constant(chars: Characteristics, horizon: f64) -> Self {
        Self {
            dim: chars.dim(),
            horizon,
            segments: vec![Segment { start: 0.0, chars }],
        }
    }

    pub fn piecewise(horizon: f64, segments: Vec<Segment>) -> Result<Self, ModelError> {
        let first = segments.first().ok_or(ModelError::Empty)?;
        let dim = first.chars.dim();
        if first.start != 0.0 {
            return Err(ModelError::SegmentOrder(0));
        }
        for (k, pair) in segments.windows(2).enumerate() {
            if !(pair[1].start > pair[0].start) || !pair[1].start.is_finite() {
                return Err(ModelError::SegmentOrder(k + 1));
            }
        }
        for (k, s) in segments.iter().enumerate() {
            if s.chars.dim() != dim {
                return Err(ModelError::Dimension {
                    what: format!("segments[{k}]"),
                    expected: dim,
                    found: s.chars.dim(),
                });
            }
        }
        Ok(Self {
            dim,
            horizon,
            segments,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// `(start, end)` of every segment, clipped to the horizon.
    pub fn spans(&self) -> Vec<(f64, f64)> {
        let n = self.segments.len();
        (0..n)
            .map(|k| {
                let start = self.segments[k].start;
                let end = if k + 1 < n {
                    self.segments[k + 1].start.min(self.horizon)
                } else {
                    self.horizon
                };
                (start, end.max(start))
            })
            .collect()
    }

    /// Index of the segment active at `t`, right-continuous at breaks.
    pub fn segment_index(&self, t: f64) -> Result<usize, ModelError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(ModelError::OutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self
            .segments
            .iter()
            .rposition(|s| s.start <= t)
            .unwrap_or(0))
    }

    pub fn segment_at(&self, t: f64) -> Result<&Characteristics, ModelError> {
        self.segment_index(t).map(|k| &self.segments[k].chars)
    }

    pub fn scaled(&self, kappa: f64) -> Self {
        Self {
            dim: self.dim,
            horizon: self.horizon,
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    start: s.start,
                    chars: s.chars.scaled(kappa),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub message: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, message: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn usable(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// σ-special flag per segment, as recorded by the checks.
    pub fn sigma_special(&self) -> Vec<bool> {
        self.checks
            .iter()
            .filter(|c| c.name.starts_with("sigma-special"))
            .map(|c| c.passed)
            .collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "ok" } else { "FAIL" };
            writeln!(f, "[{tag}] {}: {}", c.name, c.message)?;
        }
        Ok(())
    }
}

/// Smallest and largest eigenvalue of the symmetric part of `c`.
pub fn eigen_range(c: &Matrix) -> (f64, f64) {
    if c.nrows() == 0 {
        return (0.0, 0.0);
    }
    let sym = (c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

fn check_segment(k: usize, ch: &Characteristics, checks: &mut Vec<Check>) {
    let c = &ch.c;
    let asym = (c - c.transpose()).abs().max();
    let symmetric = asym <= 1e-12 * c.abs().max().max(1.0);
    let (lo, hi) = eigen_range(c);
    let floor = -PSD_TOL * hi.abs().max(lo.abs());
    let psd = symmetric && lo >= floor;
    let msg = if !symmetric {
        format!("c is not symmetric (max asymmetry {asym:e})")
    } else if psd {
        format!("eigenvalues in [{lo:e}, {hi:e}]")
    } else {
        format!("c is not positive semidefinite (eigenvalue {lo})")
    };
    checks.push(Check::new(format!("psd[{k}]"), psd, msg));

    let mut problems = Vec::new();
    for (i, a) in ch.jumps.atoms().iter().enumerate() {
        if a.w < 0.0 {
            problems.push(format!("atom {i} has negative intensity {}", a.w));
        }
        if a.x.iter().all(|v| *v == 0.0) {
            problems.push(format!("F({{0}})=0 violated by atom {i}"));
        }
        for (j, other) in ch.jumps.atoms().iter().enumerate().skip(i + 1) {
            if a.x == other.x {
                problems.push(format!("atoms {i} and {j} coincide"));
            }
        }
    }
    let atoms_ok = problems.is_empty();
    let msg = if atoms_ok {
        format!(
            "{} atoms, total intensity {}",
            ch.jumps.len(),
            ch.jumps.total_intensity()
        )
    } else {
        problems.join("; ")
    };
    checks.push(Check::new(format!("atoms[{k}]"), atoms_ok, msg));

    let moment = ch.jumps.large_jump_moment();
    checks.push(Check::new(
        format!("sigma-special[{k}]"),
        moment.is_finite(),
        format!("large-jump moment {}", moment + 0.0),
    ));
}

/// Runs every semantic check on the model. Never aborts; the model is usable
/// iff all checks pass.
pub fn validate_model(model: &MarketModel) -> ValidationReport {
    let mut checks = Vec::new();
    let t = model.horizon();
    checks.push(Check::new(
        "horizon",
        t.is_finite() && t > 0.0,
        format!("T = {t}"),
    ));
    let last_start = model.segments().last().map(|s| s.start).unwrap_or(0.0);
    checks.push(Check::new(
        "segments",
        last_start < t || model.segments().len() == 1,
        format!(
            "{} segment(s), last break at {last_start}",
            model.segments().len()
        ),
    ));
    for (k, s) in model.segments().iter().enumerate() {
        check_segment(k, &s.chars, &mut checks);
    }
    ValidationReport { checks }
}

/// Strict half-space `1 + λᵀx > 0` contributed by one charged atom.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub atom: usize,
    pub normal: Vector,
}

/// Admissible fractions `{λ : 1 + λᵀx_i > 0 for every charged atom}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDescription {
    pub dim: usize,
    pub constraints: Vec<HalfSpace>,
}

impl DomainDescription {
    pub fn is_unconstrained(&self) -> bool {
        self.constraints.is_empty()
    }

    /// `min_i (1 + λᵀx_i)`, or `+∞` without constraints.
    pub fn margin(&self, lambda: &Vector) -> f64 {
        self.constraints
            .iter()
            .map(|h| 1.0 + lambda.dot(&h.normal))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, lambda: &Vector) -> bool {
        self.margin(lambda) > 0.0
    }

    /// Largest `t` such that `λ + s·dir` stays inside for all `s < t`.
    pub fn max_step(&self, lambda: &Vector, dir: &Vector) -> f64 {
        self.constraints
            .iter()
            .filter_map(|h| {
                let slope = dir.dot(&h.normal);
                (slope < 0.0).then(|| (1.0 + lambda.dot(&h.normal)) / -slope)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Open interval of admissible fractions in one dimension.
    pub fn interval(&self) -> Option<(f64, f64)> {
        if self.dim != 1 {
            return None;
        }
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for h in &self.constraints {
            let x = h.normal[0];
            if x > 0.0 {
                lo = lo.max(-1.0 / x);
            } else if x < 0.0 {
                hi = hi.min(-1.0 / x);
            }
        }
        Some((lo, hi))
    }
}

pub fn admissible_domain(chars: &Characteristics) -> DomainDescription {
    DomainDescription {
        dim: chars.dim(),
        constraints: chars
            .jumps
            .charged()
            .map(|(i, a)| HalfSpace {
                atom: i,
                normal: a.x.clone(),
            })
            .collect(),
    }
}
