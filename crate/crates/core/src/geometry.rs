//! Recession analysis of the log-growth objective.
//!
//! The minimum of `L` is attained when every recession direction is a
//! direction of constancy. Along a direction `y` the recession function is
//!
//! ```text
//! L0⁺(y) = +∞                              if yᵀcy > 0 or F(Γ⁻(y)) > 0
//!        = −yᵀb + Σ_{yᵀx_i > 0} w_i yᵀh(x_i)   otherwise
//! ```
//!
//! where `Γ^±(y)` are the atoms on either side of the hyperplane `yᵀx = 0`.
//! The search combines low-discrepancy directions on the sphere with the
//! finitely many degenerate directions cut out by the constraints (null
//! spaces of `c` stacked with subsets of atoms), which contain every extreme
//! ray of the cone where `L0⁺` is finite.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::linalg::{null_space, stack_rows};
use crate::model::{truncate, Characteristics, Vector};
use crate::objective;
use crate::sampling::aux_stream;

/// Absolute tolerance on recession values.
pub const RECESSION_TOL: f64 = 1e-9;
/// Largest dimension the direction search accepts.
pub const MAX_DIM: usize = 4;
/// Relative threshold for sign tests (`yᵀcy`, `yᵀx`) and null spaces.
const ZERO_TOL: f64 = 1e-12;
const NULL_TOL: f64 = 1e-10;
const MAX_SUBSETS: usize = 50_000;
/// Scales at which a witness ray is evaluated.
pub const RAY_SCALES: [f64; 3] = [1e2, 1e3, 1e4];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("recession direction must be nonzero")]
    ZeroDirection,
    #[error("direction has dimension {found}, model has {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("direction search supports d ≤ {MAX_DIM}, model has d = {0}")]
    TooManyDimensions(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionClass {
    /// `L0⁺(y) = +∞`.
    Infinite,
    /// `L0⁺(y)` finite and above the tolerance.
    Ascent,
    /// `L0⁺(y) < −tol`: unbounded descent.
    Descent,
    /// Both `L0⁺(±y) ≤ tol`.
    Constancy,
    /// `L0⁺(y) ≤ tol` but `L0⁺(−y) > tol`: a recession direction along which
    /// `L` is not constant.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionDiagnostic {
    pub direction: Vector,
    pub curvature: f64,
    pub mass_negative: f64,
    pub mass_positive: f64,
    pub linear_part: f64,
    pub value: f64,
    pub value_opposite: f64,
    pub class: DirectionClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub direction: Vector,
    pub recession_value: f64,
    pub class: DirectionClass,
    /// `(α, L(α·y))` for each of [`RAY_SCALES`].
    pub ray: Vec<(f64, f64)>,
}

impl Witness {
    /// `L` strictly decreases along the ray at the sampled scales.
    pub fn ray_decreasing(&self) -> bool {
        let mut prev = 0.0;
        self.ray.iter().all(|&(_, v)| {
            let ok = v < prev;
            prev = v;
            ok
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecessionReport {
    pub attained: bool,
    pub witness: Option<Witness>,
    /// Orthonormal basis of `{y : cy = 0, yᵀb = 0, yᵀx_i = 0 ∀ charged i}`.
    pub rc_basis: Vec<Vector>,
    /// Every tested direction with a finite recession value.
    pub diagnostics: Vec<DirectionDiagnostic>,
    pub directions_tested: usize,
    /// False when the degenerate-direction enumeration was truncated.
    pub exhaustive: bool,
}

struct Parts {
    curvature: f64,
    mass_negative: f64,
    mass_positive: f64,
    linear_part: f64,
}

fn parts(chars: &Characteristics, y: &Vector) -> Parts {
    let yy = y.norm_squared();
    let curvature = y.dot(&(&chars.c * y));
    let mut linear = -y.dot(&chars.b);
    let (mut neg, mut pos) = (0.0, 0.0);
    for (_, a) in chars.jumps.charged() {
        let s = y.dot(&a.x);
        let eps = ZERO_TOL * yy.sqrt() * a.x.norm();
        if s < -eps {
            neg += a.w;
        } else if s > eps {
            pos += a.w;
            linear += a.w * y.dot(&truncate(&a.x));
        }
    }
    Parts {
        curvature: if curvature > ZERO_TOL * chars.c.norm() * yy {
            curvature
        } else {
            0.0
        },
        mass_negative: neg,
        mass_positive: pos,
        linear_part: linear,
    }
}

fn value_from(p: &Parts) -> f64 {
    if p.curvature > 0.0 || p.mass_negative > 0.0 {
        f64::INFINITY
    } else {
        p.linear_part
    }
}

/// `L0⁺(y)` by the case formula. Positively homogeneous, so callers normally
/// pass unit vectors.
pub fn recession_value(chars: &Characteristics, y: &Vector) -> Result<f64, GeometryError> {
    if y.len() != chars.dim() {
        return Err(GeometryError::Dimension {
            expected: chars.dim(),
            found: y.len(),
        });
    }
    if y.norm() == 0.0 {
        return Err(GeometryError::ZeroDirection);
    }
    Ok(value_from(&parts(chars, y)))
}

fn classify(value: f64, opposite: f64) -> DirectionClass {
    if value == f64::INFINITY {
        DirectionClass::Infinite
    } else if value < -RECESSION_TOL {
        DirectionClass::Descent
    } else if value > RECESSION_TOL {
        DirectionClass::Ascent
    } else if opposite <= RECESSION_TOL {
        DirectionClass::Constancy
    } else {
        DirectionClass::Inconclusive
    }
}

fn diagnose(chars: &Characteristics, y: &Vector) -> DirectionDiagnostic {
    let p = parts(chars, y);
    let value = value_from(&p);
    let value_opposite = value_from(&parts(chars, &-y));
    DirectionDiagnostic {
        direction: y.clone(),
        curvature: p.curvature,
        mass_negative: p.mass_negative,
        mass_positive: p.mass_positive,
        linear_part: p.linear_part,
        value,
        value_opposite,
        class: classify(value, value_opposite),
    }
}

/// Directions along which `L` is constant.
pub fn constancy_basis(chars: &Characteristics) -> Vec<Vector> {
    let d = chars.dim();
    let mut rows: Vec<Vector> = chars.c.row_iter().map(|r| r.transpose()).collect();
    rows.extend(chars.jumps.charged().map(|(_, a)| a.x.clone()));
    rows.push(chars.b.clone());
    let refs: Vec<&Vector> = rows.iter().collect();
    null_space(&stack_rows(&refs, d), NULL_TOL)
}

fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while n > 0 {
        r += f * (n % base) as f64;
        n /= base;
        f *= inv;
    }
    r
}

/// Shifted Halton points pushed through the normal quantile and normalized.
pub fn sphere_directions(dim: usize, n: usize, seed: u64) -> Vec<Vector> {
    const PRIMES: [u64; MAX_DIM] = [2, 3, 5, 7];
    let normal = Normal::standard();
    let mut rng = aux_stream(seed, 2);
    let shift: Vec<f64> = (0..dim)
        .map(|_| rand::Rng::random::<f64>(&mut rng))
        .collect();
    (1..=n as u64)
        .filter_map(|k| {
            let v = Vector::from_fn(dim, |i, _| {
                let u = (radical_inverse(k, PRIMES[i]) + shift[i]).fract();
                normal.inverse_cdf(u.clamp(1e-12, 1.0 - 1e-12))
            });
            let norm = v.norm();
            (norm > 1e-12).then(|| v / norm)
        })
        .collect()
}

fn combinations(n: usize, k: usize, out: &mut Vec<Vec<usize>>, limit: usize) -> bool {
    fn rec(
        start: usize,
        n: usize,
        k: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        limit: usize,
    ) -> bool {
        if cur.len() == k {
            if out.len() >= limit {
                return false;
            }
            out.push(cur.clone());
            return true;
        }
        for i in start..n {
            cur.push(i);
            if !rec(i + 1, n, k, cur, out, limit) {
                return false;
            }
            cur.pop();
        }
        true
    }
    rec(0, n, k, &mut Vec::new(), out, limit)
}

/// Degenerate directions: ± each basis vector of `null(c, atoms)` and ±
/// every one-dimensional `null(c, x_S, null(c, atoms)ᵀ)` for atom subsets `S`.
fn degenerate_directions(chars: &Characteristics) -> (Vec<Vector>, bool) {
    let d = chars.dim();
    let c_rows: Vec<Vector> = chars.c.row_iter().map(|r| r.transpose()).collect();
    let atoms: Vec<Vector> = chars.jumps.charged().map(|(_, a)| a.x.clone()).collect();

    let mut base: Vec<&Vector> = c_rows.iter().collect();
    base.extend(atoms.iter());
    let lineality = null_space(&stack_rows(&base, d), NULL_TOL);

    let c_refs: Vec<&Vector> = c_rows.iter().collect();
    let free = null_space(&stack_rows(&c_refs, d), NULL_TOL).len();

    let mut out = Vec::new();
    for v in &lineality {
        out.push(v.clone());
        out.push(-v);
    }
    if free == 0 {
        return (out, true);
    }
    let mut subsets = Vec::new();
    let mut exhaustive = true;
    for k in 0..free.min(atoms.len() + 1) {
        if !combinations(atoms.len(), k, &mut subsets, MAX_SUBSETS) {
            exhaustive = false;
            break;
        }
    }
    for s in &subsets {
        let mut rows: Vec<&Vector> = c_rows.iter().collect();
        rows.extend(s.iter().map(|&i| &atoms[i]));
        rows.extend(lineality.iter());
        let ns = null_space(&stack_rows(&rows, d), NULL_TOL);
        if ns.len() == 1 {
            out.push(ns[0].clone());
            out.push(-&ns[0]);
        }
    }
    (out, exhaustive)
}

/// Local descent on the sphere, moving only inside `null(c)` so the
/// recession value stays finite.
fn refine(chars: &Characteristics, start: &Vector, free: &[Vector]) -> Vector {
    let mut y = start.clone();
    let mut best = value_from(&parts(chars, &y));
    let mut step = 0.5;
    let mut evals = 0;
    while step > 1e-6 && evals < 400 {
        let mut improved = false;
        for b in free {
            for sign in [1.0, -1.0] {
                let cand = &y + b * (sign * step);
                let n = cand.norm();
                if n < 1e-12 {
                    continue;
                }
                let cand = cand / n;
                evals += 1;
                let v = value_from(&parts(chars, &cand));
                if v < best {
                    best = v;
                    y = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    y
}

fn witness_for(chars: &Characteristics, diag: &DirectionDiagnostic) -> Witness {
    Witness {
        direction: diag.direction.clone(),
        recession_value: diag.value,
        class: diag.class,
        ray: RAY_SCALES
            .iter()
            .map(|&a| (a, objective::value(chars, &(&diag.direction * a))))
            .collect(),
    }
}

/// Decides whether `L` attains its minimum.
///
/// `attained` is true iff no tested direction has `L0⁺ < −tol` and every
/// direction with `L0⁺ ≤ tol` also has `L0⁺(−y) ≤ tol`. Results depend only
/// on `(chars, n_dirs, seed)`.
pub fn attainment_certificate(
    chars: &Characteristics,
    n_dirs: usize,
    seed: u64,
) -> Result<RecessionReport, GeometryError> {
    let d = chars.dim();
    if d > MAX_DIM {
        return Err(GeometryError::TooManyDimensions(d));
    }
    let c_refs: Vec<Vector> = chars.c.row_iter().map(|r| r.transpose()).collect();
    let refs: Vec<&Vector> = c_refs.iter().collect();
    let free = null_space(&stack_rows(&refs, d), NULL_TOL);

    let sampled = sphere_directions(d, n_dirs, seed);
    let refined: Vec<Vector> = sampled
        .par_iter()
        .filter(|y| value_from(&parts(chars, y)) <= RECESSION_TOL)
        .map(|y| refine(chars, y, &free))
        .collect();
    let (degenerate, exhaustive) = degenerate_directions(chars);

    let rc_basis = constancy_basis(chars);
    let mut candidates = sampled;
    candidates.extend(refined);
    candidates.extend(degenerate);
    for v in &rc_basis {
        candidates.push(v.clone());
        candidates.push(-v);
    }

    let all: Vec<DirectionDiagnostic> = candidates.par_iter().map(|y| diagnose(chars, y)).collect();
    let directions_tested = all.len();
    let descent = all
        .iter()
        .filter(|g| g.class == DirectionClass::Descent)
        .min_by(|a, b| a.value.total_cmp(&b.value));
    let flagged = descent.or_else(|| all.iter().find(|g| g.class == DirectionClass::Inconclusive));
    let witness = flagged.map(|g| witness_for(chars, g));
    let diagnostics = all.into_iter().filter(|g| g.value.is_finite()).collect();

    Ok(RecessionReport {
        attained: witness.is_none(),
        witness,
        rc_basis,
        diagnostics,
        directions_tested,
        exhaustive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpAtom, JumpMeasure, Matrix};

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
    fn diffusive_direction_is_infinite() {
        let ch = one_dim(0.08, 0.04, &[]);
        assert_eq!(recession_value(&ch, &s(1.0)).unwrap(), f64::INFINITY);
        let r = attainment_certificate(&ch, 64, 1).unwrap();
        assert!(r.attained);
        assert!(r.rc_basis.is_empty());
    }

    #[test]
    fn free_lunch_case_formula_and_slope() {
        let ch = one_dim(1.0, 0.0, &[(0.5, 1.0)]);
        let v = recession_value(&ch, &s(1.0)).unwrap();
        assert!((v + 0.5).abs() < 1e-15);
        // slope oracle L(α)/α from the origin
        for a in [1e2, 1e3, 1e4] {
            let slope = objective::value(&ch, &s(a)) / a;
            assert!((slope - v).abs() < (1.0 + 0.5 * a).ln() / a + 1e-12);
        }
        assert_eq!(recession_value(&ch, &s(-1.0)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn free_lunch_not_attained() {
        let ch = one_dim(1.0, 0.0, &[(0.5, 1.0)]);
        let r = attainment_certificate(&ch, 64, 3).unwrap();
        assert!(!r.attained);
        let w = r.witness.unwrap();
        assert!((w.direction[0] - 1.0).abs() < 1e-12);
        assert!((w.recession_value + 0.5).abs() < 1e-12);
        assert!(w.ray_decreasing());
    }

    #[test]
    fn logarithmic_escape_is_flagged() {
        // L(λ) = −ln(1 + λ/2): recession value 0 forward, +∞ backward
        let ch = one_dim(0.5, 0.0, &[(0.5, 1.0)]);
        let r = attainment_certificate(&ch, 16, 0).unwrap();
        assert!(!r.attained);
        let w = r.witness.unwrap();
        assert_eq!(w.class, DirectionClass::Inconclusive);
        assert!(w.ray_decreasing());
    }

    #[test]
    fn flat_coordinate_is_constancy() {
        let jumps = JumpMeasure::new(vec![
            JumpAtom::new(Vector::from_vec(vec![0.3, 0.0]), 1.0),
            JumpAtom::new(Vector::from_vec(vec![-0.2, 0.0]), 0.5),
        ]);
        let ch = Characteristics::new(
            Vector::from_vec(vec![0.1, 0.0]),
            Matrix::from_diagonal(&Vector::from_vec(vec![0.04, 0.0])),
            jumps,
        )
        .unwrap();
        let r = attainment_certificate(&ch, 128, 5).unwrap();
        assert!(r.attained);
        assert_eq!(r.rc_basis.len(), 1);
        let e = &r.rc_basis[0];
        assert!((e[1].abs() - 1.0).abs() < 1e-12);
        let lam = Vector::from_vec(vec![0.7, -0.3]);
        let l0 = objective::value(&ch, &lam);
        assert!((objective::value(&ch, &(&lam + e)) - l0).abs() < 1e-12);
        assert!((objective::value(&ch, &(&lam - e)) - l0).abs() < 1e-12);
    }

    #[test]
    fn drift_on_flat_coordinate_is_descent() {
        let ch = Characteristics::new(
            Vector::from_vec(vec![0.1, 0.05]),
            Matrix::from_diagonal(&Vector::from_vec(vec![0.04, 0.0])),
            JumpMeasure::empty(),
        )
        .unwrap();
        let r = attainment_certificate(&ch, 32, 5).unwrap();
        assert!(!r.attained);
        let w = r.witness.unwrap();
        assert!(w.direction[1] > 0.99);
        assert!(r.rc_basis.is_empty());
    }

    #[test]
    fn pure_jump_two_sided_is_attained() {
        let ch = one_dim(0.1, 0.0, &[(0.5, 1.0), (-0.5, 1.0)]);
        assert!(attainment_certificate(&ch, 64, 9).unwrap().attained);
    }

    #[test]
    fn one_sided_atoms_in_the_plane() {
        // all atoms in the positive quadrant, no diffusion: descent along −(1,1)
        // is blocked, but with b large enough the positive cone descends
        let jumps = JumpMeasure::new(vec![
            JumpAtom::new(Vector::from_vec(vec![0.5, 0.1]), 1.0),
            JumpAtom::new(Vector::from_vec(vec![0.1, 0.5]), 1.0),
        ]);
        let ch = Characteristics::new(
            Vector::from_vec(vec![1.0, 1.0]),
            Matrix::zeros(2, 2),
            jumps.clone(),
        )
        .unwrap();
        let r = attainment_certificate(&ch, 32, 2).unwrap();
        assert!(!r.attained);
        assert!(r.witness.unwrap().recession_value < 0.0);
        // with negative drift the positive cone ascends and the negative side is blocked
        let ch = Characteristics::new(
            Vector::from_vec(vec![-1.0, -1.0]),
            Matrix::zeros(2, 2),
            jumps,
        )
        .unwrap();
        let r = attainment_certificate(&ch, 32, 2).unwrap();
        assert!(r.attained, "{:?}", r.witness);
        assert!(r.exhaustive);
    }

    #[test]
    fn rejects_bad_input() {
        let ch = one_dim(0.0, 0.0, &[]);
        assert_eq!(
            recession_value(&ch, &s(0.0)),
            Err(GeometryError::ZeroDirection)
        );
        let big = Characteristics::diffusive(Vector::zeros(5), Matrix::identity(5, 5)).unwrap();
        assert_eq!(
            attainment_certificate(&big, 8, 0).unwrap_err(),
            GeometryError::TooManyDimensions(5)
        );
    }

    #[test]
    fn sphere_directions_are_unit_and_seeded() {
        let a = sphere_directions(3, 50, 11);
        let b = sphere_directions(3, 50, 11);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        assert_ne!(a, sphere_directions(3, 50, 12));
    }
}
