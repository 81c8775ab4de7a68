#![allow(dead_code)]

use std::path::PathBuf;

use ge_core::cli::model_file::load_model;
use ge_core::model::{admissible_domain, Characteristics, MarketModel, Matrix, Vector};
use ge_core::objective;
use ge_core::sampling::{feasible_probe, stream};

pub const FIXTURES: [&str; 5] = [
    "merton",
    "one-atom",
    "two-atom",
    "free-lunch",
    "two-asset-regimes",
];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(format!("{name}.toml"))
}

pub fn fixture(name: &str) -> MarketModel {
    load_model(&fixture_path(name)).unwrap_or_else(|e| panic!("{e}"))
}

pub fn value(chars: &Characteristics, l: &Vector) -> f64 {
    objective::evaluate(chars, l).unwrap().value
}

pub fn gradient(chars: &Characteristics, l: &Vector) -> Vector {
    objective::evaluate(chars, l).unwrap().gradient.unwrap()
}

pub fn hessian(chars: &Characteristics, l: &Vector) -> Matrix {
    objective::evaluate(chars, l).unwrap().hessian.unwrap()
}

fn step(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

/// Central differences of the value.
pub fn fd_gradient(chars: &Characteristics, l: &Vector) -> Vector {
    Vector::from_fn(l.len(), |i, _| {
        let h = step(l[i]);
        let (mut p, mut m) = (l.clone(), l.clone());
        p[i] += h;
        m[i] -= h;
        (value(chars, &p) - value(chars, &m)) / (2.0 * h)
    })
}

/// Central differences of the analytic gradient.
pub fn fd_hessian(chars: &Characteristics, l: &Vector) -> Matrix {
    let d = l.len();
    let mut out = Matrix::zeros(d, d);
    for j in 0..d {
        let h = step(l[j]);
        let (mut p, mut m) = (l.clone(), l.clone());
        p[j] += h;
        m[j] -= h;
        let col = (gradient(chars, &p) - gradient(chars, &m)) / (2.0 * h);
        out.set_column(j, &col);
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-4)`.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-4)
}

/// `n` seeded points around `center` whose domain margin is at least `margin`.
pub fn interior_points(
    chars: &Characteristics,
    center: &Vector,
    n: usize,
    margin: f64,
    seed: u64,
) -> Vec<Vector> {
    let domain = admissible_domain(chars);
    let mut rng = stream(seed, 0);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = feasible_probe(&mut rng, &domain, center, 2.0);
        if domain.margin(&p) >= margin {
            out.push(p);
        }
    }
    out
}
