mod common;

use common::{fixture, value};
use ge_core::geometry::recession_value;
use ge_core::model::Vector;
use ge_core::processes::verify::{lemma_a1_oracle, SupermartingaleReport};
use ge_core::processes::{build_deflator, check_supermartingale, simulate, SimConfig};
use ge_core::solver::{condi11_evaluate, solve, solve_segment, SolveOptions};

fn sim(n_paths: usize) -> SimConfig {
    SimConfig {
        n_paths,
        n_audit: 50,
        ..Default::default()
    }
}

#[test]
fn merton_log_wealth_moments() {
    let m = fixture("merton");
    let b = simulate(&m, &[Vector::from_element(1, 2.0)], None, &sim(100_000)).unwrap();
    let lw = &b.log_wealth_t;
    // lognormal wealth: mean 2·0.08 − 2·0.04, variance 4·0.04
    assert!(
        (lw.mean() - 0.08).abs() <= 3.0 * lw.std_error(),
        "{}",
        lw.mean()
    );
    let var_se = 0.16 * (2.0 / (lw.count() as f64 - 1.0)).sqrt();
    assert!(
        (lw.variance() - 0.16).abs() <= 3.0 * var_se,
        "{}",
        lw.variance()
    );
}

#[test]
fn merton_paths_follow_the_closed_form() {
    let m = fixture("merton");
    let b = simulate(&m, &[Vector::from_element(1, 2.0)], None, &sim(50)).unwrap();
    for a in &b.audit {
        let mut w = 0.0;
        for k in 1..b.grid.len() {
            w += a.path.dw[k][0];
            let t = b.grid.points[k];
            let closed = 2.0 * 0.2 * w + (0.16 - 0.08) * t;
            assert!((a.log_wealth[k] - closed).abs() < 1e-12);
        }
    }
}

#[test]
fn one_atom_wealth_is_halved_at_each_jump() {
    let m = fixture("one-atom");
    let b = simulate(&m, &[Vector::from_element(1, 1.0)], None, &sim(20_000)).unwrap();
    for a in &b.audit {
        for k in 0..b.grid.len() {
            let t = b.grid.points[k];
            let n = a.path.jumps.iter().filter(|j| j.step <= k).count() as f64;
            let closed = n * 0.5f64.ln() + 0.5 * t;
            assert!((a.log_wealth[k] - closed).abs() < 1e-12);
        }
    }
    let w = &b.rows.last().unwrap().wealth;
    assert!(w.mean() <= 1.0 + 3.0 * w.std_error());
}

#[test]
fn two_atom_root_by_bisection() {
    let g = |p: f64| -0.1 + 0.5 - 0.5 / (1.0 + 0.5 * p) - 0.5 + 0.5 / (1.0 - 0.5 * p);
    let (mut lo, mut hi) = (-1.999, 1.999);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let m = fixture("two-atom");
    let r = solve(&m, &SolveOptions::default()).unwrap();
    assert!((r.segments[0].phi[0] - 0.5 * (lo + hi)).abs() < 1e-9);
    assert!((r.segments[0].phi[0] - 0.198039).abs() < 1e-6);
}

#[test]
fn free_lunch_recession_values() {
    let m = fixture("free-lunch");
    let ch = &m.segments()[0].chars;
    // −b + w·x on the positive ray; the negative ray leaves the domain
    assert!((recession_value(ch, &Vector::from_element(1, 1.0)).unwrap() + 0.5).abs() < 1e-12);
    assert_eq!(
        recession_value(ch, &Vector::from_element(1, -1.0)).unwrap(),
        f64::INFINITY
    );
    let l = |a: f64| value(ch, &Vector::from_element(1, a));
    assert!(((l(0.0) - l(1e4)) / 1e4 - 0.5).abs() < 1e-3);
}

#[test]
fn merton_beyond_optimum_is_a_martingale_product() {
    let m = fixture("merton");
    let r = solve(&m, &SolveOptions::default()).unwrap();
    let cfg = SimConfig {
        n_audit: 0,
        ..Default::default()
    };
    let s: SupermartingaleReport =
        check_supermartingale(&m, &r, &[vec![Vector::from_element(1, 4.0)]], &cfg, 10).unwrap();
    let four = &s.series[0];
    // 2σW − 0.08t has exponential mean one
    assert!(four.analytic.iter().all(|a| (a - 1.0).abs() < 1e-15));
    for k in 0..four.means.len() {
        assert!((four.means[k] - 1.0).abs() <= 3.0 * four.std_errors[k] + 1e-12);
    }
    assert!(s.passed);
}

#[test]
fn integrability_identity_on_regimes() {
    let m = fixture("two-asset-regimes");
    let r = solve(&m, &SolveOptions::default()).unwrap();
    let v = condi11_evaluate(&m, &r.phis()).unwrap();
    assert!((v - r.optimal_log_wealth()).abs() < 1e-12);
    let z = build_deflator(&m, &r).unwrap();
    assert!((z.log_value - r.optimal_log_wealth()).abs() < 1e-12);
}

#[test]
fn piecewise_solve_is_segmentwise() {
    let m = fixture("two-asset-regimes");
    let opts = SolveOptions::default();
    let r = solve(&m, &opts).unwrap();
    for (k, s) in m.segments().iter().enumerate() {
        let alone = solve_segment(&s.chars, k, &opts).unwrap();
        assert_eq!(alone.phi, r.segments[k].phi);
    }
}

#[test]
fn bracket_and_growth_bounds_on_random_models() {
    let rep = lemma_a1_oracle(20, 8).unwrap();
    assert!(rep.passed, "{rep:?}");
    assert!(rep.jumps > 0);
}
