mod common;

use common::{fd_gradient, gradient, interior_points, rel_error, value};
use ge_core::geometry::recession_value;
use ge_core::model::{
    admissible_domain, Characteristics, JumpAtom, JumpMeasure, MarketModel, Matrix, Vector,
};
use ge_core::objective;
use ge_core::processes::{
    build_deflator, holdings_round_trip, simulate, validate_deflator, LinearExponent, SimConfig,
};
use ge_core::solver::{condi11_evaluate, solve, SolveError, SolveOptions};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn component() -> impl Strategy<Value = f64> {
    prop_oneof![-1.5..-0.1f64, 0.1..1.5f64]
}

fn characteristics(dim: usize) -> impl Strategy<Value = Characteristics> {
    characteristics_with_floor(dim, 0.0)
}

/// `c = AAᵀ + floor·I`; a positive floor keeps the optimal fractions moderate.
fn characteristics_with_floor(dim: usize, floor: f64) -> impl Strategy<Value = Characteristics> {
    let b = prop::collection::vec(-0.5..0.5f64, dim);
    let a = prop::collection::vec(-0.5..0.5f64, dim * dim);
    let atoms = prop::collection::vec((prop::collection::vec(component(), dim), 0.1..2.0f64), 0..4);
    (b, a, atoms).prop_map(move |(b, a, atoms)| {
        let a = Matrix::from_vec(dim, dim, a);
        let c = &a * a.transpose() + Matrix::identity(dim, dim) * floor;
        let atoms = atoms
            .into_iter()
            .map(|(x, w)| JumpAtom::new(Vector::from_vec(x), w))
            .collect();
        Characteristics::new(Vector::from_vec(b), c, JumpMeasure::new(atoms)).unwrap()
    })
}

fn any_characteristics() -> impl Strategy<Value = Characteristics> {
    (1usize..=2).prop_flat_map(characteristics)
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn midpoint_convexity(ch in any_characteristics(), seed in 0u64..1000) {
        let pts = interior_points(&ch, &Vector::zeros(ch.dim()), 2, 1e-3, seed);
        let mid = (&pts[0] + &pts[1]) / 2.0;
        let (l0, l1, lm) = (value(&ch, &pts[0]), value(&ch, &pts[1]), value(&ch, &mid));
        prop_assert!(lm <= 0.5 * (l0 + l1) + 1e-12 * (l0.abs() + l1.abs()).max(1.0));
    }

    /// On the domain, `L_δ + δ·Σ_{|x|>1} w λᵀx` is non-decreasing in `δ`; the
    /// correction vanishes when every atom is small.
    #[test]
    fn smoothing_is_monotone_in_delta(ch in any_characteristics(), seed in 0u64..1000) {
        for l in interior_points(&ch, &Vector::zeros(ch.dim()), 3, 1e-3, seed) {
            let large: f64 = ch
                .jumps
                .charged()
                .filter(|(_, a)| a.x.norm() > 1.0)
                .map(|(_, a)| a.w * l.dot(&a.x))
                .sum();
            let mut prev = f64::NEG_INFINITY;
            for d in [0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.9999] {
                let v = objective::evaluate_smoothed(&ch, &l, d).unwrap().value + d * large;
                prop_assert!(v >= prev - 1e-12 * v.abs().max(1.0));
                prev = v;
            }
            prop_assert!(prev <= value(&ch, &l) + large + 1e-12 * prev.abs().max(1.0));
        }
    }

    #[test]
    fn large_atoms_break_plain_monotonicity(x in -1.5..-1.01f64, l in -0.9..-0.1f64) {
        // h(x) = 0, so f_δ = −ln(1 + δλx) falls as δ grows when λx > 0
        let ch = Characteristics::new(
            Vector::zeros(1),
            Matrix::zeros(1, 1),
            JumpMeasure::new(vec![JumpAtom::new(Vector::from_element(1, x), 1.0)]),
        )
        .unwrap();
        let l = Vector::from_element(1, l);
        let lo = objective::evaluate_smoothed(&ch, &l, 0.5).unwrap().value;
        let hi = objective::evaluate_smoothed(&ch, &l, 0.9).unwrap().value;
        prop_assert!(hi < lo);
    }

    #[test]
    fn gradient_matches_differences(ch in any_characteristics(), seed in 0u64..1000) {
        for l in interior_points(&ch, &Vector::zeros(ch.dim()), 3, 0.1, seed) {
            prop_assert!(rel_error(gradient(&ch, &l).as_slice(), fd_gradient(&ch, &l).as_slice()) < 1e-6);
        }
    }

    #[test]
    fn recession_value_is_positively_homogeneous(
        ch in any_characteristics(),
        y in prop::collection::vec(-1.0..1.0f64, 2),
        alpha in 0.1..10.0f64,
    ) {
        let y = Vector::from_iterator(ch.dim(), y.into_iter().take(ch.dim()));
        prop_assume!(y.norm() > 1e-3);
        let r1 = recession_value(&ch, &y).unwrap();
        let r2 = recession_value(&ch, &(&y * alpha)).unwrap();
        if r1.is_finite() {
            prop_assert!((r2 - alpha * r1).abs() <= 1e-9 * r2.abs().max(1.0));
        } else {
            prop_assert_eq!(r1, r2);
        }
    }

    #[test]
    fn optimum_and_deflator_are_consistent(ch in any_characteristics()) {
        let m = MarketModel::constant(ch.clone(), 1.0);
        match solve(&m, &SolveOptions::default()) {
            Ok(r) => {
                let s = &r.segments[0];
                let scale = s.value.abs().max(s.phi.norm()).max(1.0);
                prop_assert!(s.certified(1e-8), "{s:?}");
                prop_assert!(admissible_domain(&ch).contains(&s.phi));
                let v = condi11_evaluate(&m, &r.phis()).unwrap();
                prop_assert!((v - r.optimal_log_wealth()).abs() <= 1e-10 * scale);
                let z = build_deflator(&m, &r).unwrap();
                let check = validate_deflator(&m, &z, 32, 1).unwrap();
                prop_assert!(check.valid, "{:?}", check.max_excess);
                // the product with the optimal wealth has no drift and no noise
                let t = &z.segments[0];
                let prod = LinearExponent::wealth(&ch, &s.phi).yor(&t.exponent(&ch), &ch);
                prop_assert!(prod.loading.norm() < 1e-9 * s.phi.norm().max(1.0));
                prop_assert!(prod.jumps.iter().all(|j| j.abs() < 1e-12 * scale));
                prop_assert!(prod.expected_growth_rate(&ch).abs() < 1e-10 * scale);
            }
            Err(SolveError::NotAttained { direction, recession_value: rv, .. }) => {
                prop_assert!(rv <= 0.0);
                let y = Vector::from_vec(direction);
                let base = value(&ch, &Vector::zeros(ch.dim()));
                let far = value(&ch, &(&y * 1e4));
                prop_assert!(far <= base + 1e-9 * base.abs().max(1.0));
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn solve_is_bit_reproducible(ch in any_characteristics()) {
        let m = MarketModel::constant(ch, 1.0);
        let opts = SolveOptions::default();
        prop_assert_eq!(solve(&m, &opts).map_err(|e| e.to_string()), solve(&m, &opts).map_err(|e| e.to_string()));
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn simulated_paths_are_consistent(ch in characteristics_with_floor(2, 0.05), seed in 0u64..1000) {
        let m = MarketModel::constant(ch, 1.0);
        let Ok(r) = solve(&m, &SolveOptions::default()) else { return Ok(()) };
        let z = build_deflator(&m, &r).unwrap();
        let cfg = SimConfig { n_paths: 64, steps_per_unit: 20.0, seed, n_audit: 64 };
        let b = simulate(&m, &r.phis(), Some(&z), &cfg).unwrap();
        let scale = r.segments[0].value.abs().max(1.0);
        prop_assert!(ge_core::processes::verify::pathwise_inverse_error(&b) <= 1e-9 * scale);
        prop_assert!(holdings_round_trip(&b) <= 1e-12);
        prop_assert!(b.min_wealth > 0.0 && b.min_deflator.unwrap() > 0.0);
    }
}
