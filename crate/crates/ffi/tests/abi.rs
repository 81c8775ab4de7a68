use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use ge_ffi::*;

fn fixture(name: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../core/fixtures/{name}.toml"));
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = ge_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(name: &str) -> *mut GeModel {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { ge_model_load(fixture(name).as_ptr(), &mut m) },
        GeStatus::Ok
    );
    m
}

#[test]
fn merton_round_trip() {
    let m = load("merton");
    let (mut d, mut k) = (0, 0);
    unsafe {
        assert_eq!(ge_model_shape(m, &mut d, &mut k), GeStatus::Ok);
        assert_eq!((d, k), (1, 1));
        let mut s = ptr::null_mut();
        assert_eq!(ge_solve(m, ptr::null(), &mut s), GeStatus::Ok);
        assert!(ge_last_error().is_null());
        let mut phi = [0.0];
        assert_eq!(
            ge_solution_fraction(s, 0, phi.as_mut_ptr(), 1),
            GeStatus::Ok
        );
        assert!((phi[0] - 2.0).abs() < 1e-9);
        let mut v = 0.0;
        assert_eq!(ge_solution_log_wealth(s, &mut v), GeStatus::Ok);
        // b²/(2c)
        assert!((v - 0.08).abs() < 1e-12);
        let mut sum = GeSimSummary::default();
        assert_eq!(ge_simulate(m, s, 20_000, 50.0, 7, &mut sum), GeStatus::Ok);
        assert_eq!(sum.n_paths, 20_000);
        assert!((sum.mean_log_wealth - 0.08).abs() <= 4.0 * sum.log_wealth_std_error);
        assert!((sum.mean_product - 1.0).abs() <= 4.0 * sum.product_std_error + 1e-12);
        assert!(sum.min_wealth > 0.0 && sum.min_deflator > 0.0);
        ge_solution_free(s);
        ge_model_free(m);
    }
}

#[test]
fn objective_values_and_gradient() {
    let m = load("two-atom");
    let l = [3.0];
    let (mut v, mut g) = (0.0, [f64::NAN]);
    unsafe {
        assert_eq!(
            ge_objective(m, 0, l.as_ptr(), 1, 1.0, &mut v, g.as_mut_ptr()),
            GeStatus::Ok
        );
        assert_eq!(v, f64::INFINITY);
        assert!(g[0].is_nan());
        let l = [0.0];
        assert_eq!(
            ge_objective(m, 0, l.as_ptr(), 1, 1.0, &mut v, g.as_mut_ptr()),
            GeStatus::Ok
        );
        assert_eq!(v, 0.0);
        assert!((g[0] + 0.1).abs() < 1e-15);
        assert_eq!(
            ge_objective(m, 0, l.as_ptr(), 1, 0.5, &mut v, ptr::null_mut()),
            GeStatus::Ok
        );
        assert_eq!(
            ge_objective(m, 0, l.as_ptr(), 1, 1.5, &mut v, ptr::null_mut()),
            GeStatus::InvalidArgument
        );
        assert_eq!(
            ge_objective(m, 0, l.as_ptr(), 2, 1.0, &mut v, ptr::null_mut()),
            GeStatus::InvalidArgument
        );
        assert!(last_error().contains("length 2"));
        assert_eq!(
            ge_objective(m, 3, l.as_ptr(), 1, 1.0, &mut v, ptr::null_mut()),
            GeStatus::InvalidArgument
        );
        ge_model_free(m);
    }
}

#[test]
fn failures_map_to_status_codes() {
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(ge_model_load(ptr::null(), &mut m), GeStatus::NullArgument);
        assert!(last_error().contains("path"));
        assert_eq!(
            ge_model_load(fixture("zero-atom").as_ptr(), &mut m),
            GeStatus::InvalidModel
        );
        assert!(last_error().contains("atom 0"));
        let bad = CString::new("dim = 2\nhorizon = 1.0\nb = [0.1]\n").unwrap();
        assert_eq!(ge_model_parse(bad.as_ptr(), &mut m), GeStatus::ParseError);
        assert!(last_error().starts_with("<memory>:3:5:"));
        assert!(m.is_null());

        let m = load("free-lunch");
        let mut s = ptr::null_mut();
        assert_eq!(ge_solve(m, ptr::null(), &mut s), GeStatus::NotAttained);
        assert!(last_error().contains("minimum not attained"));
        assert!(s.is_null());
        assert_eq!(
            ge_solve(ptr::null(), ptr::null(), &mut s),
            GeStatus::NullArgument
        );
        ge_model_free(m);
        ge_model_free(ptr::null_mut());
        ge_solution_free(ptr::null_mut());
    }
}

#[test]
fn options_and_mismatched_handles() {
    let regimes = load("two-asset-regimes");
    let merton = load("merton");
    let mut o = ge_solve_options_default();
    assert_eq!(o.seed, 42);
    o.force_continuation = true;
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(ge_solve(regimes, &o, &mut s), GeStatus::Ok);
        let mut phi = [0.0; 2];
        assert_eq!(
            ge_solution_fraction(s, 1, phi.as_mut_ptr(), 2),
            GeStatus::Ok
        );
        assert!(phi.iter().all(|p| p.is_finite()));
        let mut sum = GeSimSummary::default();
        assert_eq!(
            ge_simulate(merton, s, 10, 10.0, 1, &mut sum),
            GeStatus::InvalidArgument
        );
        assert_eq!(
            ge_simulate(regimes, s, 0, 10.0, 1, &mut sum),
            GeStatus::InvalidArgument
        );
        ge_solution_free(s);
    }
    unsafe {
        ge_model_free(regimes);
        ge_model_free(merton);
    }
}

#[test]
fn errors_are_thread_local() {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { ge_model_load(ptr::null(), &mut m) },
        GeStatus::NullArgument
    );
    std::thread::spawn(|| assert!(ge_last_error().is_null()))
        .join()
        .unwrap();
    assert!(!ge_last_error().is_null());
}
