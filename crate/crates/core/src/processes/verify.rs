//! Simulation front end and the Monte Carlo and pathwise checks.

use rand::Rng;

use crate::inequalities::{bracket_bound, delta_grid, growth_lhs, growth_rhs, SLACK};
use crate::model::{
    admissible_domain, Characteristics, JumpAtom, JumpMeasure, MarketModel, Matrix, Vector,
};
use crate::objective;
use crate::sampling::{aux_stream, feasible_probe};
use crate::solver::{check_fractions, solve, SolveOptions, SolveReport};
use crate::stats::Moments;

use super::deflator::{build_deflator, perturb_triplet, validate_deflator, DeflatorParam};
use super::exponential::{ExponentProcess, LinearExponent};
use super::paths::{reduce_paths, PathSampler, ScenarioPath, TimeGrid};
use super::ProcessError;

/// Standard errors allowed in every Monte Carlo comparison.
pub const SE_SLACK: f64 = 3.0;
/// Relative tolerance of the pathwise identities.
pub const PATHWISE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub steps_per_unit: f64,
    pub seed: u64,
    /// Paths kept in full for pathwise audits.
    pub n_audit: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            steps_per_unit: 250.0,
            seed: 42,
            n_audit: 1000,
        }
    }
}

impl SimConfig {
    fn check(&self) -> Result<(), ProcessError> {
        if self.n_paths == 0 {
            return Err(ProcessError::InvalidConfig(
                "path count must be positive".into(),
            ));
        }
        if !(self.steps_per_unit > 0.0 && self.steps_per_unit.is_finite()) {
            return Err(ProcessError::InvalidConfig(
                "steps per unit time must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn wealth_exponents(model: &MarketModel, phi: &[Vector]) -> Vec<LinearExponent> {
    model
        .segments()
        .iter()
        .zip(phi)
        .map(|(s, p)| LinearExponent::wealth(&s.chars, p))
        .collect()
}

fn wealth_process(model: &MarketModel, phi: &[Vector]) -> Result<ExponentProcess, ProcessError> {
    check_fractions(model, phi).map_err(|e| match e {
        crate::solver::SolveError::Infeasible(k) => {
            let atom = model.segments()[k]
                .chars
                .jumps
                .charged()
                .find(|(_, a)| !(1.0 + phi[k].dot(&a.x) > 0.0))
                .map_or(0, |(i, _)| i);
            ProcessError::DomainViolation { segment: k, atom }
        }
        other => ProcessError::Solve(other),
    })?;
    ExponentProcess::new(model, &wealth_exponents(model, phi))
}

/// Generates each path once, evaluates all exponents on it and folds.
fn accumulate<A, I, F>(
    model: &MarketModel,
    grid: &TimeGrid,
    cfg: &SimConfig,
    exps: &[&ExponentProcess],
    init: I,
    fold: F,
    merge: impl Fn(&mut A, A),
) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &ScenarioPath, &[Vec<f64>]) + Sync,
{
    let sampler = PathSampler::new(model, grid, cfg.seed);
    reduce_paths(
        cfg.n_paths,
        init,
        |acc, i| {
            let path = sampler.path(i);
            let logs: Vec<Vec<f64>> = exps.iter().map(|e| e.log_path(grid, &path)).collect();
            fold(acc, &path, &logs);
        },
        merge,
    )
}

fn merge_all(a: &mut [Moments], b: &[Moments]) {
    for (x, y) in a.iter_mut().zip(b) {
        x.merge(y);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub t: f64,
    pub wealth: Moments,
    pub deflator: Option<Moments>,
    pub product: Option<Moments>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditPath {
    pub path: ScenarioPath,
    pub log_wealth: Vec<f64>,
    pub log_deflator: Option<Vec<f64>>,
}

impl AuditPath {
    pub fn wealth(&self) -> Vec<f64> {
        self.log_wealth.iter().map(|l| l.exp()).collect()
    }

    pub fn deflator(&self) -> Option<Vec<f64>> {
        self.log_deflator
            .as_ref()
            .map(|z| z.iter().map(|l| l.exp()).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub phi: Vec<Vector>,
    pub rows: Vec<GridRow>,
    /// Terminal `ln E(φ·X)_T` over all paths.
    pub log_wealth_t: Moments,
    pub log_deflator_t: Option<Moments>,
    pub audit: Vec<AuditPath>,
    pub min_wealth: f64,
    pub min_deflator: Option<f64>,
    pub seed: u64,
    pub n_paths: usize,
}

struct BundleAcc {
    wealth: Vec<Moments>,
    deflator: Vec<Moments>,
    product: Vec<Moments>,
    log_w: Moments,
    log_z: Moments,
    min_w: f64,
    min_z: f64,
    audit: Vec<AuditPath>,
}

/// Simulates `E(φ·X)` and, when given, the deflator on the same paths.
pub fn simulate(
    model: &MarketModel,
    phi: &[Vector],
    deflator: Option<&DeflatorParam>,
    cfg: &SimConfig,
) -> Result<PathBundle, ProcessError> {
    cfg.check()?;
    let grid = TimeGrid::new(model, cfg.steps_per_unit);
    let wealth = wealth_process(model, phi)?;
    let defl = deflator
        .map(|p| ExponentProcess::new(model, &p.exponents(model)))
        .transpose()?;
    let mut exps = vec![&wealth];
    exps.extend(defl.as_ref());
    let n = grid.len();
    let has_z = defl.is_some();
    let init = || BundleAcc {
        wealth: vec![Moments::new(); n],
        deflator: vec![Moments::new(); if has_z { n } else { 0 }],
        product: vec![Moments::new(); if has_z { n } else { 0 }],
        log_w: Moments::new(),
        log_z: Moments::new(),
        min_w: f64::INFINITY,
        min_z: f64::INFINITY,
        audit: Vec::new(),
    };
    let acc = accumulate(
        model,
        &grid,
        cfg,
        &exps,
        init,
        |a, path, logs| {
            let lw = &logs[0];
            for (k, l) in lw.iter().enumerate() {
                let w = l.exp();
                a.min_w = a.min_w.min(w);
                a.wealth[k].push(w);
            }
            a.log_w.push(lw[n - 1]);
            if let Some(lz) = logs.get(1) {
                for k in 0..n {
                    let z = lz[k].exp();
                    a.min_z = a.min_z.min(z);
                    a.deflator[k].push(z);
                    a.product[k].push((lz[k] + lw[k]).exp());
                }
                a.log_z.push(lz[n - 1]);
            }
            if (path.index as usize) < cfg.n_audit {
                a.audit.push(AuditPath {
                    path: path.clone(),
                    log_wealth: lw.clone(),
                    log_deflator: logs.get(1).cloned(),
                });
            }
        },
        |a, b| {
            merge_all(&mut a.wealth, &b.wealth);
            merge_all(&mut a.deflator, &b.deflator);
            merge_all(&mut a.product, &b.product);
            a.log_w.merge(&b.log_w);
            a.log_z.merge(&b.log_z);
            a.min_w = a.min_w.min(b.min_w);
            a.min_z = a.min_z.min(b.min_z);
            a.audit.extend(b.audit);
        },
    );
    let rows = (0..n)
        .map(|k| GridRow {
            t: grid.points[k],
            wealth: acc.wealth[k],
            deflator: has_z.then(|| acc.deflator[k]),
            product: has_z.then(|| acc.product[k]),
        })
        .collect();
    Ok(PathBundle {
        grid,
        phi: phi.to_vec(),
        rows,
        log_wealth_t: acc.log_w,
        log_deflator_t: has_z.then_some(acc.log_z),
        audit: acc.audit,
        min_wealth: acc.min_w,
        min_deflator: has_z.then_some(acc.min_z),
        seed: cfg.seed,
        n_paths: cfg.n_paths,
    })
}

/// `E[ln E(φ·X)_T] = −Σ Δt·L(φ)`.
pub fn expected_log_wealth(model: &MarketModel, phi: &[Vector]) -> f64 {
    model
        .segments()
        .iter()
        .zip(model.spans())
        .zip(phi)
        .map(|((s, (a, b)), p)| -(b - a) * objective::value(&s.chars, p))
        .sum()
}

/// Largest `|Z·E(φ·X) − 1|` over the audit paths and grid points.
pub fn pathwise_inverse_error(bundle: &PathBundle) -> f64 {
    bundle
        .audit
        .iter()
        .filter_map(|a| {
            a.log_deflator.as_ref().map(|z| {
                z.iter()
                    .zip(&a.log_wealth)
                    .map(|(lz, lw)| (lz + lw).exp_m1().abs())
                    .fold(0.0, f64::max)
            })
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McComparison {
    pub label: String,
    pub mc_mean: f64,
    pub std_error: f64,
    pub reference: f64,
    pub passed: bool,
}

impl McComparison {
    fn within(label: impl Into<String>, m: &Moments, reference: f64) -> Self {
        let diff = (m.mean() - reference).abs();
        Self {
            label: label.into(),
            mc_mean: m.mean(),
            std_error: m.std_error(),
            reference,
            passed: diff <= SE_SLACK * m.std_error() + 1e-12 * reference.abs().max(1.0),
        }
    }

    fn at_most(label: impl Into<String>, m: &Moments, bound: f64) -> Self {
        Self {
            label: label.into(),
            mc_mean: m.mean(),
            std_error: m.std_error(),
            reference: bound,
            passed: m.mean() <= bound + SE_SLACK * m.std_error() + 1e-12 * bound.abs().max(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualCheck {
    pub log_value: f64,
    pub valid: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    pub optimal_value: f64,
    pub pathwise_error: f64,
    pub log_identity_error: f64,
    pub yor_error: f64,
    pub analytic: McComparison,
    pub primal: Vec<McComparison>,
    pub dual: Vec<DualCheck>,
    pub passed: bool,
}

/// Feasible fractions near `phi`, one per segment, `n` sets.
pub fn perturbed_fractions(
    model: &MarketModel,
    phi: &[Vector],
    n: usize,
    scale: f64,
    seed: u64,
) -> Vec<Vec<Vector>> {
    let mut rng = aux_stream(seed, 5);
    (0..n)
        .map(|_| {
            model
                .segments()
                .iter()
                .zip(phi)
                .map(|(s, p)| {
                    let domain = admissible_domain(&s.chars);
                    let u = crate::sampling::unit_direction(&mut rng, p.len());
                    let r = scale * p.norm().max(1.0) * (0.5 + 0.5 * rng.random::<f64>());
                    let reach = 0.9 * domain.max_step(p, &u);
                    p + u * r.min(reach)
                })
                .collect()
        })
        .collect()
}

/// Checks the pathwise inverse, the analytic expected log-wealth, and the
/// primal and dual optimality gaps.
pub fn verify_duality(
    model: &MarketModel,
    report: &SolveReport,
    cfg: &SimConfig,
    n_perturb: usize,
) -> Result<DualityReport, ProcessError> {
    cfg.check()?;
    let deflator = build_deflator(model, report)?;
    let phi = report.phis();
    let optimal_value = report.optimal_log_wealth();
    let grid = TimeGrid::new(model, cfg.steps_per_unit);
    let wealth = wealth_process(model, &phi)?;
    let defl = ExponentProcess::new(model, &deflator.exponents(model))?;
    let perturbed = perturbed_fractions(model, &phi, n_perturb, 0.1, cfg.seed);
    let others = perturbed
        .iter()
        .map(|p| wealth_process(model, p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut exps = vec![&wealth, &defl];
    exps.extend(others.iter());

    struct Acc {
        pathwise: f64,
        log_identity: f64,
        log_w: Vec<Moments>,
    }
    let n = grid.len();
    let acc = accumulate(
        model,
        &grid,
        cfg,
        &exps,
        || Acc {
            pathwise: 0.0,
            log_identity: 0.0,
            log_w: vec![Moments::new(); 1 + n_perturb],
        },
        |a, path, logs| {
            let (lw, lz) = (&logs[0], &logs[1]);
            if (path.index as usize) < cfg.n_audit {
                for k in 0..n {
                    a.pathwise = a.pathwise.max((lz[k].exp() * lw[k].exp() - 1.0).abs());
                }
                a.log_identity = a.log_identity.max((lz[n - 1] + lw[n - 1]).abs());
            }
            a.log_w[0].push(lw[n - 1]);
            for (j, l) in logs[2..].iter().enumerate() {
                a.log_w[j + 1].push(l[n - 1]);
            }
        },
        |a, b| {
            a.pathwise = a.pathwise.max(b.pathwise);
            a.log_identity = a.log_identity.max(b.log_identity);
            merge_all(&mut a.log_w, &b.log_w);
        },
    );

    let analytic = McComparison::within("optimal", &acc.log_w[0], optimal_value);
    let primal: Vec<McComparison> = acc.log_w[1..]
        .iter()
        .enumerate()
        .map(|(j, m)| McComparison::at_most(format!("perturbed-{j}"), m, optimal_value))
        .collect();

    let mut rng = aux_stream(cfg.seed, 6);
    let mut dual = Vec::with_capacity(n_perturb);
    for _ in 0..n_perturb {
        let triplets = model
            .segments()
            .iter()
            .zip(&deflator.segments)
            .map(|(s, t)| perturb_triplet(&s.chars, t, 0.05, &mut rng))
            .collect();
        let p = DeflatorParam::new(model, triplets)?;
        let valid = validate_deflator(model, &p, 50, cfg.seed)?.valid;
        let tol = 1e-10 * optimal_value.abs().max(1.0);
        dual.push(DualCheck {
            log_value: p.log_value,
            valid,
            passed: valid && p.log_value >= optimal_value - tol,
        });
    }

    let yor_error = yor_check(
        model,
        &phi,
        &deflator,
        &SimConfig {
            n_paths: cfg.n_audit.clamp(1, cfg.n_paths),
            ..cfg.clone()
        },
    )?;
    let passed = acc.pathwise <= PATHWISE_TOL
        && acc.log_identity <= 1e-10 * optimal_value.abs().max(1.0)
        && yor_error <= PATHWISE_TOL
        && analytic.passed
        && primal.iter().all(|c| c.passed)
        && dual.iter().all(|c| c.passed);
    Ok(DualityReport {
        optimal_value,
        pathwise_error: acc.pathwise,
        log_identity_error: acc.log_identity,
        yor_error,
        analytic,
        primal,
        dual,
        passed,
    })
}

/// Largest relative gap at `T` between `E(U)·E(V)` and `E(U + V + [U, V])`
/// for `U = φ·X` and `V` the deflator's exponent.
pub fn yor_check(
    model: &MarketModel,
    phi: &[Vector],
    deflator: &DeflatorParam,
    cfg: &SimConfig,
) -> Result<f64, ProcessError> {
    cfg.check()?;
    let grid = TimeGrid::new(model, cfg.steps_per_unit);
    let u = wealth_exponents(model, phi);
    let v = deflator.exponents(model);
    let y: Vec<LinearExponent> = model
        .segments()
        .iter()
        .zip(u.iter().zip(&v))
        .map(|(s, (a, b))| a.yor(b, &s.chars))
        .collect();
    let (pu, pv, py) = (
        wealth_process(model, phi)?,
        ExponentProcess::new(model, &v)?,
        ExponentProcess::new(model, &y)?,
    );
    let last = grid.len() - 1;
    Ok(accumulate(
        model,
        &grid,
        cfg,
        &[&pu, &pv, &py],
        || 0.0f64,
        |a, _, logs| {
            let lhs = logs[0][last].exp() * logs[1][last].exp();
            let rhs = logs[2][last].exp();
            *a = a.max((lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE));
        },
        |a, b| *a = a.max(b),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupermartingaleSeries {
    pub phi: Vec<Vector>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `exp(∫ r)` with `r` the exact drift rate of the product.
    pub analytic: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupermartingaleReport {
    pub times: Vec<f64>,
    /// Product with the optimal wealth; must be exactly 1.
    pub optimal: SupermartingaleSeries,
    pub optimal_max_error: f64,
    pub series: Vec<SupermartingaleSeries>,
    pub passed: bool,
}

/// Estimates `E[Z̃_t·E(φ·X)_t]` on a grid of `checkpoints` steps for each
/// test fraction and checks that the means do not increase beyond
/// `3·SE` and stay below `1 + 3·SE`.
pub fn check_supermartingale(
    model: &MarketModel,
    report: &SolveReport,
    test_phis: &[Vec<Vector>],
    cfg: &SimConfig,
    checkpoints: usize,
) -> Result<SupermartingaleReport, ProcessError> {
    cfg.check()?;
    let deflator = build_deflator(model, report)?;
    let grid = TimeGrid::new(model, checkpoints.max(1) as f64 / model.horizon());
    let defl = ExponentProcess::new(model, &deflator.exponents(model))?;
    let mut all = vec![report.phis()];
    all.extend(test_phis.iter().cloned());
    let wealth = all
        .iter()
        .map(|p| wealth_process(model, p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut exps = vec![&defl];
    exps.extend(wealth.iter());
    let n = grid.len();
    let acc = accumulate(
        model,
        &grid,
        cfg,
        &exps,
        || vec![vec![Moments::new(); n]; all.len()],
        |a, _, logs| {
            for (j, lw) in logs[1..].iter().enumerate() {
                for k in 0..n {
                    a[j][k].push((logs[0][k] + lw[k]).exp());
                }
            }
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(&b) {
                merge_all(x, y);
            }
        },
    );

    let analytic = |phi: &[Vector]| -> Vec<f64> {
        let rates: Vec<f64> = model
            .segments()
            .iter()
            .zip(phi)
            .zip(&deflator.segments)
            .map(|((s, p), t)| {
                LinearExponent::wealth(&s.chars, p)
                    .yor(&t.exponent(&s.chars), &s.chars)
                    .expected_growth_rate(&s.chars)
            })
            .collect();
        let mut acc = 0.0;
        let mut out = vec![1.0];
        for k in 1..n {
            acc += rates[grid.step_segment(k)] * grid.dt(k);
            out.push(acc.exp());
        }
        out
    };
    let series: Vec<SupermartingaleSeries> = all
        .iter()
        .zip(&acc)
        .map(|(phi, ms)| {
            let means: Vec<f64> = ms.iter().map(|m| m.mean()).collect();
            let ses: Vec<f64> = ms.iter().map(|m| m.std_error()).collect();
            let passed = (1..n).all(|k| {
                let slack = SE_SLACK * ses[k] + 1e-12;
                means[k] <= means[k - 1] + slack && means[k] <= 1.0 + slack
            });
            SupermartingaleSeries {
                phi: phi.clone(),
                analytic: analytic(phi),
                means,
                std_errors: ses,
                passed,
            }
        })
        .collect();
    let mut series = series.into_iter();
    let optimal = series.next().expect("optimal series");
    let series: Vec<_> = series.collect();
    let optimal_max_error = acc[0]
        .iter()
        .map(|m| (m.mean() - 1.0).abs())
        .fold(0.0, f64::max);
    let passed = optimal_max_error <= PATHWISE_TOL && series.iter().all(|s| s.passed);
    Ok(SupermartingaleReport {
        times: grid.points.clone(),
        optimal,
        optimal_max_error,
        series,
        passed,
    })
}

/// Seeded admissible test fractions around the optimum.
pub fn test_portfolios(
    model: &MarketModel,
    phi: &[Vector],
    n: usize,
    seed: u64,
) -> Vec<Vec<Vector>> {
    let mut rng = aux_stream(seed, 7);
    (0..n)
        .map(|_| {
            model
                .segments()
                .iter()
                .zip(phi)
                .map(|(s, p)| {
                    feasible_probe(&mut rng, &admissible_domain(&s.chars), p, p.norm().max(1.0))
                })
                .collect()
        })
        .collect()
}

fn neumaier_add(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// Holdings `θ_k = φ·W_{k−1}` and gains `G = Σ ΔW` on the audit paths;
/// returns the largest relative error of `θ_k/(1 + G_{k−1})` against `φ`.
pub fn holdings_round_trip(bundle: &PathBundle) -> f64 {
    let mut worst: f64 = 0.0;
    for a in &bundle.audit {
        let w = a.wealth();
        let (mut g, mut comp) = (0.0, 0.0);
        for k in 1..w.len() {
            let phi = &bundle.phi[bundle.grid.step_segment(k)];
            let theta = phi * w[k - 1];
            let rec = theta / (1.0 + g + comp);
            worst = worst.max((rec - phi).norm() / phi.norm().max(1.0));
            neumaier_add(&mut g, &mut comp, w[k] - w[k - 1]);
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LemmaA1Report {
    pub cases: usize,
    pub paths: usize,
    pub jumps: usize,
    pub bracket_violations: usize,
    pub growth_violations: usize,
    pub passed: bool,
}

impl LemmaA1Report {
    fn absorb(&mut self, other: LemmaA1Report) {
        self.paths += other.paths;
        self.jumps += other.jumps;
        self.bracket_violations += other.bracket_violations;
        self.growth_violations += other.growth_violations;
    }
}

/// Bracket bound for `K = β·Xᶜ + (f − 1)⋆(μ − ν)` with `δ = 0.5`, and the
/// growth bound at `y = φ̃ᵀΔX = 1/f − 1` on every jump, over the audit paths.
pub fn lemma_a1_on_paths(
    model: &MarketModel,
    deflator: &DeflatorParam,
    bundle: &PathBundle,
) -> LemmaA1Report {
    let qv: f64 = model
        .segments()
        .iter()
        .zip(model.spans())
        .zip(&deflator.segments)
        .map(|((s, (a, b)), t)| (b - a) * t.beta.dot(&(&s.chars.c * &t.beta)))
        .sum();
    let mut r = LemmaA1Report {
        cases: 1,
        ..Default::default()
    };
    for a in &bundle.audit {
        r.paths += 1;
        let jumps: Vec<f64> = a
            .path
            .jumps
            .iter()
            .map(|j| deflator.segments[bundle.grid.step_segment(j.step)].f_values[j.atom] - 1.0)
            .collect();
        let (lhs, rhs) = bracket_bound(qv, &jumps, 0.5);
        if lhs > rhs + SLACK {
            r.bracket_violations += 1;
        }
        for dk in &jumps {
            r.jumps += 1;
            let y = 1.0 / (1.0 + dk) - 1.0;
            if delta_grid()
                .iter()
                .any(|&d| growth_lhs(y) < growth_rhs(y, d) - SLACK)
            {
                r.growth_violations += 1;
            }
        }
    }
    r.passed = r.bracket_violations == 0 && r.growth_violations == 0;
    r
}

/// Random seeded models with diffusion and mixed small and large atoms,
/// each solved and simulated, then checked with [`lemma_a1_on_paths`].
pub fn lemma_a1_oracle(n_cases: usize, seed: u64) -> Result<LemmaA1Report, ProcessError> {
    let mut rng = aux_stream(seed, 8);
    let mut total = LemmaA1Report::default();
    for case in 0..n_cases {
        let d = 1 + case % 2;
        let b = Vector::from_fn(d, |_, _| rng.random_range(-0.2..0.2));
        let c = Matrix::from_diagonal(&Vector::from_fn(d, |_, _| rng.random_range(0.01..0.1)));
        let atoms = (0..3)
            .map(|_| {
                let x = Vector::from_fn(d, |_, _| {
                    let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    if rng.random::<f64>() < 0.3 {
                        s * rng.random_range(1.2..2.0)
                    } else {
                        s * rng.random_range(0.05..0.8)
                    }
                });
                JumpAtom::new(x, rng.random_range(0.2..2.0))
            })
            .collect();
        let chars = Characteristics::new(b, c, JumpMeasure::new(atoms)).expect("finite");
        let model = MarketModel::constant(chars, 1.0);
        let report = solve(
            &model,
            &SolveOptions {
                seed,
                ..Default::default()
            },
        )?;
        let deflator = build_deflator(&model, &report)?;
        let cfg = SimConfig {
            n_paths: 200,
            steps_per_unit: 10.0,
            seed: seed.wrapping_add(case as u64),
            n_audit: 200,
        };
        let bundle = simulate(&model, &report.phis(), Some(&deflator), &cfg)?;
        total.absorb(lemma_a1_on_paths(&model, &deflator, &bundle));
        total.cases += 1;
    }
    total.passed = total.bracket_violations == 0 && total.growth_violations == 0;
    Ok(total)
}
