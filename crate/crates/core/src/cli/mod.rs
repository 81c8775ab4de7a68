//! Batch front end behind the `ge` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::geometry::{self, RecessionReport};
use crate::model::{validate_model, MarketModel, ValidationReport, Vector};
use crate::objective;
use crate::processes::verify::{
    expected_log_wealth, lemma_a1_on_paths, pathwise_inverse_error, test_portfolios, DualityReport,
    SupermartingaleReport,
};
use crate::processes::{
    build_deflator, check_supermartingale, holdings_round_trip, naive_deflator, simulate,
    validate_deflator, verify_duality, PathBundle, SimConfig,
};
use crate::solver::{solve, SolveError, SolveOptions, SolveReport};

pub mod model_file;
pub mod report;

use model_file::load_model;
use report::{vector_cells, Cell, Document, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    VerificationFailed = 1,
    InputError = 2,
    NotAttained = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Text,
    Table,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Check the model file and the characteristics it describes.
    Validate,
    /// Evaluate L (or its smoothed version) at a fraction.
    Eval {
        /// Comma-separated fraction components.
        #[arg(long, allow_hyphen_values = true)]
        lambda: String,
        /// Smoothing level in (0, 1).
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 0)]
        segment: usize,
    },
    /// Minimize L on every segment.
    Solve {
        /// Always warm-start through the smoothing ladder.
        #[arg(long)]
        force_continuation: bool,
    },
    /// Recession directions and the attainment certificate.
    AnalyzeRecession {
        /// Sampled directions on the sphere.
        #[arg(long, default_value_t = 256)]
        directions: usize,
    },
    /// Simulate wealth and deflator paths.
    Simulate {
        /// Fraction per segment: components separated by ',', segments by ';'.
        /// Defaults to the optimal fraction.
        #[arg(long, allow_hyphen_values = true)]
        phi: Option<String>,
        /// Write every grid point of the first N paths.
        #[arg(long)]
        dump_paths: Option<usize>,
    },
    /// Optimality, duality and supermartingale checks.
    Verify {
        #[arg(long, default_value_t = 10)]
        checkpoints: usize,
        /// Perturbed fractions and deflators per gap check.
        #[arg(long, default_value_t = 10)]
        perturbations: usize,
        /// Random test portfolios for the supermartingale battery.
        #[arg(long, default_value_t = 10)]
        portfolios: usize,
    },
    /// Every stage end to end with a summary verdict.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Eval { .. } => "eval",
            Command::Solve { .. } => "solve",
            Command::AnalyzeRecession { .. } => "analyze-recession",
            Command::Simulate { .. } => "simulate",
            Command::Verify { .. } => "verify",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct GlobalArgs {
    /// Model file (TOML).
    #[arg(long, global = true, env = "GE_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long, global = true, env = "GE_SEED", default_value_t = 42)]
    pub seed: u64,
    /// Monte Carlo paths.
    #[arg(long, global = true, env = "GE_PATHS", default_value_t = 100_000)]
    pub paths: usize,
    /// Time steps per unit time.
    #[arg(long, global = true, env = "GE_STEPS", default_value_t = 250)]
    pub steps: usize,
    /// Random probes for first-order and deflator checks.
    #[arg(long, global = true, env = "GE_PROBES", default_value_t = 64)]
    pub probes: usize,
    /// Solver tolerance.
    #[arg(long, global = true, env = "GE_TOL", default_value_t = 1e-10)]
    pub tol: f64,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true, env = "GE_WORKERS")]
    pub workers: Option<usize>,
    /// Directory for report files.
    #[arg(long, global = true, env = "GE_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "GE_FORMAT", value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Parser)]
#[command(
    name = "ge",
    version,
    about = "Log-optimal portfolios and optimal deflators for jump-diffusion models"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub model_path: PathBuf,
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub n_probes: usize,
    pub tol: f64,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self, String> {
        let g = cli.global;
        let model_path = g.model.ok_or("--model is required")?;
        if g.paths == 0 || g.steps == 0 || g.probes == 0 {
            return Err("--paths, --steps and --probes must be positive".into());
        }
        if !(g.tol > 0.0 && g.tol.is_finite()) {
            return Err("--tol must be positive".into());
        }
        if g.workers == Some(0) {
            return Err("--workers must be positive".into());
        }
        Ok(Self {
            command: cli.command,
            model_path,
            seed: g.seed,
            n_paths: g.paths,
            n_steps: g.steps,
            n_probes: g.probes,
            tol: g.tol,
            workers: g.workers,
            output_dir: g.out,
            format: g.format,
        })
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            n_probes: self.n_probes,
            seed: self.seed,
            ..Default::default()
        }
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig {
            n_paths: self.n_paths,
            steps_per_unit: self.n_steps as f64,
            seed: self.seed,
            n_audit: 1000.min(self.n_paths),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub code: ExitCode,
    pub document: Document,
}

impl RunOutcome {
    fn new(code: ExitCode, document: Document) -> Self {
        Self { code, document }
    }

    fn input_error(title: &str, stage: &str, message: String) -> Self {
        let mut doc = Document::new(title);
        doc.push(Table::key_values(
            "error",
            vec![("stage", stage.into()), ("message", message.into())],
        ));
        doc.verdict = "INPUT-ERROR".into();
        Self::new(ExitCode::InputError, doc)
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| format!("cannot parse '{}': {e}", p.trim()))
        })
        .collect()
}

fn parse_fractions(s: &str, model: &MarketModel) -> Result<Vec<Vector>, String> {
    let parts: Vec<&str> = s.split(';').collect();
    let n = model.segments().len();
    let parts = if parts.len() == 1 {
        vec![parts[0]; n]
    } else {
        parts
    };
    if parts.len() != n {
        return Err(format!(
            "expected {n} fractions separated by ';', got {}",
            parts.len()
        ));
    }
    parts
        .iter()
        .map(|p| {
            let v = parse_list(p)?;
            if v.len() != model.dim() {
                return Err(format!(
                    "fraction has {} components, model has dim {}",
                    v.len(),
                    model.dim()
                ));
            }
            Ok(Vector::from_vec(v))
        })
        .collect()
}

fn validation_table(r: &ValidationReport) -> Table {
    let mut t = Table::new("validation", &["check", "passed", "message"]);
    for c in &r.checks {
        t.push(vec![
            c.name.as_str().into(),
            c.passed.into(),
            c.message.as_str().into(),
        ]);
    }
    t
}

fn load(cfg: &RunConfig, title: &str) -> Result<MarketModel, RunOutcome> {
    let model = load_model(&cfg.model_path)
        .map_err(|e| RunOutcome::input_error(title, "parse", e.to_string()))?;
    let v = validate_model(&model);
    if !v.usable() {
        let mut doc = Document::new(title);
        doc.push(validation_table(&v));
        doc.verdict = "INPUT-ERROR".into();
        return Err(RunOutcome::new(ExitCode::InputError, doc));
    }
    Ok(model)
}

fn recession_tables(reports: &[RecessionReport], dim: usize) -> Vec<Table> {
    let mut cols: Vec<String> = [
        "segment",
        "attained",
        "exhaustive",
        "directions_tested",
        "rc_dim",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(Table::indexed("witness", dim));
    cols.push("witness_value".into());
    let mut summary = Table::with_columns("recession", cols);
    let mut rays = Table::new("witness-ray", &["segment", "alpha", "objective"]);
    let mut basis = Table::with_columns("rc-basis", {
        let mut c = vec!["segment".to_string()];
        c.extend(Table::indexed("y", dim));
        c
    });
    let mut diag = Table::with_columns("diagnostics", {
        let mut c = vec!["segment".to_string()];
        c.extend(Table::indexed("y", dim));
        c.extend(
            [
                "curvature",
                "mass_negative",
                "mass_positive",
                "linear_part",
                "value",
                "value_opposite",
                "class",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        c
    });
    for (k, r) in reports.iter().enumerate() {
        let mut row: Vec<Cell> = vec![
            k.into(),
            r.attained.into(),
            r.exhaustive.into(),
            r.directions_tested.into(),
            r.rc_basis.len().into(),
        ];
        match &r.witness {
            Some(w) => {
                row.extend(vector_cells(&w.direction));
                row.push(w.recession_value.into());
                for &(a, v) in &w.ray {
                    rays.push(vec![k.into(), a.into(), v.into()]);
                }
            }
            None => row.extend((0..=dim).map(|_| Cell::from(""))),
        }
        summary.push(row);
        for y in &r.rc_basis {
            let mut row = vec![k.into()];
            row.extend(vector_cells(y));
            basis.push(row);
        }
        for g in &r.diagnostics {
            let mut row = vec![k.into()];
            row.extend(vector_cells(&g.direction));
            row.extend([
                g.curvature.into(),
                g.mass_negative.into(),
                g.mass_positive.into(),
                g.linear_part.into(),
                g.value.into(),
                g.value_opposite.into(),
                format!("{:?}", g.class).to_lowercase().into(),
            ]);
            diag.push(row);
        }
    }
    vec![summary, rays, basis, diag]
}

fn solve_tables(r: &SolveReport, dim: usize) -> Vec<Table> {
    let mut cols: Vec<String> = vec!["t_start".into(), "t_end".into()];
    cols.extend(Table::indexed("phi", dim));
    cols.extend(
        [
            "value",
            "grad_norm",
            "kkt_residual",
            "v_drift",
            "condi11_rate",
            "min_margin",
            "boundary",
            "iterations",
            "ladder_steps",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    let mut t = Table::with_columns("solve", cols);
    for s in &r.segments {
        let mut row: Vec<Cell> = vec![s.start.into(), s.end.into()];
        row.extend(vector_cells(&s.phi));
        row.extend([
            s.value.into(),
            s.grad_norm.into(),
            s.kkt_residual.into(),
            s.v_drift.into(),
            s.condi11_rate.into(),
            s.min_margin.into(),
            s.boundary.into(),
            s.iterations.into(),
            s.delta_ladder.len().into(),
        ]);
        t.push(row);
    }
    let summary = Table::key_values(
        "solve-summary",
        vec![
            ("horizon", r.horizon.into()),
            ("integrated_value", r.integrated_value.into()),
            ("optimal_log_wealth", r.optimal_log_wealth().into()),
            ("condi11_value", r.condi11_value.into()),
        ],
    );
    vec![t, summary]
}

fn not_attained(title: &str, model: &MarketModel, cfg: &RunConfig, err: &SolveError) -> RunOutcome {
    let mut doc = Document::new(title);
    let reports: Vec<RecessionReport> = model
        .segments()
        .iter()
        .filter_map(|s| geometry::attainment_certificate(&s.chars, 256, cfg.seed).ok())
        .collect();
    for t in recession_tables(&reports, model.dim()) {
        if t.name != "diagnostics" {
            doc.push(t);
        }
    }
    doc.verdict = match err {
        SolveError::NotAttained {
            segment, direction, ..
        } => {
            let dir: Vec<String> = direction.iter().map(|v| Cell::Num(*v).render()).collect();
            format!(
                "NON-ATTAINMENT on segment {segment} along [{}]",
                dir.join(", ")
            )
        }
        e => format!("NON-ATTAINMENT: {e}"),
    };
    RunOutcome::new(ExitCode::NotAttained, doc)
}

fn solve_or_exit(
    title: &str,
    model: &MarketModel,
    cfg: &RunConfig,
) -> Result<SolveReport, RunOutcome> {
    solve(model, &cfg.solve_options()).map_err(|e| match e {
        SolveError::NotAttained { .. } => not_attained(title, model, cfg, &e),
        SolveError::Geometry(_) => RunOutcome::input_error(title, "solve", e.to_string()),
        e => {
            let mut doc = Document::new(title);
            doc.push(Table::key_values(
                "error",
                vec![("stage", "solve".into()), ("message", e.to_string().into())],
            ));
            doc.verdict = "FAIL".into();
            RunOutcome::new(ExitCode::VerificationFailed, doc)
        }
    })
}

fn bundle_tables(model: &MarketModel, b: &PathBundle, dump: Option<usize>) -> Vec<Table> {
    let mut grid = Table::new(
        "paths-summary",
        &[
            "t",
            "mean_wealth",
            "se_wealth",
            "mean_deflator",
            "se_deflator",
            "mean_product",
            "se_product",
        ],
    );
    for r in &b.rows {
        let opt = |m: Option<crate::stats::Moments>, f: fn(&crate::stats::Moments) -> f64| {
            m.map_or(Cell::from(""), |m| Cell::Num(f(&m)))
        };
        grid.push(vec![
            r.t.into(),
            r.wealth.mean().into(),
            r.wealth.std_error().into(),
            opt(r.deflator, |m| m.mean()),
            opt(r.deflator, |m| m.std_error()),
            opt(r.product, |m| m.mean()),
            opt(r.product, |m| m.std_error()),
        ]);
    }
    let mut items = vec![
        ("paths", b.n_paths.into()),
        ("steps", b.grid.steps().into()),
        ("seed", b.seed.into()),
        ("mean_log_wealth", b.log_wealth_t.mean().into()),
        ("se_log_wealth", b.log_wealth_t.std_error().into()),
        (
            "expected_log_wealth",
            expected_log_wealth(model, &b.phi).into(),
        ),
        ("min_wealth", b.min_wealth.into()),
    ];
    if let Some(z) = b.min_deflator {
        items.push(("min_deflator", z.into()));
        items.push(("max_inverse_error", pathwise_inverse_error(b).into()));
    }
    let mut out = vec![grid, Table::key_values("simulation", items)];
    if let Some(n) = dump {
        let mut t = Table::new(
            "path-dump",
            &["path", "t", "wealth", "deflator", "jumps_so_far"],
        );
        for a in b.audit.iter().take(n) {
            let w = a.wealth();
            let z = a.deflator();
            for k in 0..b.grid.len() {
                let jumps = a.path.jumps.iter().filter(|j| j.step <= k).count();
                t.push(vec![
                    a.path.index.into(),
                    b.grid.points[k].into(),
                    w[k].into(),
                    z.as_ref().map_or(Cell::from(""), |z| Cell::Num(z[k])),
                    jumps.into(),
                ]);
            }
        }
        out.push(t);
    }
    out
}

fn check_row(t: &mut Table, name: &str, value: f64, tolerance: f64, passed: bool) {
    t.push(vec![
        name.into(),
        value.into(),
        tolerance.into(),
        passed.into(),
    ]);
}

fn duality_tables(d: &DualityReport, s: &SupermartingaleReport) -> Vec<Table> {
    let mut mc = Table::new(
        "monte-carlo",
        &["label", "mc_mean", "std_error", "reference", "passed"],
    );
    for c in std::iter::once(&d.analytic).chain(&d.primal) {
        mc.push(vec![
            c.label.as_str().into(),
            c.mc_mean.into(),
            c.std_error.into(),
            c.reference.into(),
            c.passed.into(),
        ]);
    }
    let mut dual = Table::new(
        "dual-perturbations",
        &["index", "log_value", "valid", "passed"],
    );
    for (i, c) in d.dual.iter().enumerate() {
        dual.push(vec![
            i.into(),
            c.log_value.into(),
            c.valid.into(),
            c.passed.into(),
        ]);
    }
    let mut sm = Table::new(
        "supermartingale",
        &["portfolio", "t", "mean", "std_error", "analytic", "passed"],
    );
    for (label, series) in std::iter::once(("optimal".to_string(), &s.optimal)).chain(
        s.series
            .iter()
            .enumerate()
            .map(|(i, x)| (format!("test-{i}"), x)),
    ) {
        for (k, t) in s.times.iter().enumerate() {
            sm.push(vec![
                label.as_str().into(),
                (*t).into(),
                series.means[k].into(),
                series.std_errors[k].into(),
                series.analytic[k].into(),
                series.passed.into(),
            ]);
        }
    }
    vec![mc, dual, sm]
}

struct VerifyParts {
    checks: Table,
    tables: Vec<Table>,
    passed: bool,
}

fn verify_parts(
    model: &MarketModel,
    report: &SolveReport,
    cfg: &RunConfig,
    checkpoints: usize,
    perturbations: usize,
    portfolios: usize,
) -> Result<VerifyParts, String> {
    let sim = cfg.sim_config();
    let deflator = build_deflator(model, report).map_err(|e| e.to_string())?;
    let validation =
        validate_deflator(model, &deflator, cfg.n_probes, cfg.seed).map_err(|e| e.to_string())?;
    let naive = validate_deflator(model, &naive_deflator(model), cfg.n_probes, cfg.seed)
        .map_err(|e| e.to_string())?;
    let duality = verify_duality(model, report, &sim, perturbations).map_err(|e| e.to_string())?;
    let tests = test_portfolios(model, &report.phis(), portfolios, cfg.seed);
    let sm = check_supermartingale(model, report, &tests, &sim, checkpoints)
        .map_err(|e| e.to_string())?;
    let audit = SimConfig {
        n_paths: sim.n_audit.max(1),
        ..sim.clone()
    };
    let bundle =
        simulate(model, &report.phis(), Some(&deflator), &audit).map_err(|e| e.to_string())?;
    let round_trip = holdings_round_trip(&bundle);
    let lemma = lemma_a1_on_paths(model, &deflator, &bundle);

    let value_tol = 1e-10 * report.optimal_log_wealth().abs().max(1.0);
    let kkt = report
        .segments
        .iter()
        .map(|s| s.kkt_residual)
        .fold(f64::NEG_INFINITY, f64::max);
    let identity = (report.condi11_value - report.optimal_log_wealth()).abs();
    let log_value_gap = (validation.log_value - report.optimal_log_wealth()).abs();
    let mut t = Table::new("checks", &["check", "value", "tolerance", "passed"]);
    check_row(&mut t, "first-order-residual", kkt, 1e-8, kkt <= 1e-8);
    check_row(
        &mut t,
        "integrability-identity",
        identity,
        value_tol,
        identity <= value_tol,
    );
    check_row(
        &mut t,
        "deflator-drift-excess",
        validation.max_excess,
        1e-9,
        validation.valid,
    );
    check_row(
        &mut t,
        "deflator-log-value-gap",
        log_value_gap,
        value_tol,
        log_value_gap <= value_tol,
    );
    check_row(
        &mut t,
        "pathwise-inverse",
        duality.pathwise_error,
        1e-9,
        duality.pathwise_error <= 1e-9,
    );
    check_row(
        &mut t,
        "log-identity",
        duality.log_identity_error,
        value_tol,
        duality.log_identity_error <= value_tol,
    );
    check_row(
        &mut t,
        "yor-product",
        duality.yor_error,
        1e-9,
        duality.yor_error <= 1e-9,
    );
    let mc_gap = (duality.analytic.mc_mean - duality.analytic.reference).abs();
    check_row(
        &mut t,
        "expected-log-wealth",
        mc_gap,
        3.0 * duality.analytic.std_error,
        duality.analytic.passed,
    );
    let primal_ok = duality.primal.iter().all(|c| c.passed);
    let primal_worst = duality
        .primal
        .iter()
        .map(|c| c.mc_mean - c.reference)
        .fold(f64::NEG_INFINITY, f64::max);
    check_row(&mut t, "primal-gap", primal_worst, 0.0, primal_ok);
    let dual_ok = duality.dual.iter().all(|c| c.passed);
    let dual_worst = duality
        .dual
        .iter()
        .map(|c| c.log_value - duality.optimal_value)
        .fold(f64::INFINITY, f64::min);
    check_row(&mut t, "dual-gap", dual_worst, 0.0, dual_ok);
    check_row(
        &mut t,
        "supermartingale-optimal",
        sm.optimal_max_error,
        1e-9,
        sm.optimal_max_error <= 1e-9,
    );
    let sm_ok = sm.series.iter().all(|s| s.passed);
    check_row(
        &mut t,
        "supermartingale-battery",
        sm.series.len() as f64,
        0.0,
        sm_ok,
    );
    check_row(
        &mut t,
        "holdings-round-trip",
        round_trip,
        1e-12,
        round_trip <= 1e-12,
    );
    let lemma_viol = (lemma.bracket_violations + lemma.growth_violations) as f64;
    check_row(
        &mut t,
        "bracket-and-growth-bounds",
        lemma_viol,
        0.0,
        lemma.passed,
    );
    let positivity = bundle.min_wealth > 0.0 && bundle.min_deflator.is_some_and(|z| z > 0.0);
    check_row(
        &mut t,
        "positivity",
        bundle.min_wealth.min(bundle.min_deflator.unwrap_or(0.0)),
        0.0,
        positivity,
    );

    let passed = t.rows.iter().all(|r| r[3] == Cell::Flag(true));
    let naive_table = Table::key_values(
        "naive-deflator",
        vec![
            ("max_drift_excess", naive.max_excess.into()),
            ("valid", naive.valid.into()),
        ],
    );
    let mut tables = vec![naive_table];
    tables.extend(duality_tables(&duality, &sm));
    Ok(VerifyParts {
        checks: t,
        tables,
        passed,
    })
}

/// Dispatches one subcommand; never panics on bad input.
pub fn run(cfg: &RunConfig) -> RunOutcome {
    let title = format!("ge {}", cfg.command.name());
    let model = match load(cfg, &title) {
        Ok(m) => m,
        Err(out) => return out,
    };
    let mut doc = Document::new(&title);
    match &cfg.command {
        Command::Validate => {
            doc.push(validation_table(&validate_model(&model)));
            doc.verdict = "VALID".into();
            RunOutcome::new(ExitCode::Ok, doc)
        }
        Command::Eval {
            lambda,
            delta,
            segment,
        } => {
            let Some(s) = model.segments().get(*segment) else {
                return RunOutcome::input_error(&title, "eval", format!("no segment {segment}"));
            };
            let lam = match parse_list(lambda) {
                Ok(v) => Vector::from_vec(v),
                Err(e) => return RunOutcome::input_error(&title, "eval", e),
            };
            let eval = match delta {
                Some(d) => objective::evaluate_smoothed(&s.chars, &lam, *d),
                None => objective::evaluate(&s.chars, &lam),
            };
            let e = match eval {
                Ok(e) => e,
                Err(err) => return RunOutcome::input_error(&title, "eval", err.to_string()),
            };
            let d = model.dim();
            let mut cols: Vec<String> = vec!["segment".into(), "delta".into()];
            cols.extend(Table::indexed("lambda", d));
            cols.push("value".into());
            cols.extend(Table::indexed("gradient", d));
            let mut t = Table::with_columns("eval", cols);
            let mut row: Vec<Cell> =
                vec![(*segment).into(), delta.map_or(Cell::from(""), Cell::Num)];
            row.extend(vector_cells(&lam));
            row.push(e.value.into());
            match &e.gradient {
                Some(g) => row.extend(vector_cells(g)),
                None => row.extend((0..d).map(|_| Cell::from(""))),
            }
            t.push(row);
            doc.push(t);
            if let Some(h) = &e.hessian {
                let mut ht = Table::with_columns("hessian", Table::indexed("col", d));
                for r in h.row_iter() {
                    ht.push(r.iter().map(|v| Cell::Num(*v)).collect());
                }
                doc.push(ht);
            }
            doc.verdict = if e.is_finite() { "FINITE" } else { "INFINITE" }.into();
            RunOutcome::new(ExitCode::Ok, doc)
        }
        Command::Solve { force_continuation } => {
            let opts = SolveOptions {
                force_continuation: *force_continuation,
                ..cfg.solve_options()
            };
            match solve(&model, &opts) {
                Ok(r) => {
                    for t in solve_tables(&r, model.dim()) {
                        doc.push(t);
                    }
                    doc.verdict = "OPTIMAL".into();
                    RunOutcome::new(ExitCode::Ok, doc)
                }
                Err(e @ SolveError::NotAttained { .. }) => not_attained(&title, &model, cfg, &e),
                Err(e @ SolveError::Geometry(_)) => {
                    RunOutcome::input_error(&title, "solve", e.to_string())
                }
                Err(e) => {
                    doc.push(Table::key_values(
                        "error",
                        vec![("stage", "solve".into()), ("message", e.to_string().into())],
                    ));
                    doc.verdict = "FAIL".into();
                    RunOutcome::new(ExitCode::VerificationFailed, doc)
                }
            }
        }
        Command::AnalyzeRecession { directions } => {
            let mut reports = Vec::new();
            for s in model.segments() {
                match geometry::attainment_certificate(&s.chars, *directions, cfg.seed) {
                    Ok(r) => reports.push(r),
                    Err(e) => return RunOutcome::input_error(&title, "recession", e.to_string()),
                }
            }
            for t in recession_tables(&reports, model.dim()) {
                doc.push(t);
            }
            let attained = reports.iter().all(|r| r.attained);
            doc.verdict = if attained {
                "ATTAINED"
            } else {
                "NON-ATTAINMENT"
            }
            .into();
            RunOutcome::new(
                if attained {
                    ExitCode::Ok
                } else {
                    ExitCode::NotAttained
                },
                doc,
            )
        }
        Command::Simulate { phi, dump_paths } => {
            let solved = solve(&model, &cfg.solve_options());
            let phis = match (phi, &solved) {
                (Some(p), _) => match parse_fractions(p, &model) {
                    Ok(v) => v,
                    Err(e) => return RunOutcome::input_error(&title, "simulate", e),
                },
                (None, Ok(r)) => r.phis(),
                (None, Err(e)) => return not_attained(&title, &model, cfg, e),
            };
            let deflator = solved.ok().and_then(|r| build_deflator(&model, &r).ok());
            let mut sim = cfg.sim_config();
            sim.n_audit = dump_paths.unwrap_or(0).min(sim.n_paths);
            let bundle = match simulate(&model, &phis, deflator.as_ref(), &sim) {
                Ok(b) => b,
                Err(e) => return RunOutcome::input_error(&title, "simulate", e.to_string()),
            };
            for t in bundle_tables(&model, &bundle, *dump_paths) {
                doc.push(t);
            }
            doc.verdict = "SIMULATED".into();
            RunOutcome::new(ExitCode::Ok, doc)
        }
        Command::Verify {
            checkpoints,
            perturbations,
            portfolios,
        } => {
            let report = match solve_or_exit(&title, &model, cfg) {
                Ok(r) => r,
                Err(out) => return out,
            };
            for t in solve_tables(&report, model.dim()) {
                doc.push(t);
            }
            match verify_parts(
                &model,
                &report,
                cfg,
                *checkpoints,
                *perturbations,
                *portfolios,
            ) {
                Ok(v) => {
                    doc.push(v.checks);
                    for t in v.tables {
                        doc.push(t);
                    }
                    doc.verdict = if v.passed { "PASS" } else { "FAIL" }.into();
                    RunOutcome::new(
                        if v.passed {
                            ExitCode::Ok
                        } else {
                            ExitCode::VerificationFailed
                        },
                        doc,
                    )
                }
                Err(e) => RunOutcome::input_error(&title, "verify", e),
            }
        }
        Command::Report => end_to_end_report(cfg, &model),
    }
}

/// validate → recession → solve → deflator → simulate → duality →
/// supermartingale, concatenated with a verdict line.
pub fn end_to_end_report(cfg: &RunConfig, model: &MarketModel) -> RunOutcome {
    let title = format!("ge {}", cfg.command.name());
    let mut doc = Document::new(&title);
    doc.push(validation_table(&validate_model(model)));
    let mut reports = Vec::new();
    for s in model.segments() {
        match geometry::attainment_certificate(&s.chars, 256, cfg.seed) {
            Ok(r) => reports.push(r),
            Err(e) => return RunOutcome::input_error(&title, "recession", e.to_string()),
        }
    }
    for t in recession_tables(&reports, model.dim()) {
        if t.name != "diagnostics" {
            doc.push(t);
        }
    }
    let report = match solve_or_exit(&title, model, cfg) {
        Ok(r) => r,
        Err(mut out) => {
            let mut merged = doc;
            merged.extend(std::mem::take(&mut out.document));
            merged.verdict = out.document.verdict;
            return RunOutcome::new(out.code, merged);
        }
    };
    for t in solve_tables(&report, model.dim()) {
        doc.push(t);
    }
    let deflator = match build_deflator(model, &report) {
        Ok(d) => d,
        Err(e) => return RunOutcome::input_error(&title, "deflator", e.to_string()),
    };
    let mut dt = Table::new("deflator", &["segment", "component", "value"]);
    for (k, t) in deflator.segments.iter().enumerate() {
        for (i, b) in t.beta.iter().enumerate() {
            dt.push(vec![k.into(), format!("beta_{i}").into(), (*b).into()]);
        }
        for (i, f) in t.f_values.iter().enumerate() {
            dt.push(vec![k.into(), format!("f_{i}").into(), (*f).into()]);
        }
        dt.push(vec![k.into(), "v_drift".into(), t.v_drift.into()]);
    }
    dt.push(vec![
        Cell::from(""),
        "log_value".into(),
        deflator.log_value.into(),
    ]);
    doc.push(dt);
    let mut sim = cfg.sim_config();
    sim.n_audit = 0;
    match simulate(model, &report.phis(), Some(&deflator), &sim) {
        Ok(b) => {
            for t in bundle_tables(model, &b, None) {
                doc.push(t);
            }
        }
        Err(e) => return RunOutcome::input_error(&title, "simulate", e.to_string()),
    }
    match verify_parts(model, &report, cfg, 10, 10, 10) {
        Ok(v) => {
            doc.push(v.checks);
            for t in v.tables {
                doc.push(t);
            }
            doc.verdict = if v.passed {
                format!(
                    "PASS optimal expected log-wealth {}",
                    Cell::Num(report.optimal_log_wealth()).render()
                )
            } else {
                "FAIL".into()
            };
            RunOutcome::new(
                if v.passed {
                    ExitCode::Ok
                } else {
                    ExitCode::VerificationFailed
                },
                doc,
            )
        }
        Err(e) => RunOutcome::input_error(&title, "verify", e),
    }
}

/// Parses arguments, runs on the requested number of workers, prints and
/// writes the outputs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::InputError as i32
            } else {
                0
            };
        }
    };
    let cfg = match RunConfig::from_cli(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::InputError as i32;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let outcome = match builder.build() {
        Ok(pool) => pool.install(|| run(&cfg)),
        Err(e) => {
            eprintln!("error: cannot start workers: {e}");
            return ExitCode::InputError as i32;
        }
    };
    let rendered = match cfg.format {
        Format::Text => outcome.document.to_text(),
        Format::Table => outcome.document.to_csv(),
    };
    if outcome.code == ExitCode::InputError {
        eprint!("{rendered}");
    } else {
        print!("{rendered}");
    }
    if let Some(dir) = &cfg.output_dir {
        if let Err(e) = outcome.document.write_to(dir, cfg.command.name()) {
            eprintln!("error: cannot write to {}: {e}", dir.display());
            return ExitCode::InputError as i32;
        }
    }
    outcome.code as i32
}
