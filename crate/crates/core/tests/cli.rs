mod common;

use std::fs;
use std::process::{Command, Output};

use clap::Parser;
use common::fixture_path;
use ge_core::cli::{main_with_args, Cli, Command as Sub, RunConfig};

fn ge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ge"))
        .args(args)
        .output()
        .expect("run ge")
}

fn ge_on(fixture: &str, args: &[&str]) -> Output {
    let path = fixture_path(fixture);
    let mut all = vec!["--model", path.to_str().unwrap()];
    all.extend_from_slice(args);
    ge(&all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_accepts_fixtures() {
    for name in common::FIXTURES {
        let o = ge_on(name, &["validate"]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(stdout(&o).contains("verdict: VALID"));
    }
}

#[test]
fn zero_atom_is_an_input_error() {
    let o = ge_on("zero-atom", &["validate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("violated by atom 0"));
}

#[test]
fn parse_errors_report_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "dim = 2\nhorizon = 1.0\nb = [0.1]\n").unwrap();
    let o = ge(&["--model", p.to_str().unwrap(), "solve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.toml:3:5:"));
}

#[test]
fn missing_model_and_bad_flags() {
    assert_eq!(ge(&["solve"]).status.code(), Some(2));
    let path = fixture_path("merton");
    let m = path.to_str().unwrap();
    assert_eq!(
        ge(&["--model", m, "--paths", "0", "simulate"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(ge(&["--model", m, "frobnicate"]).status.code(), Some(2));
    assert_eq!(
        ge(&["--model", m, "eval", "--lambda", "1,2"]).status.code(),
        Some(2)
    );
}

#[test]
fn solve_merton_prints_closed_form() {
    let o = ge_on("merton", &["--format", "table", "solve"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let row = out.lines().skip_while(|l| *l != "# solve").nth(2).unwrap();
    let phi: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((phi - 2.0).abs() < 1e-8);
}

#[test]
fn free_lunch_exits_with_witness() {
    let o = ge_on("free-lunch", &["solve"]);
    assert_eq!(o.status.code(), Some(3));
    let out = stdout(&o);
    assert!(
        out.contains("NON-ATTAINMENT on segment 0 along [1.0000000000000000e0]"),
        "{out}"
    );
    assert!(out.contains("[witness-ray]"));
    assert_eq!(
        ge_on("free-lunch", &["analyze-recession"]).status.code(),
        Some(3)
    );
    assert_eq!(
        ge_on("two-atom", &["analyze-recession"]).status.code(),
        Some(0)
    );
}

#[test]
fn eval_reports_infinity_outside_domain() {
    let o = ge_on("two-atom", &["eval", "--lambda", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verdict: INFINITE"));
    let o = ge_on("two-atom", &["eval", "--lambda", "-0.5", "--delta", "0.9"]);
    assert!(stdout(&o).contains("verdict: FINITE"));
}

#[test]
fn out_directory_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let o = ge_on(
        "two-atom",
        &[
            "--paths",
            "500",
            "--format",
            "table",
            "--out",
            dir.path().to_str().unwrap(),
            "simulate",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let summary = fs::read_to_string(dir.path().join("simulate-paths-summary.csv")).unwrap();
    assert!(stdout(&o).contains(&summary));
    let text = fs::read_to_string(dir.path().join("simulate.txt")).unwrap();
    assert!(text.contains("[paths-summary]"));
}

#[test]
fn text_and_table_carry_the_same_numbers() {
    let text = stdout(&ge_on("two-asset-regimes", &["solve"]));
    let table = stdout(&ge_on("two-asset-regimes", &["--format", "table", "solve"]));
    for cell in table
        .lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| l.split(','))
    {
        if cell.contains('e') && cell.parse::<f64>().is_ok() {
            assert!(text.contains(cell), "{cell}");
        }
    }
}

#[test]
fn environment_overrides_flags_defaults() {
    let path = fixture_path("merton");
    let o = Command::new(env!("CARGO_BIN_EXE_ge"))
        .args(["simulate"])
        .env("GE_MODEL", &path)
        .env("GE_PATHS", "300")
        .env("GE_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(
        out.lines()
            .any(|l| l.starts_with("paths") && l.ends_with("300")),
        "{out}"
    );
    assert!(out
        .lines()
        .any(|l| l.starts_with("seed") && l.ends_with(" 7")));
}

#[test]
fn simulate_outputs_are_identical_across_workers() {
    let runs: Vec<Vec<u8>> = ["1", "3", "1"]
        .iter()
        .map(|w| {
            ge_on(
                "two-asset-regimes",
                &[
                    "--paths",
                    "3000",
                    "--workers",
                    w,
                    "simulate",
                    "--dump-paths",
                    "2",
                ],
            )
            .stdout
        })
        .collect();
    assert!(!runs[0].is_empty());
    assert!(runs.iter().all(|r| r == &runs[0]));
}

#[test]
fn verify_passes_on_two_atom() {
    let o = ge_on("two-atom", &["--paths", "20000", "verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn defaults_follow_the_documented_values() {
    let cli = Cli::try_parse_from(["ge", "--model", "m.toml", "verify"]).unwrap();
    let cfg = RunConfig::from_cli(cli).unwrap();
    assert_eq!(cfg.seed, 42);
    assert_eq!(cfg.n_paths, 100_000);
    assert_eq!(cfg.n_steps, 250);
    assert!(matches!(
        cfg.command,
        Sub::Verify {
            checkpoints: 10,
            ..
        }
    ));
}

#[test]
fn in_process_entry_point() {
    let path = fixture_path("merton");
    assert_eq!(
        main_with_args(["ge", "--model", path.to_str().unwrap(), "validate"]),
        0
    );
    assert_eq!(
        main_with_args(["ge", "--model", "/nonexistent.toml", "validate"]),
        2
    );
}
