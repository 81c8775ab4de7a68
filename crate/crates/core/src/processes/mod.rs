//! Monte Carlo paths, stochastic exponentials, deflators and the checks that
//! tie them to the pointwise optimum.

use thiserror::Error;

use crate::solver::SolveError;

pub mod deflator;
pub mod exponential;
pub mod paths;
pub mod verify;

pub use deflator::{
    build_deflator, naive_deflator, validate_deflator, DeflatorParam, DeflatorValidation, Triplet,
};
pub use exponential::{ExponentProcess, LinearExponent};
pub use paths::{JumpEvent, PathSampler, ScenarioPath, TimeGrid};
pub use verify::{
    check_supermartingale, holdings_round_trip, lemma_a1_on_paths, lemma_a1_oracle, simulate,
    verify_duality, yor_check, PathBundle, SimConfig,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProcessError {
    #[error(
        "1 + ΔU ≤ 0 for atom {atom} on segment {segment}: fraction outside the admissible domain"
    )]
    DomainViolation { segment: usize, atom: usize },
    #[error("expected {expected} segments, got {found}")]
    SegmentCount { expected: usize, found: usize },
    #[error("dimension mismatch between model and process parameters")]
    Dimension,
    #[error("f must be positive and finite; atom {atom} on segment {segment} is not")]
    NonPositiveF { segment: usize, atom: usize },
    #[error("drift of V must be nonnegative on segment {0}")]
    NegativeDrift(usize),
    #[error("solve report is not certified optimal (first-order residual {0:e})")]
    Uncertified(f64),
    #[error("invalid simulation settings: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
}
