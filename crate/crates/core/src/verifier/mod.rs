//! Verification engines for local robustness.
//!
//! Verdicts use the competition vocabulary: a property is `unsat` when it is
//! verified (no counterexample) and `sat` when a witness was found.

pub mod bab;
pub mod brute;
pub mod cnf;
pub mod dpll;
pub mod fold;
pub mod interval;

use std::time::Duration;

use thiserror::Error;

use crate::bnn::BnnError;
use crate::vnnlib::{VnnlibError, Witness};

pub use bab::{bab_verify, BabConfig};
pub use brute::{brute_force_verify, brute_force_verify_with, BruteConfig};
pub use cnf::{export_cnf, CnfExport, CnfFormula};
pub use fold::{fold_bn_sign, ThresholdRule};
pub use interval::{ibp_propagate, verify_ibp, Interval, IntervalTensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("grid has {points} points, over the enumeration budget of {budget}")]
    Budget { points: u64, budget: u64 },
    #[error("some input interval contains no integer")]
    EmptyGrid,
    #[error("first-layer signs must be fixed when inputs are not integer-bounded")]
    UnfixedFirstLayer,
    #[error("expected {expected} first-layer phases, got {actual}")]
    PhaseCount { expected: usize, actual: usize },
    #[error("cannot fold into thresholds: {0}")]
    NonFoldable(String),
    #[error("encoding needs {vars} variables, over the limit")]
    TooLarge { vars: u64 },
    #[error(transparent)]
    Property(#[from] VnnlibError),
    #[error(transparent)]
    Model(#[from] BnnError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Verified,
    Falsified(Witness),
    Unknown,
    Timeout,
}

impl Verdict {
    /// `unsat`, `sat`, `unknown` or `timeout`.
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Verified => "unsat",
            Verdict::Falsified(_) => "sat",
            Verdict::Unknown => "unknown",
            Verdict::Timeout => "timeout",
        }
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Verdict::Falsified(w) => Some(w),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stats {
    /// Boxes bounded or points evaluated.
    pub nodes: u64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub verdict: Verdict,
    pub stats: Stats,
}
