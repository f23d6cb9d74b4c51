//! Identity checks, isotropy classifiers and the scenario harness.
//!
//! Identities are turned into residuals: a result passes when
//! `residual ≤ tol · (1 + scale)`. Scenarios whose hypotheses cannot be
//! certified at the sampled points are reported as not applicable.

pub mod classify;
pub mod oracle;
pub mod scenarios;
pub mod suite;

use serde::Serialize;

pub use classify::{classify_e_isotropy, classify_s, ClassifierConfig, SVerdicts, Verdict, VerdictKind};
pub use oracle::{classical_sectional_curvature, compare_with_jets, fd_oracle, FdOracle, FdQuantity};
pub use scenarios::{
    check_almost_constant_scenarios, check_flag_curvature_fit, check_gauge, check_isotropy_equivalence, GaugeReport,
};
pub use suite::{run_suite, IdentityResult, IdentitySummary, SuiteConfig, SuiteMetric, SuiteReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl Status {
    pub fn from_pass(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }

    /// Fail if anything failed, pass if anything passed, otherwise not applicable.
    pub fn combine(items: impl IntoIterator<Item = Status>) -> Self {
        let mut out = Self::NotApplicable;
        for s in items {
            match s {
                Self::Fail => return Self::Fail,
                Self::Pass => out = Self::Pass,
                Self::NotApplicable => {}
            }
        }
        out
    }
}

/// `residual ≤ tol · (1 + scale)`.
pub fn within(residual: f64, tol: f64, scale: f64) -> bool {
    residual <= tol * (1.0 + scale)
}
