//! Multi-fold empirical validation of candidate invariants against
//! attack-free historian data.
//!
//! The trace is sliced into `k` contiguous segments; every invariant is
//! evaluated independently per fold. Rules whose antecedent never fires get
//! a distinct "no instances" outcome — absence of evidence is reported, not
//! conflated with refutation.

use crate::dsl::{eval_over_trace, render_invariant, DslError, EvalSummary, Invariant};
use crate::signal::{slice_segments, SignalError, Trace};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub k: usize,
    pub min_support: usize,
    /// Tolerated per-fold violation rate.
    pub epsilon: f64,
    /// Consequent latency allowance, in samples.
    pub grace: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig { k: 5, min_support: 10, epsilon: 0.0, grace: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NotPassedReason {
    /// The antecedent never fired often enough to judge the rule.
    NoInstances,
    /// Supported folds contradict the rule beyond epsilon.
    Inconsistent { failing_folds: Vec<usize>, violation_rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Passed,
    NotPassed { reason: NotPassedReason },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Passed)
    }
}

/// Per-invariant validation outcome with fold-level evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantRecord {
    pub id: String,
    pub text: String,
    pub provenance: crate::dsl::Provenance,
    pub verdict: Verdict,
    pub folds: Vec<EvalSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config: ValidationConfig,
    pub trace_len: usize,
    pub records: Vec<InvariantRecord>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ValidatorError {
    #[error("trace slicing failed: {0}")]
    Slice(#[from] SignalError),
    #[error("invariant evaluation failed: {0}")]
    Eval(#[from] DslError),
    #[error("report does not correspond to the given invariant set")]
    ReportMismatch,
}

/// Validate `invs` against an attack-free trace under `config`.
pub fn validate(
    invs: &[Invariant],
    trace: &Trace,
    config: &ValidationConfig,
) -> Result<ValidationReport, ValidatorError> {
    let folds = slice_segments(trace, config.k)?;
    let mut records = Vec::with_capacity(invs.len());
    for inv in invs {
        let mut summaries = Vec::with_capacity(folds.len());
        for fold in &folds {
            summaries.push(eval_over_trace(inv, fold, config.grace)?);
        }
        let total_support: usize = summaries.iter().map(|s| s.support).sum();
        let verdict = if total_support < config.min_support {
            Verdict::NotPassed { reason: NotPassedReason::NoInstances }
        } else {
            let failing: Vec<usize> = summaries
                .iter()
                .enumerate()
                .filter(|(_, s)| {
                    s.support > 0 && s.violations as f64 > config.epsilon * s.support as f64
                })
                .map(|(i, _)| i)
                .collect();
            if failing.is_empty() {
                Verdict::Passed
            } else {
                let rate = failing
                    .iter()
                    .map(|&i| summaries[i].violations as f64 / summaries[i].support as f64)
                    .fold(0.0, f64::max);
                Verdict::NotPassed {
                    reason: NotPassedReason::Inconsistent { failing_folds: failing, violation_rate: rate },
                }
            }
        };
        records.push(InvariantRecord {
            id: inv.id.clone(),
            text: render_invariant(inv),
            provenance: inv.provenance,
            verdict,
            folds: summaries,
        });
    }
    Ok(ValidationReport { config: *config, trace_len: trace.len(), records })
}

/// Keep the invariants the report marks `Passed`, preserving input order.
/// The report must describe exactly the given set.
pub fn filter_validated(
    report: &ValidationReport,
    invs: &[Invariant],
) -> Result<Vec<Invariant>, ValidatorError> {
    if report.records.len() != invs.len()
        || report.records.iter().zip(invs).any(|(r, i)| r.id != i.id)
    {
        return Err(ValidatorError::ReportMismatch);
    }
    Ok(invs
        .iter()
        .zip(&report.records)
        .filter(|(_, r)| r.verdict.passed())
        .map(|(i, _)| i.clone())
        .collect())
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Human-readable validation table.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# Invariant validation ({} folds, min support {}, epsilon {}, grace {})\n",
            self.config.k, self.config.min_support, self.config.epsilon, self.config.grace
        );
        out.push_str("| Invariant | Source | Result | Detail |\n");
        out.push_str("|---|---|---|---|\n");
        for r in &self.records {
            let support: usize = r.folds.iter().map(|s| s.support).sum();
            let (result, detail) = match &r.verdict {
                Verdict::Passed => (
                    "Passed".to_string(),
                    format!("consistent across all folds ({support} instances)"),
                ),
                Verdict::NotPassed { reason: NotPassedReason::NoInstances } => (
                    "Not passed".to_string(),
                    format!("no instances found ({support} below min support)"),
                ),
                Verdict::NotPassed {
                    reason: NotPassedReason::Inconsistent { failing_folds, violation_rate },
                } => (
                    "Not passed".to_string(),
                    format!(
                        "violated in folds {failing_folds:?} (worst rate {violation_rate:.4})"
                    ),
                ),
            };
            let _ = writeln!(out, "| `{}` | {:?} | {} | {} |", r.text, r.provenance, result, detail);
        }
        out
    }
}
