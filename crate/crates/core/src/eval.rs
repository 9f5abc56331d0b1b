//! Batch metrics over finished sessions, and the n-gram overlap diagnostic.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{percent, round2, Phase, SessionResult};
use crate::tokens::identifier_tokens;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("no sessions to aggregate")]
    Empty,
    #[error("n-gram size must be at least 1")]
    ZeroN,
}

/// Rates are percentages of all sessions; the means cover only sessions whose
/// best candidate passed, and are `None` when there are none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sessions: usize,
    pub compiled: usize,
    pub passed: usize,
    pub cpr: f64,
    pub tpr: f64,
    pub mean_line_coverage: Option<f64>,
    pub mean_branch_coverage: Option<f64>,
    pub mean_mutation_score: Option<f64>,
}

fn mean(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    // fixed summation order keeps the result independent of session order
    xs.sort_by(f64::total_cmp);
    Some(round2(xs.iter().sum::<f64>() / xs.len() as f64))
}

pub fn aggregate_metrics(results: &[SessionResult]) -> Result<Metrics, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    let compiled = results.iter().filter(|r| r.best_outcome.phase_reached != Phase::CompileFailed).count();
    let passed: Vec<&SessionResult> = results.iter().filter(|r| r.best_outcome.phase_reached == Phase::Passed).collect();
    Ok(Metrics {
        sessions: results.len(),
        compiled,
        passed: passed.len(),
        cpr: percent(compiled, results.len()),
        tpr: percent(passed.len(), results.len()),
        mean_line_coverage: mean(passed.iter().map(|r| r.best_outcome.line_pct()).collect()),
        mean_branch_coverage: mean(passed.iter().map(|r| r.best_outcome.branch_pct()).collect()),
        mean_mutation_score: mean(passed.iter().map(|r| r.best_outcome.mutation_pct()).collect()),
    })
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}"));
        writeln!(f, "sessions  {:>8}", self.sessions)?;
        writeln!(f, "CPR       {:>8.2}  ({} compiled)", self.cpr, self.compiled)?;
        writeln!(f, "TPR       {:>8.2}  ({} passed)", self.tpr, self.passed)?;
        writeln!(f, "line      {:>8}", opt(self.mean_line_coverage))?;
        writeln!(f, "branch    {:>8}", opt(self.mean_branch_coverage))?;
        write!(f, "mutation  {:>8}", opt(self.mean_mutation_score))
    }
}

fn ngrams(texts: &[String], n: usize) -> HashSet<Vec<String>> {
    texts
        .iter()
        .flat_map(|t| {
            let toks = identifier_tokens(t);
            toks.windows(n).map(<[String]>::to_vec).collect::<Vec<_>>()
        })
        .collect()
}

/// Share of the distinct identifier-token n-grams of `generated` that also
/// occur in `reference`. N-grams never span two texts; with no generated
/// n-grams at all the overlap is 0.
pub fn ngram_overlap(generated: &[String], reference: &[String], n: usize) -> Result<f64, EvalError> {
    if n == 0 {
        return Err(EvalError::ZeroN);
    }
    let gen = ngrams(generated, n);
    if gen.is_empty() {
        return Ok(0.0);
    }
    let reference = ngrams(reference, n);
    Ok(gen.intersection(&reference).count() as f64 / gen.len() as f64)
}
