//! The analysis and generation agents. Each one is a plain function over
//! immutable inputs plus, where needed, a gateway for its prompt.

pub mod coverage;
pub mod error;
pub mod input;
pub mod mutation;
pub mod update;

pub use coverage::{annotate_coverage, extract_uncover_info, strip_coverage_annotations, CoverageInstruction, Difficulty};
pub use error::{annotate_errors, distinguish_unknown_symbols, locate_errors, strip_error_annotations, ErrorAnalysis, KnownSymbolCatalog};
pub use input::{filter_context, rank_hunks, rank_hunks_with, FilteredContext, HunkRanking, RankedHunk};
pub use mutation::{annotate_mutations, extract_mutation_info, strip_mutation_annotations};
pub use update::{generate_update, update_bindings};

use crate::llm::GatewayError;
use crate::retrieval::RetrievalError;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("source has {source_lines} lines but the method spans {span_lines}")]
    SpanMismatch { source_lines: usize, span_lines: usize },
}

/// Splits text into lines, keeping each line's terminator.
pub(crate) fn split_keep_ends(text: &str) -> Vec<(&str, &str)> {
    text.split_inclusive('\n')
        .map(|l| {
            if let Some(body) = l.strip_suffix("\r\n") {
                (body, "\r\n")
            } else if let Some(body) = l.strip_suffix('\n') {
                (body, "\n")
            } else {
                (l, "")
            }
        })
        .collect()
}

/// Checks that `source` has exactly as many lines as `span`.
pub(crate) fn check_span(source: &str, span: (u32, u32)) -> Result<(), AgentError> {
    let source_lines = split_keep_ends(source).len();
    let span_lines = (span.1.saturating_sub(span.0) + 1) as usize;
    if span.1 < span.0 {
        return Err(AgentError::Precondition(format!("inverted line span {}-{}", span.0, span.1)));
    }
    if source_lines != span_lines {
        return Err(AgentError::SpanMismatch { source_lines, span_lines });
    }
    Ok(())
}
