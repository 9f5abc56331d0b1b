//! Tool artifacts in, domain types out.

mod buildlog;
mod coverage;
mod diff;
mod mutation;

pub use buildlog::{parse_build_log, BuildLog, LogPatterns};
pub use coverage::parse_coverage_report;
pub use diff::parse_unified_diff;
pub use mutation::{descriptor_param_count, operator_name, parse_mutation_report};

use quick_xml::events::{BytesRef, BytesStart};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("focal class {0} not found in coverage report")]
    FocalNotFound(String),
    #[error("unknown mutant status `{0}`")]
    UnknownStatus(String),
    #[error("malformed hunk header at line {line}: {reason}")]
    MalformedHunk { line: usize, reason: String },
}

impl From<quick_xml::Error> for ReportError {
    fn from(e: quick_xml::Error) -> Self {
        ReportError::Xml(e.to_string())
    }
}

pub(crate) fn attr(e: &BytesStart<'_>, name: &str) -> Result<Option<String>, ReportError> {
    for a in e.attributes() {
        let a = a.map_err(|err| ReportError::Xml(err.to_string()))?;
        if a.key.as_ref() == name.as_bytes() {
            let v = a.unescape_value().map_err(|err| ReportError::Xml(err.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

pub(crate) fn resolve_ref(r: &BytesRef<'_>) -> Result<String, ReportError> {
    if let Some(c) = r.resolve_char_ref().map_err(|e| ReportError::Xml(e.to_string()))? {
        return Ok(c.to_string());
    }
    let name = r.decode().map_err(|e| ReportError::Xml(e.to_string()))?;
    quick_xml::escape::resolve_predefined_entity(&name)
        .map(str::to_string)
        .ok_or_else(|| ReportError::Xml(format!("unknown entity &{name};")))
}
