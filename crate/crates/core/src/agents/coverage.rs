use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{check_span, split_keep_ends, AgentError};
use crate::llm::{bindings, Gateway, TemplateId};
use crate::model::{CoverageFacts, LineStatus};

/// Uncovered lines and partially covered branch lines `(line, (covered, total))`.
pub fn extract_uncover_info(facts: &CoverageFacts) -> (Vec<u32>, Vec<(u32, (u32, u32))>) {
    let lines = facts
        .line_status
        .iter()
        .filter(|(_, s)| **s == LineStatus::NotCovered)
        .map(|(l, _)| *l)
        .collect();
    let branches = facts
        .branch_status
        .iter()
        .filter(|(_, (c, t))| c < t)
        .map(|(l, ct)| (*l, *ct))
        .collect();
    (lines, branches)
}

/// Appends ` // COVERED` / ` // NOT_COVERED` / ` // NO_INSTRUCTION` to each
/// source line, plus ` // BRANCH: i/n covered` on branch lines.
pub fn annotate_coverage(focal_source: &str, facts: &CoverageFacts) -> Result<String, AgentError> {
    let span = facts.method.line_span;
    check_span(focal_source, span)?;
    let mut out = String::with_capacity(focal_source.len() + 24 * (span.1 - span.0 + 1) as usize);
    for (i, (body, end)) in split_keep_ends(focal_source).into_iter().enumerate() {
        let line = span.0 + i as u32;
        let status = facts.line_status.get(&line).copied().unwrap_or(LineStatus::NoInstruction);
        out.push_str(body);
        out.push_str(" // ");
        out.push_str(status.label());
        if let Some((c, t)) = facts.branch_status.get(&line) {
            out.push_str(&format!(" // BRANCH: {c}/{t} covered"));
        }
        out.push_str(end);
    }
    Ok(out)
}

fn suffix_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r" // (?:COVERED|NOT_COVERED|NO_INSTRUCTION)(?: // BRANCH: \d+/\d+ covered)?$").unwrap())
}

/// Inverse of [`annotate_coverage`].
pub fn strip_coverage_annotations(annotated: &str) -> String {
    split_keep_ends(annotated)
        .into_iter()
        .map(|(body, end)| format!("{}{end}", suffix_re().replace(body, "")))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Hard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Line(u32),
    /// Line with (covered, total) branch counts.
    Branch(u32, (u32, u32)),
}

impl Target {
    pub fn id(&self) -> String {
        match self {
            Target::Line(l) => format!("L{l}"),
            Target::Branch(l, _) => format!("B{l}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageInstruction {
    pub target: Target,
    pub difficulty: Difficulty,
    pub text: String,
    /// Filled in by default because the reply skipped this target.
    pub defaulted: bool,
}

impl fmt::Display for CoverageInstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.difficulty {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
        };
        match self.target {
            Target::Line(l) => write!(f, "[{tag}] line {l}: {}", self.text),
            Target::Branch(l, (c, t)) => write!(f, "[{tag}] branch at line {l} ({c}/{t} covered): {}", self.text),
        }
    }
}

fn default_text(target: &Target) -> String {
    match target {
        Target::Line(l) => format!("construct an input reaching line {l}"),
        Target::Branch(l, (c, t)) => format!(
            "construct an input reaching line {l} / branch direction not yet taken ({} of {t} directions missing)",
            t - c
        ),
    }
}

fn target_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\W*(l|b|line|branch)\s*(\d+)\W*$").unwrap())
}

/// Lists the uncovered targets of `facts`, asks the model how to reach each,
/// and returns exactly one instruction per target — easy ones first. Targets
/// the reply skips get a default instruction tagged hard; so does any target
/// whose tag cannot be read.
pub fn analyze(facts: &CoverageFacts, focal_source: &str, test_code: &str, gateway: &Gateway) -> Result<Vec<CoverageInstruction>, AgentError> {
    let (lines, branches) = extract_uncover_info(facts);
    let mut targets: Vec<Target> = lines.into_iter().map(Target::Line).collect();
    targets.extend(branches.into_iter().map(|(l, ct)| Target::Branch(l, ct)));
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let src_lines: Vec<&str> = focal_source.lines().collect();
    let line_text = |l: u32| -> &str {
        l.checked_sub(facts.method.line_span.0)
            .and_then(|i| src_lines.get(i as usize))
            .map_or("", |s| s.trim())
    };
    let listing = targets
        .iter()
        .map(|t| match t {
            Target::Line(l) => format!("{}: line {l} `{}` (NOT_COVERED)", t.id(), line_text(*l)),
            Target::Branch(l, (c, n)) => format!("{}: branch at line {l} `{}` (BRANCH: {c}/{n} covered)", t.id(), line_text(*l)),
        })
        .collect::<Vec<_>>()
        .join("\n");
    let reply = gateway.ask(
        TemplateId::CoverageAnalyze,
        &bindings([
            ("annotated_focal", annotate_coverage(focal_source, facts)?),
            ("test_code", test_code.to_string()),
            ("targets", listing),
        ]),
    )?;

    let mut answered: Vec<Option<(Difficulty, String)>> = vec![None; targets.len()];
    for line in reply.lines() {
        let parts: Vec<&str> = line.splitn(3, '|').map(str::trim).collect();
        let [target, tag, text] = parts[..] else { continue };
        let Some(c) = target_re().captures(target) else { continue };
        let is_branch = c[1].to_ascii_lowercase().starts_with('b');
        let Ok(n) = c[2].parse::<u32>() else { continue };
        let Some(pos) = targets.iter().position(|t| match t {
            Target::Line(l) => !is_branch && *l == n,
            Target::Branch(l, _) => is_branch && *l == n,
        }) else {
            continue;
        };
        if answered[pos].is_some() || text.is_empty() {
            continue;
        }
        let difficulty = match tag.to_ascii_lowercase().as_str() {
            "easy" => Difficulty::Easy,
            _ => Difficulty::Hard,
        };
        answered[pos] = Some((difficulty, text.to_string()));
    }
    let mut out: Vec<CoverageInstruction> = targets
        .iter()
        .zip(answered)
        .map(|(t, a)| match a {
            Some((difficulty, text)) => CoverageInstruction {
                target: *t,
                difficulty,
                text,
                defaulted: false,
            },
            None => CoverageInstruction {
                target: *t,
                difficulty: Difficulty::Hard,
                text: default_text(t),
                defaulted: true,
            },
        })
        .collect();
    // stable: keeps target order within each difficulty
    out.sort_by_key(|i| i.difficulty);
    Ok(out)
}
