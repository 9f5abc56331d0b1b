//! Shared value types. Nothing in here touches the filesystem except
//! [`validate_task_against`], which checks that the test file exists.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Round a percentage to two decimals. All stored percentages go through this.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// `100 * num / den`, rounded; an empty denominator counts as fully adequate.
pub fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        100.0
    } else {
        round2(100.0 * num as f64 / den as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodRef {
    pub file_path: String,
    pub fully_qualified_class: String,
    pub method_name: String,
    /// Parameter types, as written in source.
    #[serde(default)]
    pub signature: Vec<String>,
    /// 1-based inclusive line span in `file_path`.
    pub line_span: (u32, u32),
}

impl MethodRef {
    pub fn simple_class_name(&self) -> &str {
        self.fully_qualified_class
            .rsplit('.')
            .next()
            .unwrap_or(&self.fully_qualified_class)
    }

    pub fn line_count(&self) -> usize {
        (self.line_span.1 + 1).saturating_sub(self.line_span.0) as usize
    }

    pub fn contains_line(&self, line: u32) -> bool {
        line >= self.line_span.0 && line <= self.line_span.1
    }
}

/// A method reference together with its source text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocalMethod {
    pub method: MethodRef,
    pub source: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineTag {
    Context,
    Add,
    Del,
}

impl LineTag {
    pub fn prefix(self) -> char {
        match self {
            LineTag::Context => ' ',
            LineTag::Add => '+',
            LineTag::Del => '-',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub tag: LineTag,
    pub text: String,
    /// Followed by a `\ No newline at end of file` marker.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_newline: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffHunk {
    pub file_path: String,
    /// (start, count) on the old side.
    pub old_range: (u32, u32),
    pub new_range: (u32, u32),
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub section: String,
    pub lines: Vec<DiffLine>,
    /// Ordinal in the original diff.
    pub index: usize,
}

impl DiffHunk {
    /// Text of the added and deleted lines, in order.
    pub fn changed_lines(&self) -> impl Iterator<Item = &str> {
        self.lines
            .iter()
            .filter(|l| l.tag != LineTag::Context)
            .map(|l| l.text.as_str())
    }

    pub fn old_side_len(&self) -> usize {
        self.lines.iter().filter(|l| l.tag != LineTag::Add).count()
    }

    pub fn new_side_len(&self) -> usize {
        self.lines.iter().filter(|l| l.tag != LineTag::Del).count()
    }

    /// Renders the hunk back to unified-diff text (header canonicalized).
    pub fn render(&self) -> String {
        let mut out = format!(
            "@@ -{},{} +{},{} @@",
            self.old_range.0, self.old_range.1, self.new_range.0, self.new_range.1
        );
        if !self.section.is_empty() {
            out.push(' ');
            out.push_str(&self.section);
        }
        out.push('\n');
        out.push_str(&self.render_body());
        out
    }

    pub fn render_body(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push(line.tag.prefix());
            out.push_str(&line.text);
            out.push('\n');
            if line.no_newline {
                out.push_str("\\ No newline at end of file\n");
            }
        }
        out
    }
}

/// Everything needed to update one outdated test.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateTask {
    pub test_before: String,
    pub test_class_path: String,
    #[serde(default)]
    pub non_test_methods: Vec<String>,
    #[serde(default)]
    pub class_variables: Vec<String>,
    pub focal_before: FocalMethod,
    /// Equal to `focal_before` when the focal method did not change.
    pub focal_after: FocalMethod,
    #[serde(default)]
    pub diff_hunks: Vec<DiffHunk>,
    pub repo_pre: String,
    pub repo_post: String,
}

impl UpdateTask {
    pub fn focal_changed(&self) -> bool {
        self.focal_before.source != self.focal_after.source
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateUpdate {
    pub test_code: String,
    #[serde(default)]
    pub imports: Vec<String>,
    pub iteration: u32,
}

impl CandidateUpdate {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.iteration < 1 {
            out.push("iteration must be >= 1".to_string());
        }
        if !crate::java::is_single_block(&self.test_code) {
            out.push("test_code is not a single brace-balanced method".to_string());
        }
        for import in &self.imports {
            if !crate::java::is_import_decl(import) {
                out.push(format!("malformed import `{import}`"));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    CompileFailed,
    TestsFailed,
    Passed,
}

impl Phase {
    /// Higher is better.
    pub fn rank(self) -> u8 {
        match self {
            Phase::CompileFailed => 0,
            Phase::TestsFailed => 1,
            Phase::Passed => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    CompileError,
    AssertionFailure,
    RuntimeFailure,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Raw message text, verbatim from the log.
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual: Option<String>,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            message: message.into(),
            symbol: None,
            file_path: None,
            line: None,
            expected: None,
            actual: None,
        }
    }

    /// One-line form used in annotations, e.g. `cannot find method: foo()`.
    pub fn summary(&self) -> String {
        let first = self.message.lines().next().unwrap_or("").trim().to_string();
        if self.kind == DiagnosticKind::CompileError && first.starts_with("cannot find symbol") {
            if let Some(symbol) = &self.symbol {
                let kind = self
                    .message
                    .lines()
                    .find_map(|l| l.trim().strip_prefix("symbol:"))
                    .and_then(|rest| rest.split_whitespace().next())
                    .unwrap_or("symbol");
                return match kind {
                    "method" => format!("cannot find method: {symbol}()"),
                    other => format!("cannot find {other}: {symbol}"),
                };
            }
        }
        first
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineStatus {
    Covered,
    NotCovered,
    NoInstruction,
}

impl LineStatus {
    pub fn label(self) -> &'static str {
        match self {
            LineStatus::Covered => "COVERED",
            LineStatus::NotCovered => "NOT_COVERED",
            LineStatus::NoInstruction => "NO_INSTRUCTION",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageFacts {
    pub method: MethodRef,
    pub line_status: BTreeMap<u32, LineStatus>,
    /// line -> (covered, total)
    pub branch_status: BTreeMap<u32, (u32, u32)>,
    pub line_coverage_pct: f64,
    pub branch_coverage_pct: f64,
}

impl CoverageFacts {
    pub fn new(
        method: MethodRef,
        line_status: BTreeMap<u32, LineStatus>,
        branch_status: BTreeMap<u32, (u32, u32)>,
    ) -> Self {
        let (line_coverage_pct, branch_coverage_pct) = Self::compute_pcts(&line_status, &branch_status);
        CoverageFacts {
            method,
            line_status,
            branch_status,
            line_coverage_pct,
            branch_coverage_pct,
        }
    }

    pub fn compute_pcts(
        line_status: &BTreeMap<u32, LineStatus>,
        branch_status: &BTreeMap<u32, (u32, u32)>,
    ) -> (f64, f64) {
        let covered = line_status.values().filter(|s| **s == LineStatus::Covered).count();
        let missed = line_status.values().filter(|s| **s == LineStatus::NotCovered).count();
        let (bc, bt) = branch_status
            .values()
            .fold((0usize, 0usize), |(c, t), (bc, bt)| (c + *bc as usize, t + *bt as usize));
        (percent(covered, covered + missed), percent(bc, bt))
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (line, branch) = Self::compute_pcts(&self.line_status, &self.branch_status);
        if (line - self.line_coverage_pct).abs() > 0.01 {
            out.push(format!("line_coverage_pct {} != recomputed {line}", self.line_coverage_pct));
        }
        if (branch - self.branch_coverage_pct).abs() > 0.01 {
            out.push(format!(
                "branch_coverage_pct {} != recomputed {branch}",
                self.branch_coverage_pct
            ));
        }
        for (line, (c, t)) in &self.branch_status {
            if c > t || *t < 2 {
                out.push(format!("branch entry at line {line} is ({c},{t})"));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutantStatus {
    NoCoverage,
    Survived,
    Killed,
}

impl MutantStatus {
    pub fn label(self) -> &'static str {
        match self {
            MutantStatus::NoCoverage => "NO_COVERAGE",
            MutantStatus::Survived => "SURVIVED",
            MutantStatus::Killed => "KILLED",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutant {
    pub line: u32,
    pub operator: String,
    pub description: String,
    pub status: MutantStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutationFacts {
    pub method: MethodRef,
    pub mutants: Vec<Mutant>,
    pub mutation_score_pct: f64,
}

impl MutationFacts {
    pub fn new(method: MethodRef, mutants: Vec<Mutant>) -> Self {
        let mutation_score_pct = Self::compute_score(&mutants);
        MutationFacts {
            method,
            mutants,
            mutation_score_pct,
        }
    }

    /// Zero mutants scores 100.
    pub fn compute_score(mutants: &[Mutant]) -> f64 {
        let killed = mutants.iter().filter(|m| m.status == MutantStatus::Killed).count();
        percent(killed, mutants.len())
    }

    pub fn count(&self, status: MutantStatus) -> usize {
        self.mutants.iter().filter(|m| m.status == status).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub phase_reached: Phase,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageFacts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<MutationFacts>,
    /// Opaque handle to the stored raw log.
    #[serde(default)]
    pub raw_log_ref: String,
}

impl ExecutionOutcome {
    pub fn failed(phase: Phase, diagnostics: Vec<Diagnostic>, raw_log_ref: impl Into<String>) -> Self {
        debug_assert!(phase != Phase::Passed);
        ExecutionOutcome {
            phase_reached: phase,
            diagnostics,
            coverage: None,
            mutation: None,
            raw_log_ref: raw_log_ref.into(),
        }
    }

    pub fn passed(coverage: CoverageFacts, mutation: MutationFacts, raw_log_ref: impl Into<String>) -> Self {
        ExecutionOutcome {
            phase_reached: Phase::Passed,
            diagnostics: Vec::new(),
            coverage: Some(coverage),
            mutation: Some(mutation),
            raw_log_ref: raw_log_ref.into(),
        }
    }

    pub fn line_pct(&self) -> f64 {
        self.coverage.as_ref().map_or(0.0, |c| c.line_coverage_pct)
    }

    pub fn branch_pct(&self) -> f64 {
        self.coverage.as_ref().map_or(0.0, |c| c.branch_coverage_pct)
    }

    pub fn mutation_pct(&self) -> f64 {
        self.mutation.as_ref().map_or(0.0, |m| m.mutation_score_pct)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let passed = self.phase_reached == Phase::Passed;
        if passed != (self.coverage.is_some() && self.mutation.is_some()) {
            out.push("coverage/mutation must be present iff passed".to_string());
        }
        if passed == !self.diagnostics.is_empty() {
            out.push("diagnostics must be non-empty iff not passed".to_string());
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    Method,
    Field,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedSymbol {
    pub name: String,
    pub kind: SymbolKind,
    pub signature_or_definition: String,
    pub file_path: String,
    pub import_path: String,
}

/// Merged analysis feedback for the next update round.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionBundle {
    pub error_instructions: Vec<String>,
    pub coverage_instructions: Vec<String>,
    pub mutation_instructions: Vec<String>,
    pub retrieved_context: Vec<ResolvedSymbol>,
}

impl InstructionBundle {
    pub fn is_empty(&self) -> bool {
        self.error_instructions.is_empty()
            && self.coverage_instructions.is_empty()
            && self.mutation_instructions.is_empty()
            && self.retrieved_context.is_empty()
    }

    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    ThresholdsMet,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub candidate: CandidateUpdate,
    pub outcome: ExecutionOutcome,
    pub instructions: InstructionBundle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub best: CandidateUpdate,
    pub best_outcome: ExecutionOutcome,
    pub iterations_used: u32,
    pub trace: Vec<IterationRecord>,
    pub terminated_by: TerminatedBy,
}

/// Checks the in-memory invariants of a task. Returns one line per violation.
pub fn validate_task(task: &UpdateTask) -> Vec<String> {
    let mut out = Vec::new();
    if task.test_before.trim().is_empty() {
        out.push("test_before empty".to_string());
    }
    if task.test_class_path.trim().is_empty() {
        out.push("test_class_path empty".to_string());
    }
    if task.focal_after.source.trim().is_empty() {
        out.push("focal_after missing".to_string());
    }
    for (label, focal) in [("focal_before", &task.focal_before), ("focal_after", &task.focal_after)] {
        let m = &focal.method;
        if m.method_name.is_empty() {
            out.push(format!("{label}.method_name empty"));
        }
        if m.line_span.0 > m.line_span.1 {
            out.push(format!("{label}.line_span start > end"));
        }
    }
    let mut seen = BTreeSet::new();
    let mut dup = BTreeSet::new();
    for hunk in &task.diff_hunks {
        if !seen.insert(hunk.index) {
            dup.insert(hunk.index);
        }
        if hunk.old_side_len() != hunk.old_range.1 as usize || hunk.new_side_len() != hunk.new_range.1 as usize {
            out.push(format!("DiffHunk {}: range counts do not match lines", hunk.index));
        }
    }
    for index in dup {
        out.push(format!("DiffHunk.index {index} is not unique"));
    }
    if task.diff_hunks.windows(2).any(|w| w[0].index > w[1].index) {
        out.push("diff_hunks are not in original diff order".to_string());
    }
    out
}

/// [`validate_task`] plus the check that the test file exists under `post_root`.
pub fn validate_task_against(task: &UpdateTask, post_root: &Path) -> Vec<String> {
    let mut out = validate_task(task);
    if !post_root.join(&task.test_class_path).is_file() {
        out.push(format!("test_class_path {} not found in repo_post", task.test_class_path));
    }
    out
}
