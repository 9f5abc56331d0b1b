//! The iterate / execute / analyze loop that drives one update session.

use std::cmp::Ordering;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::{self, AgentError, FilteredContext, KnownSymbolCatalog};
use crate::build::{self, apply_test_code, AdapterError, AppliedTest, BuildAdapter, PhaseRun, PhaseTimeouts, RunRequest, Workspace};
use crate::java::{self, JavaSource};
use crate::llm::Gateway;
use crate::model::{
    CandidateUpdate, Diagnostic, DiagnosticKind, ExecutionOutcome, InstructionBundle, IterationRecord, Phase, ResolvedSymbol, SessionResult,
    TerminatedBy, UpdateTask,
};
use crate::report::{parse_build_log, parse_coverage_report, parse_mutation_report, LogPatterns, ReportError};
use crate::retrieval::{Embedder, RetrievalBudget, Retriever};

#[derive(Debug, thiserror::Error)]
pub enum CoordinatorError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("invalid task: {0}")]
    Task(String),
    #[error("no extractable code block in the model reply")]
    NoCode,
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("phase passed without a report (log {0})")]
    MissingReport(String),
    #[error("report {path}: {source}")]
    Report { path: String, source: ReportError },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub max_iterations: u32,
    pub line_threshold: f64,
    pub branch_threshold: f64,
    pub mutation_threshold: f64,
    pub max_retrieval_iterations: u32,
    /// Diff hunks kept after ranking.
    pub top_hunks: usize,
    pub timeouts: PhaseTimeouts,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            max_iterations: 4,
            line_threshold: 100.0,
            branch_threshold: 100.0,
            mutation_threshold: 100.0,
            max_retrieval_iterations: 3,
            top_hunks: 10,
            timeouts: PhaseTimeouts::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), CoordinatorError> {
        if self.max_iterations < 1 {
            return Err(CoordinatorError::Config("max_iterations must be >= 1".into()));
        }
        for (k, v) in [
            ("line_threshold", self.line_threshold),
            ("branch_threshold", self.branch_threshold),
            ("mutation_threshold", self.mutation_threshold),
        ] {
            if !(0.0..=100.0).contains(&v) {
                return Err(CoordinatorError::Config(format!("{k} = {v} is outside [0, 100]")));
            }
        }
        if [self.timeouts.compile_s, self.timeouts.tests_s, self.timeouts.mutation_s].contains(&0) {
            return Err(CoordinatorError::Config("timeouts must be positive".into()));
        }
        Ok(())
    }
}

fn fences(raw: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut open: Option<(String, Vec<&str>)> = None;
    for line in raw.lines() {
        let t = line.trim_start();
        match open.take() {
            None => {
                if let Some(info) = t.strip_prefix("```") {
                    open = Some((info.trim().to_ascii_lowercase(), Vec::new()));
                }
            }
            Some((info, body)) if t.trim_end() == "```" => out.push((info, body.join("\n"))),
            Some((info, mut body)) => {
                body.push(line);
                open = Some((info, body));
            }
        }
    }
    out
}

/// Pulls imports out of a code block, returning (imports, remaining code).
fn split_imports(code: &str) -> (Vec<String>, String) {
    let mut imports = Vec::new();
    let mut rest = Vec::new();
    for line in code.lines() {
        let t = line.trim();
        if java::is_import_decl(t) {
            imports.push(java::normalize_import(t).unwrap_or_else(|| t.to_string()));
        } else if !(rest.is_empty() && (t.is_empty() || t.starts_with("package "))) {
            rest.push(line);
        }
    }
    (imports, rest.join("\n").trim_end().to_string() + "\n")
}

/// Largest brace-balanced `{...}` region, widened to the start of its header line(s).
fn largest_block(raw: &str) -> Option<String> {
    let masked = java::mask(raw);
    let b = masked.as_bytes();
    let mut best: Option<(usize, usize)> = None;
    let mut stack = Vec::new();
    for (i, &c) in b.iter().enumerate() {
        match c {
            b'{' => stack.push(i),
            b'}' => {
                if let Some(open) = stack.pop() {
                    if stack.is_empty() && best.is_none_or(|(s, e)| i + 1 - open > e - s) {
                        best = Some((open, i + 1));
                    }
                }
            }
            _ => {}
        }
    }
    let (open, end) = best?;
    // Walk back over the header: non-blank lines that do not end a statement.
    let mut start = raw[..open].rfind('\n').map_or(0, |p| p + 1);
    while start > 0 {
        let prev_start = raw[..start - 1].rfind('\n').map_or(0, |p| p + 1);
        let prev = raw[prev_start..start - 1].trim();
        if prev.is_empty() || prev.ends_with(';') || prev.ends_with('}') || prev.ends_with('.') || prev.ends_with(':') {
            break;
        }
        start = prev_start;
    }
    Some(raw[start..end].to_string() + "\n")
}

/// Extracts the candidate from a model reply.
///
/// Preference order: the ```` ```test ```` / ```` ```imports ```` fences; else
/// the first untagged (or `java`) fence, with any import lines split out; else
/// the largest brace-balanced block of the raw text.
pub fn extract_test_code(raw: &str, iteration: u32) -> Result<CandidateUpdate, CoordinatorError> {
    let blocks = fences(raw);
    let imports_of = |blocks: &[(String, String)]| -> Vec<String> {
        blocks
            .iter()
            .filter(|(info, _)| info == "imports")
            .flat_map(|(_, body)| body.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect::<Vec<_>>())
            .map(|l| java::normalize_import(&l).unwrap_or(l))
            .collect()
    };
    let candidate = |test_code: String, imports: Vec<String>| CandidateUpdate {
        test_code,
        imports,
        iteration,
    };
    if let Some((_, body)) = blocks.iter().find(|(info, _)| info == "test") {
        let (inline, code) = split_imports(body);
        let mut imports = imports_of(&blocks);
        imports.extend(inline.into_iter().filter(|i| !imports.contains(i)).collect::<Vec<_>>());
        return Ok(candidate(code, imports));
    }
    if let Some((_, body)) = blocks
        .iter()
        .find(|(info, body)| (info.is_empty() || info == "java") && body.contains('{'))
    {
        let (imports, code) = split_imports(body);
        return Ok(candidate(code, imports));
    }
    match largest_block(raw) {
        Some(code) => {
            let (imports, code) = split_imports(&code);
            Ok(candidate(code, imports))
        }
        None => Err(CoordinatorError::NoCode),
    }
}

/// What `evaluate_candidate` learned beyond the outcome itself.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub outcome: ExecutionOutcome,
    /// Where the candidate landed; `None` when it could not be applied.
    pub applied: Option<AppliedTest>,
    /// Outcome diagnostics mapped to 1-based candidate lines.
    pub located: Vec<Diagnostic>,
}

/// Fully qualified name of the class declared in `test_class_path`.
pub fn test_class_name(ws: &Workspace, task: &UpdateTask) -> Result<String, AdapterError> {
    let source = ws.read(&task.test_class_path)?;
    let stem = Path::new(&task.test_class_path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(JavaSource::parse(&source).qualified_name(&stem))
}

fn failure_diagnostics(run: &PhaseRun, patterns: &LogPatterns, fallback: DiagnosticKind, root: &Path) -> Vec<Diagnostic> {
    if run.timed_out {
        return vec![Diagnostic::new(DiagnosticKind::RuntimeFailure, "phase timeout")];
    }
    let mut diags = parse_build_log(&run.log, patterns).diagnostics;
    // traces carry repo-relative paths
    for d in &mut diags {
        if let Some(rel) = d.file_path.as_deref().and_then(|p| Path::new(p).strip_prefix(root).ok()) {
            d.file_path = Some(rel.to_string_lossy().into_owned());
        }
    }
    if diags.is_empty() {
        let tail: Vec<&str> = run.log.lines().rev().filter(|l| !l.trim().is_empty()).take(5).collect();
        let tail: Vec<&str> = tail.into_iter().rev().collect();
        let msg = if tail.is_empty() { "build failed without output".to_string() } else { tail.join("\n") };
        diags.push(Diagnostic::new(fallback, msg));
    }
    diags
}

fn read_report(run: &PhaseRun) -> Result<(String, Vec<u8>), CoordinatorError> {
    let path = run.report.as_ref().ok_or_else(|| CoordinatorError::MissingReport(run.log_ref.clone()))?;
    let bytes = std::fs::read(path).map_err(|e| AdapterError::io(path, e))?;
    Ok((path.display().to_string(), bytes))
}

/// Applies the candidate, runs compile → tests → coverage → mutation
/// (stopping at the first failure), parses what came out, and restores the
/// workspace. A candidate the scanner cannot place in the test file counts as
/// a compile failure rather than an error.
pub fn evaluate_candidate(
    candidate: &CandidateUpdate,
    task: &UpdateTask,
    ws: &mut Workspace,
    adapter: &mut dyn BuildAdapter,
    config: &SessionConfig,
) -> Result<Evaluation, CoordinatorError> {
    let test_class = test_class_name(ws, task)?;
    let applied = match apply_test_code(ws, task, candidate) {
        Ok(a) => a,
        Err(e @ (AdapterError::InvalidCandidate(_) | AdapterError::Unbalanced { .. } | AdapterError::MethodNotFound { .. })) => {
            ws.reset()?;
            let d = Diagnostic::new(DiagnosticKind::CompileError, format!("candidate could not be applied: {e}"));
            return Ok(Evaluation {
                outcome: ExecutionOutcome::failed(Phase::CompileFailed, vec![d.clone()], ""),
                applied: None,
                located: vec![d],
            });
        }
        Err(e) => return Err(e.into()),
    };
    let result = run_phases(candidate, task, ws, adapter, config, &test_class, &applied);
    ws.reset()?;
    let outcome = result?;
    let located = agents::locate_errors(&outcome.diagnostics, &applied, candidate.test_code.lines().count());
    Ok(Evaluation {
        outcome,
        applied: Some(applied),
        located,
    })
}

fn run_phases(
    candidate: &CandidateUpdate,
    task: &UpdateTask,
    ws: &Workspace,
    adapter: &mut dyn BuildAdapter,
    config: &SessionConfig,
    test_class: &str,
    applied: &AppliedTest,
) -> Result<ExecutionOutcome, CoordinatorError> {
    let req = RunRequest {
        workspace_root: ws.root.clone(),
        snapshot_id: ws.snapshot_id.clone(),
        test_class: test_class.to_string(),
        test_method: applied.method_name.clone(),
        focal: task.focal_after.method.clone(),
        timeouts: config.timeouts,
        candidate_digest: build::digest_of(candidate),
    };
    execute_request(&req, adapter)
}

/// Runs the four phases for an already-applied candidate, stopping at the
/// first failing one, and parses logs and reports into an outcome.
pub fn execute_request(req: &RunRequest, adapter: &mut dyn BuildAdapter) -> Result<ExecutionOutcome, CoordinatorError> {
    let patterns = LogPatterns::maven();
    let compile = adapter.run_compile(req)?;
    if !compile.ok {
        let d = failure_diagnostics(&compile, &patterns, DiagnosticKind::CompileError, &req.workspace_root);
        return Ok(ExecutionOutcome::failed(Phase::CompileFailed, d, compile.log_ref));
    }
    let tests = adapter.run_tests(req)?;
    if !tests.ok {
        let d = failure_diagnostics(&tests, &patterns, DiagnosticKind::RuntimeFailure, &req.workspace_root);
        return Ok(ExecutionOutcome::failed(Phase::TestsFailed, d, tests.log_ref));
    }
    let cov_run = adapter.run_coverage(req)?;
    if !cov_run.ok {
        let d = failure_diagnostics(&cov_run, &patterns, DiagnosticKind::RuntimeFailure, &req.workspace_root);
        return Ok(ExecutionOutcome::failed(Phase::TestsFailed, d, cov_run.log_ref));
    }
    let (cov_path, xml) = read_report(&cov_run)?;
    let coverage = parse_coverage_report(&xml, &req.focal).map_err(|source| CoordinatorError::Report { path: cov_path, source })?;
    let mut_run = adapter.run_mutation(req)?;
    if !mut_run.ok {
        let d = failure_diagnostics(&mut_run, &patterns, DiagnosticKind::RuntimeFailure, &req.workspace_root);
        return Ok(ExecutionOutcome::failed(Phase::TestsFailed, d, mut_run.log_ref));
    }
    let (mut_path, xml) = read_report(&mut_run)?;
    let mutation = parse_mutation_report(&xml, &req.focal).map_err(|source| CoordinatorError::Report { path: mut_path, source })?;
    Ok(ExecutionOutcome::passed(coverage, mutation, mut_run.log_ref))
}

/// The quality ordering: phase, then mutation score, branch coverage, line
/// coverage, and finally the earlier iteration. `Greater` means `a` is better.
pub fn quality_cmp(a: (&CandidateUpdate, &ExecutionOutcome), b: (&CandidateUpdate, &ExecutionOutcome)) -> Ordering {
    let key = |o: &ExecutionOutcome| (o.phase_reached.rank(), o.mutation_pct(), o.branch_pct(), o.line_pct());
    let (ka, kb) = (key(a.1), key(b.1));
    ka.0.cmp(&kb.0)
        .then(ka.1.total_cmp(&kb.1))
        .then(ka.2.total_cmp(&kb.2))
        .then(ka.3.total_cmp(&kb.3))
        .then(b.0.iteration.cmp(&a.0.iteration))
}

/// Keeps the better of the current best and the new pair.
pub fn record_best(best: Option<(CandidateUpdate, ExecutionOutcome)>, candidate: &CandidateUpdate, outcome: &ExecutionOutcome) -> (CandidateUpdate, ExecutionOutcome) {
    match best {
        Some((c, o)) if quality_cmp((&c, &o), (candidate, outcome)) != Ordering::Less => (c, o),
        _ => (candidate.clone(), outcome.clone()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Done {
    Thresholds,
    Budget,
    Continue,
}

fn meets(outcome: &ExecutionOutcome, config: &SessionConfig) -> (bool, bool) {
    let coverage_ok = outcome.line_pct() >= config.line_threshold && outcome.branch_pct() >= config.branch_threshold;
    (coverage_ok, outcome.mutation_pct() >= config.mutation_threshold)
}

pub fn has_done(outcome: &ExecutionOutcome, config: &SessionConfig, iteration: u32) -> Done {
    let (cov, mutation) = meets(outcome, config);
    if outcome.phase_reached == Phase::Passed && cov && mutation {
        Done::Thresholds
    } else if iteration >= config.max_iterations {
        Done::Budget
    } else {
        Done::Continue
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Error,
    Coverage,
    Mutation,
}

pub fn choose_agents(outcome: &ExecutionOutcome, config: &SessionConfig) -> Vec<AgentKind> {
    if outcome.phase_reached != Phase::Passed {
        return vec![AgentKind::Error];
    }
    let (cov, mutation) = meets(outcome, config);
    let mut out = Vec::new();
    if !cov {
        out.push(AgentKind::Coverage);
    }
    if !mutation {
        out.push(AgentKind::Mutation);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentOutput {
    pub agent: AgentKind,
    pub instructions: Vec<String>,
    pub context: Vec<ResolvedSymbol>,
}

/// Files each agent's instructions under its key, in the order given, keeping
/// only the first copy of any byte-identical instruction or context entry.
pub fn merge_instructions(outputs: &[AgentOutput]) -> InstructionBundle {
    let mut bundle = InstructionBundle::default();
    let mut seen = std::collections::HashSet::new();
    for out in outputs {
        let target = match out.agent {
            AgentKind::Error => &mut bundle.error_instructions,
            AgentKind::Coverage => &mut bundle.coverage_instructions,
            AgentKind::Mutation => &mut bundle.mutation_instructions,
        };
        for i in &out.instructions {
            if seen.insert(i.clone()) {
                target.push(i.clone());
            }
        }
        for c in &out.context {
            if !bundle.retrieved_context.contains(c) {
                bundle.retrieved_context.push(c.clone());
            }
        }
    }
    bundle
}

/// Per-session mutable state beyond the build adapter.
pub struct SessionTools {
    pub workspace: Workspace,
    pub retriever: Retriever,
    pub catalog: KnownSymbolCatalog,
}

impl SessionTools {
    /// Workspace and retriever over `task.repo_post`, bundled symbol catalog.
    pub fn for_task(task: &UpdateTask, embedder: Arc<dyn Embedder>, config: &SessionConfig) -> Result<Self, CoordinatorError> {
        let workspace = Workspace::open(&task.repo_post)?;
        let budget = RetrievalBudget {
            max_iterations: config.max_retrieval_iterations,
            ..Default::default()
        };
        Ok(SessionTools {
            retriever: Retriever::new(&workspace.root, embedder, budget),
            workspace,
            catalog: KnownSymbolCatalog::bundled(),
        })
    }
}

/// A failed session still reports what it did.
#[derive(Debug, thiserror::Error)]
#[error("{source} (after {} recorded iterations)", trace.len())]
pub struct SessionError {
    #[source]
    pub source: CoordinatorError,
    pub trace: Vec<IterationRecord>,
}

/// Runs one update session. Preprocessing (hunk ranking and context
/// filtering) happens once; each iteration generates, extracts, evaluates,
/// records the best and, unless done, analyzes the outcome into instructions
/// for the next round.
pub fn run_update_session(
    task: &UpdateTask,
    config: &SessionConfig,
    gateway: &Gateway,
    adapter: &mut dyn BuildAdapter,
    tools: &mut SessionTools,
) -> Result<SessionResult, SessionError> {
    let mut trace = Vec::new();
    match session_loop(task, config, gateway, adapter, tools, &mut trace) {
        Ok((best, best_outcome, terminated_by)) => Ok(SessionResult {
            best,
            best_outcome,
            iterations_used: trace.len() as u32,
            trace,
            terminated_by,
        }),
        Err(source) => Err(SessionError { source, trace }),
    }
}

fn session_loop(
    task: &UpdateTask,
    config: &SessionConfig,
    gateway: &Gateway,
    adapter: &mut dyn BuildAdapter,
    tools: &mut SessionTools,
    trace: &mut Vec<IterationRecord>,
) -> Result<(CandidateUpdate, ExecutionOutcome, TerminatedBy), CoordinatorError> {
    config.validate()?;
    let problems = crate::model::validate_task(task);
    if !problems.is_empty() {
        return Err(CoordinatorError::Task(problems.join("; ")));
    }
    let ranked = agents::rank_hunks(&task.test_before, &task.diff_hunks, config.top_hunks);
    let context: FilteredContext = agents::filter_context(task, &ranked, gateway)?;

    let mut best: Option<(CandidateUpdate, ExecutionOutcome)> = None;
    let mut instructions: Option<InstructionBundle> = None;
    for iteration in 1..=config.max_iterations {
        let reply = agents::generate_update(task, &context, instructions.as_ref(), iteration, gateway)?;
        let evaluation = match extract_test_code(&reply, iteration) {
            Ok(candidate) => {
                let e = evaluate_candidate(&candidate, task, &mut tools.workspace, adapter, config)?;
                (candidate, e)
            }
            Err(CoordinatorError::NoCode) => {
                // Keep the loop going: the unchanged test stands in for the
                // missing candidate and the failure is fed back.
                let candidate = CandidateUpdate {
                    test_code: task.test_before.clone(),
                    imports: Vec::new(),
                    iteration,
                };
                let d = Diagnostic::new(DiagnosticKind::CompileError, "the reply contained no extractable test method");
                let e = Evaluation {
                    outcome: ExecutionOutcome::failed(Phase::CompileFailed, vec![d.clone()], ""),
                    applied: None,
                    located: vec![d],
                };
                (candidate, e)
            }
            Err(e) => return Err(e),
        };
        let (candidate, Evaluation { outcome, located, .. }) = evaluation;
        log::info!(
            "iteration {iteration}: {:?} line {:.2} branch {:.2} mutation {:.2}",
            outcome.phase_reached,
            outcome.line_pct(),
            outcome.branch_pct(),
            outcome.mutation_pct()
        );
        best = Some(record_best(best.take(), &candidate, &outcome));
        let done = has_done(&outcome, config, iteration);
        let next = if done == Done::Continue {
            Some(analyze_outcome(task, &candidate, &outcome, &located, config, gateway, tools)?)
        } else {
            None
        };
        trace.push(IterationRecord {
            candidate,
            outcome,
            instructions: next.clone().unwrap_or_default(),
        });
        match done {
            Done::Thresholds | Done::Budget => {
                let (c, o) = best.expect("at least one iteration ran");
                let by = if done == Done::Thresholds { TerminatedBy::ThresholdsMet } else { TerminatedBy::MaxIterations };
                return Ok((c, o, by));
            }
            Done::Continue => instructions = next,
        }
    }
    unreachable!("has_done fires by max_iterations")
}

fn analyze_outcome(
    task: &UpdateTask,
    candidate: &CandidateUpdate,
    outcome: &ExecutionOutcome,
    located: &[Diagnostic],
    config: &SessionConfig,
    gateway: &Gateway,
    tools: &mut SessionTools,
) -> Result<InstructionBundle, CoordinatorError> {
    let agents_to_run = choose_agents(outcome, config);
    debug_assert!(!agents_to_run.is_empty(), "has_done would have fired");
    let focal = &task.focal_after.source;
    let mut outputs = Vec::new();
    for agent in agents_to_run {
        let out = match agent {
            AgentKind::Error => {
                let a = agents::error::analyze(outcome, located, task, &candidate.test_code, &tools.catalog, &mut tools.retriever, gateway)?;
                AgentOutput {
                    agent,
                    instructions: a.instructions,
                    context: a.context,
                }
            }
            AgentKind::Coverage => {
                let facts = outcome.coverage.as_ref().expect("passed outcome has coverage");
                let list = agents::coverage::analyze(facts, focal, &candidate.test_code, gateway)?;
                AgentOutput {
                    agent,
                    instructions: list.iter().map(ToString::to_string).collect(),
                    context: Vec::new(),
                }
            }
            AgentKind::Mutation => {
                let facts = outcome.mutation.as_ref().expect("passed outcome has mutation facts");
                AgentOutput {
                    agent,
                    instructions: agents::mutation::analyze(facts, focal, &candidate.test_code, gateway)?,
                    context: Vec::new(),
                }
            }
        };
        outputs.push(out);
    }
    let mut bundle = merge_instructions(&outputs);
    if bundle.is_empty() {
        // e.g. a mutation phase below threshold with nothing left to kill
        bundle.error_instructions.push("improve the test so that it meets the coverage and mutation thresholds".into());
    }
    Ok(bundle)
}
