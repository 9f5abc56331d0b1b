//! Dataset tooling over local revision pairs: focal-method identification,
//! three-round outdated-test detection, and building update tasks.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use similar::TextDiff;
use walkdir::WalkDir;

use crate::build::{self, apply_method, current_test_candidate, AdapterError, BuildAdapter, PhaseTimeouts, RunRequest, Workspace};
use crate::coordinator::{execute_request, CoordinatorError};
use crate::java::{self, JavaSource, MethodDecl};
use crate::model::{round2, CoverageFacts, DiffHunk, ExecutionOutcome, FocalMethod, MethodRef, MutationFacts, Phase, UpdateTask};
use crate::report::{parse_unified_diff, ReportError};
use crate::tokens::name_similarity;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{}: {reason}", path.display())]
    Io { path: PathBuf, reason: String },
    #[error("{path}: no method `{method}` with a body")]
    MethodNotFound { path: String, method: String },
    #[error("no focal method found for {0}")]
    NoFocal(String),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("manifest: {0}")]
    Manifest(String),
}

fn read(root: &Path, rel: &str) -> Result<String, CorpusError> {
    let path = root.join(rel);
    std::fs::read_to_string(&path).map_err(|e| CorpusError::Io { path, reason: e.to_string() })
}

/// Production path mirrored from a test path: the `test` directory segment
/// becomes `main` and the `Test`/`Tests` affix leaves the class name.
pub fn mirrored_main_path(test_path: &str) -> Option<String> {
    let mut parts: Vec<String> = test_path.split('/').map(String::from).collect();
    let seg = parts.iter().position(|p| p == "test")?;
    parts[seg] = "main".into();
    let file = parts.last_mut()?;
    let stem = file.strip_suffix(".java")?;
    let class = stem
        .strip_suffix("Tests")
        .or_else(|| stem.strip_suffix("Test"))
        .or_else(|| stem.strip_prefix("Test"))
        .filter(|c| !c.is_empty())?;
    *file = format!("{class}.java");
    Some(parts.join("/"))
}

/// A [`MethodRef`] for `decl` in the file at `rel`.
pub fn method_ref(rel: &str, parsed: &JavaSource, decl: &MethodDecl) -> MethodRef {
    MethodRef {
        file_path: rel.to_string(),
        fully_qualified_class: parsed.qualified_name(&decl.class_name),
        method_name: decl.name.clone(),
        signature: decl.param_types.clone(),
        line_span: (decl.start_line, decl.end_line),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocalCandidate {
    pub method: MethodRef,
    pub source: String,
    pub similarity: f64,
}

fn arity_fits(decl: &MethodDecl, args: usize) -> bool {
    let n = decl.param_types.len();
    match decl.param_types.last() {
        Some(last) if last.ends_with("...") => args + 1 >= n,
        _ => args == n,
    }
}

/// Production methods the test calls directly, from the mirrored production
/// file, ranked by name similarity to the test method (declaration order on
/// ties). Calls qualified by another class (`Assert.assertEquals`) are ignored.
pub fn identify_focal_method(test_file: &str, test_method: &str, repo: &Path) -> Result<Vec<FocalCandidate>, CorpusError> {
    let test_src = read(repo, test_file)?;
    let parsed = JavaSource::parse(&test_src);
    let decl = parsed
        .methods_named(test_method)
        .find(|m| m.has_body)
        .ok_or_else(|| CorpusError::MethodNotFound {
            path: test_file.into(),
            method: test_method.into(),
        })?;
    let Some(main_rel) = mirrored_main_path(test_file) else { return Ok(Vec::new()) };
    let Ok(main_src) = read(repo, &main_rel) else { return Ok(Vec::new()) };
    let main = JavaSource::parse(&main_src);
    let main_class = main_rel.rsplit('/').next().and_then(|f| f.strip_suffix(".java")).unwrap_or_default();

    let calls = java::call_sites(&test_src[decl.sig_start..decl.end]);
    let mut picked: BTreeSet<usize> = BTreeSet::new();
    for call in &calls {
        if call.receiver.as_deref().is_some_and(|r| r.starts_with(char::is_uppercase) && r != main_class) {
            continue;
        }
        for (i, m) in main.methods.iter().enumerate() {
            if m.has_body && m.name == call.name && arity_fits(m, call.arg_count) {
                picked.insert(i);
            }
        }
    }
    let mut out: Vec<FocalCandidate> = picked
        .into_iter()
        .map(|i| {
            let m = &main.methods[i];
            FocalCandidate {
                method: method_ref(&main_rel, &main, m),
                source: java::member_source(&main_src, m.decl_start, m.end),
                similarity: name_similarity(test_method, &m.name),
            }
        })
        .collect();
    out.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutdatedCause {
    CompileError,
    TestFailure,
    CoverageDegradation,
    MutationDegradation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutdatedVerdict {
    pub is_outdated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<OutdatedCause>,
    /// pre test on pre code, pre test on post code, post test on post code
    pub round_outcomes: Vec<ExecutionOutcome>,
    /// Absent when round 1 did not pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_coverage: Option<CoverageFacts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_mutation: Option<MutationFacts>,
}

/// Outdated iff rounds 1 and 3 passed and round 2 failed or degraded; the
/// cause is the first of compile error, test failure, coverage degradation,
/// mutation degradation. Percentages compare rounded to two decimals.
pub fn classify_rounds(rounds: &[ExecutionOutcome; 3]) -> Option<OutdatedCause> {
    let [r1, r2, r3] = rounds;
    if r1.phase_reached != Phase::Passed || r3.phase_reached != Phase::Passed {
        return None;
    }
    match r2.phase_reached {
        Phase::CompileFailed => Some(OutdatedCause::CompileError),
        Phase::TestsFailed => Some(OutdatedCause::TestFailure),
        Phase::Passed => {
            let lower = |a: f64, b: f64| round2(a) < round2(b);
            if lower(r2.line_pct(), r1.line_pct()) || lower(r2.branch_pct(), r1.branch_pct()) {
                Some(OutdatedCause::CoverageDegradation)
            } else if lower(r2.mutation_pct(), r1.mutation_pct()) {
                Some(OutdatedCause::MutationDegradation)
            } else {
                None
            }
        }
    }
}

fn test_class(ws: &Workspace, test_file: &str) -> Result<String, CorpusError> {
    let src = ws.read(test_file)?;
    let stem = Path::new(test_file).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(JavaSource::parse(&src).qualified_name(&stem))
}

fn run_round(
    ws: &Workspace,
    test_file: &str,
    test_method: &str,
    digest: String,
    focal: &MethodRef,
    timeouts: PhaseTimeouts,
    adapter: &mut dyn BuildAdapter,
) -> Result<ExecutionOutcome, CorpusError> {
    let req = RunRequest {
        workspace_root: ws.root.clone(),
        snapshot_id: ws.snapshot_id.clone(),
        test_class: test_class(ws, test_file)?,
        test_method: test_method.to_string(),
        focal: focal.clone(),
        timeouts,
        candidate_digest: digest,
    };
    Ok(execute_request(&req, adapter)?)
}

/// The three-round protocol. Round 2 swaps the pre-change test method (and its
/// imports) into the post-change file; the post workspace is restored after.
#[allow(clippy::too_many_arguments)]
pub fn detect_outdated(
    pre_ws: &mut Workspace,
    post_ws: &mut Workspace,
    test_file: &str,
    test_method: &str,
    focal_pre: &MethodRef,
    focal_post: &MethodRef,
    adapter: &mut dyn BuildAdapter,
    timeouts: PhaseTimeouts,
) -> Result<OutdatedVerdict, CorpusError> {
    let not_found = |ws: &Workspace| CorpusError::MethodNotFound {
        path: ws.root.join(test_file).display().to_string(),
        method: test_method.into(),
    };
    let pre_test = current_test_candidate(&pre_ws.read(test_file)?, test_method).ok_or_else(|| not_found(pre_ws))?;
    let post_test = current_test_candidate(&post_ws.read(test_file)?, test_method).ok_or_else(|| not_found(post_ws))?;

    let r1 = run_round(pre_ws, test_file, test_method, build::digest_of(&pre_test), focal_pre, timeouts, adapter)?;
    apply_method(post_ws, test_file, Some(test_method), &pre_test)?;
    let r2 = run_round(post_ws, test_file, test_method, build::digest_of(&pre_test), focal_post, timeouts, adapter);
    post_ws.reset()?;
    let r2 = r2?;
    let r3 = run_round(post_ws, test_file, test_method, build::digest_of(&post_test), focal_post, timeouts, adapter)?;

    let rounds = [r1, r2, r3];
    let cause = classify_rounds(&rounds);
    let [r1, r2, r3] = rounds;
    Ok(OutdatedVerdict {
        is_outdated: cause.is_some(),
        cause,
        baseline_coverage: r1.coverage.clone(),
        baseline_mutation: r1.mutation.clone(),
        round_outcomes: vec![r1, r2, r3],
    })
}

/// Unified diff of production sources (`.java` outside any `test` directory)
/// between two trees, paths relative to the roots.
pub fn production_diff(pre: &Path, post: &Path) -> Result<String, CorpusError> {
    let list = |root: &Path| -> BTreeSet<String> {
        WalkDir::new(root)
            .sort_by_file_name()
            .into_iter()
            .filter_entry(|e| !matches!(e.file_name().to_str(), Some("target" | ".git" | "test")))
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "java"))
            .filter_map(|e| e.path().strip_prefix(root).ok().map(|p| p.to_string_lossy().replace('\\', "/")))
            .collect()
    };
    let files: BTreeSet<String> = list(pre).union(&list(post)).cloned().collect();
    let mut out = String::new();
    for rel in files {
        let a = std::fs::read_to_string(pre.join(&rel)).unwrap_or_default();
        let b = std::fs::read_to_string(post.join(&rel)).unwrap_or_default();
        if a == b {
            continue;
        }
        let diff = TextDiff::from_lines(&a, &b);
        let text = diff
            .unified_diff()
            .context_radius(3)
            .missing_newline_hint(false)
            .header(&format!("a/{rel}"), &format!("b/{rel}"))
            .to_string();
        out.push_str(&format!("diff --git a/{rel} b/{rel}\n"));
        out.push_str(&text);
    }
    Ok(out)
}

fn is_test_method(src: &str, m: &MethodDecl) -> bool {
    let header = &src[m.decl_start..m.sig_start];
    header.contains("@Test") || header.contains("@ParameterizedTest") || header.contains("@RepeatedTest")
}

/// The focal method of a test in the pre tree and its same-named counterpart
/// in the post tree, preferring identical parameters. Candidates are tried in
/// rank order; one that no longer exists after the change (a renamed method)
/// is passed over.
pub fn focal_pair(pre: &Path, post: &Path, test_file: &str, test_method: &str) -> Result<(FocalMethod, FocalMethod), CorpusError> {
    let candidates = identify_focal_method(test_file, test_method, pre)?;
    if candidates.is_empty() {
        return Err(CorpusError::NoFocal(format!("{test_file}#{test_method}")));
    }
    let mut missing = None;
    for focal_pre in candidates {
        let post_main = read(post, &focal_pre.method.file_path)?;
        let post_parsed = JavaSource::parse(&post_main);
        let mut named: Vec<&MethodDecl> = post_parsed.methods_named(&focal_pre.method.method_name).filter(|m| m.has_body).collect();
        named.sort_by_key(|m| (m.param_types != focal_pre.method.signature, m.param_types.len() != focal_pre.method.signature.len()));
        let Some(after) = named.first().copied() else {
            missing.get_or_insert_with(|| CorpusError::MethodNotFound {
                path: focal_pre.method.file_path.clone(),
                method: focal_pre.method.method_name.clone(),
            });
            continue;
        };
        let focal_after = FocalMethod {
            method: method_ref(&focal_pre.method.file_path, &post_parsed, after),
            source: java::member_source(&post_main, after.decl_start, after.end),
        };
        let focal_before = FocalMethod {
            method: focal_pre.method,
            source: focal_pre.source,
        };
        return Ok((focal_before, focal_after));
    }
    Err(missing.expect("at least one candidate was tried"))
}

/// Builds an [`UpdateTask`] for one test of a revision pair. The focal method
/// is the top-ranked candidate in the pre tree and its same-named, same-arity
/// counterpart in the post tree. `diff` overrides the computed production diff.
pub fn build_task(pre: &Path, post: &Path, test_file: &str, test_method: &str, diff: Option<&str>) -> Result<UpdateTask, CorpusError> {
    let pre_src = read(pre, test_file)?;
    let test_before = current_test_candidate(&pre_src, test_method)
        .ok_or_else(|| CorpusError::MethodNotFound {
            path: test_file.into(),
            method: test_method.into(),
        })?
        .test_code;
    let (focal_before, focal_after) = focal_pair(pre, post, test_file, test_method)?;

    let parsed = JavaSource::parse(&pre_src);
    let top = parsed.classes.first().cloned().unwrap_or_default();
    let non_test_methods = parsed
        .methods
        .iter()
        .filter(|m| m.has_body && m.name != test_method && m.class_name == top && !is_test_method(&pre_src, m))
        .map(|m| java::member_source(&pre_src, m.decl_start, m.end))
        .collect();
    let class_variables = parsed
        .fields
        .iter()
        .filter(|f| f.class_name == top)
        .map(|f| java::member_source(&pre_src, f.decl_start, f.end))
        .collect();

    let diff_text = match diff {
        Some(d) => d.to_string(),
        None => production_diff(pre, post)?,
    };
    let diff_hunks: Vec<DiffHunk> = parse_unified_diff(&diff_text)?;
    Ok(UpdateTask {
        test_before,
        test_class_path: test_file.to_string(),
        non_test_methods,
        class_variables,
        focal_before,
        focal_after,
        diff_hunks,
        repo_pre: pre.display().to_string(),
        repo_post: post.display().to_string(),
    })
}

/// One (pre, post, test) triple. Paths are relative to the manifest file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    pub pre: String,
    pub post: String,
    /// Repo-relative test file.
    pub test_file: String,
    pub test_method: String,
    /// Optional unified diff file overriding the computed production diff.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleManifest {
    pub samples: Vec<Sample>,
}

impl SampleManifest {
    /// Loads the manifest and resolves sample paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut m: SampleManifest = serde_json::from_str(&text).map_err(|e| CorpusError::Manifest(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut ids = BTreeSet::new();
        for s in &mut m.samples {
            if !ids.insert(s.id.clone()) {
                return Err(CorpusError::Manifest(format!("duplicate sample id `{}`", s.id)));
            }
            for p in [&mut s.pre, &mut s.post] {
                *p = base.join(&*p).display().to_string();
            }
            if let Some(d) = &mut s.diff {
                *d = base.join(&*d).display().to_string();
            }
        }
        Ok(m)
    }
}
