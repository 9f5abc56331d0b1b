//! Command-line front end: `update`, `detect`, `annotate`, `eval`.
//!
//! Exit codes: 0 success, 1 partial (some task failed or did not compile),
//! 2 configuration or usage error.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::agents::{annotate_coverage, annotate_mutations, KnownSymbolCatalog};
use crate::build::{BuildAdapter, MavenAdapter, MavenCommands, ReplayAdapter, ReplayBundle, Workspace};
use crate::coordinator::{run_update_session, SessionConfig, SessionTools};
use crate::corpus::{self, OutdatedVerdict, Sample};
use crate::eval::{aggregate_metrics, ngram_overlap, Metrics};
use crate::java::{self, JavaSource};
use crate::llm::{load_transcript, ChatBackend, ChatConfig, Gateway, HttpBackend, RetryPolicy, TemplateCatalog, UreqTransport};
use crate::model::{Phase, SessionResult, UpdateTask};
use crate::report::{parse_coverage_report, parse_mutation_report};
use crate::retrieval::{Embedder, HashEmbedder, HttpEmbedder, Retriever};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "testmend", version, about = "Update outdated Java unit tests from build, coverage and mutation feedback")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run an update session for every task in a manifest.
    Update {
        #[arg(long)]
        manifest: PathBuf,
        /// Serve build results from a recorded bundle instead of running Maven.
        #[arg(long)]
        replay_bundle: Option<PathBuf>,
        /// Serve model replies from a recorded transcript.
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Three-round outdated-test detection over a sample manifest.
    Detect {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        replay_bundle: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print a focal method annotated with coverage or mutation results.
    Annotate {
        #[arg(long)]
        report: PathBuf,
        /// Java file holding the focal method.
        #[arg(long)]
        source: PathBuf,
        /// Focal method name; may be omitted when the file declares one method.
        #[arg(long)]
        method: Option<String>,
        #[arg(long, value_enum)]
        mode: AnnotateMode,
    },
    /// Aggregate metrics over a directory of session traces.
    Eval {
        traces: PathBuf,
        /// Java sources to measure n-gram overlap of the best tests against.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        ngram: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AnnotateMode {
    Coverage,
    Mutation,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed(_) => EXIT_PARTIAL,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmBackendKind {
    #[default]
    Http,
    Replay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub backend: LlmBackendKind,
    pub transcript: Option<PathBuf>,
    /// Directory of prompt templates overriding the bundled ones.
    pub templates: Option<PathBuf>,
    pub request_timeout_s: u64,
    #[serde(flatten)]
    pub chat: ChatConfig,
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection {
            backend: LlmBackendKind::Http,
            transcript: None,
            templates: None,
            request_timeout_s: 120,
            chat: ChatConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    #[default]
    Maven,
    Replay,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterSection {
    pub kind: AdapterKind,
    pub bundle: Option<PathBuf>,
    pub commands: MavenCommands,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Hash,
    Http,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSection {
    pub kind: EmbedderKind,
    pub dimension: usize,
    pub endpoint: String,
    pub model: String,
    pub credential: String,
}

impl Default for EmbedderSection {
    fn default() -> Self {
        EmbedderSection {
            kind: EmbedderKind::Hash,
            dimension: 256,
            endpoint: "https://api.openai.com/v1/embeddings".into(),
            model: "text-embedding-3-small".into(),
            credential: "OPENAI_API_KEY".into(),
        }
    }
}

/// The whole config file. Relative paths resolve against the file's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub session: SessionConfig,
    pub llm: LlmSection,
    pub adapter: AdapterSection,
    pub embedder: EmbedderSection,
    /// Extra `<name> <class|static> <import>` lines for the symbol catalog.
    pub known_symbols: Option<PathBuf>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let mut cfg: Config = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        cfg.session
            .validate()
            .map_err(|e| usage(format!("{}: [session] {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.llm.transcript, &mut cfg.llm.templates, &mut cfg.adapter.bundle, &mut cfg.known_symbols]
            .into_iter()
            .flatten()
        {
            *p = base.join(&*p);
        }
        Ok(cfg)
    }

    fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Config::default()), Config::load)
    }

    pub fn gateway(&self) -> Result<Gateway, CliError> {
        let catalog = match &self.llm.templates {
            Some(dir) => TemplateCatalog::load_dir(dir),
            None => TemplateCatalog::bundled(),
        }
        .map_err(usage)?;
        let backend: Box<dyn ChatBackend> = match self.llm.backend {
            LlmBackendKind::Replay => {
                let path = self.llm.transcript.as_ref().ok_or_else(|| usage("[llm] backend = \"replay\" needs `transcript`"))?;
                Box::new(load_transcript(path).map_err(usage)?)
            }
            LlmBackendKind::Http => Box::new(HttpBackend::new(
                Box::new(UreqTransport::new(Duration::from_secs(self.llm.request_timeout_s))),
                RetryPolicy::default(),
            )),
        };
        Ok(Gateway::new(catalog, backend, self.llm.chat.clone()))
    }

    pub fn embedder(&self) -> Arc<dyn Embedder> {
        match self.embedder.kind {
            EmbedderKind::Hash => Arc::new(HashEmbedder {
                dimension: self.embedder.dimension,
            }),
            EmbedderKind::Http => Arc::new(HttpEmbedder {
                transport: Box::new(UreqTransport::new(Duration::from_secs(self.llm.request_timeout_s))),
                retry: RetryPolicy::default(),
                endpoint: self.embedder.endpoint.clone(),
                model: self.embedder.model.clone(),
                credential: self.embedder.credential.clone(),
                dimension: self.embedder.dimension,
            }),
        }
    }

    pub fn catalog(&self) -> Result<KnownSymbolCatalog, CliError> {
        match &self.known_symbols {
            Some(p) => KnownSymbolCatalog::bundled_with(p).map_err(|e| usage(format!("{}: {e}", p.display()))),
            None => Ok(KnownSymbolCatalog::bundled()),
        }
    }

    /// Opens the replay bundle once; adapters are cheap to make per task.
    fn adapter_factory(&self) -> Result<AdapterFactory, CliError> {
        Ok(match self.adapter.kind {
            AdapterKind::Replay => {
                let root = self.adapter.bundle.as_ref().ok_or_else(|| usage("[adapter] kind = \"replay\" needs `bundle`"))?;
                AdapterFactory::Replay(ReplayBundle::open(root).map_err(usage)?)
            }
            AdapterKind::Maven => AdapterFactory::Maven(self.adapter.commands.clone()),
        })
    }

    fn apply_overrides(&mut self, replay_bundle: Option<&Path>, transcript: Option<&Path>) {
        if let Some(b) = replay_bundle {
            self.adapter.kind = AdapterKind::Replay;
            self.adapter.bundle = Some(b.to_path_buf());
        }
        if let Some(t) = transcript {
            self.llm.backend = LlmBackendKind::Replay;
            self.llm.transcript = Some(t.to_path_buf());
        }
    }
}

enum AdapterFactory {
    Replay(ReplayBundle),
    Maven(MavenCommands),
}

impl AdapterFactory {
    fn make(&self) -> Result<Box<dyn BuildAdapter>, CliError> {
        Ok(match self {
            AdapterFactory::Replay(b) => Box::new(ReplayAdapter::new(b.clone())),
            AdapterFactory::Maven(c) => Box::new(MavenAdapter::new(c.clone())),
        })
    }
}

/// Either an update task file or a revision-pair sample to build one from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskEntry {
    File { id: String, task: String },
    Sample(Sample),
}

impl TaskEntry {
    pub fn id(&self) -> &str {
        match self {
            TaskEntry::File { id, .. } => id,
            TaskEntry::Sample(s) => &s.id,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskManifest {
    pub tasks: Vec<TaskEntry>,
}

/// Loads an update manifest, resolving every entry to a task whose
/// workspaces exist. Paths are relative to the manifest.
pub fn load_tasks(path: &Path) -> Result<Vec<(String, UpdateTask)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let manifest: TaskManifest = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for entry in manifest.tasks {
        let mut task = match &entry {
            TaskEntry::File { task, .. } => {
                let p = base.join(task);
                let text = std::fs::read_to_string(&p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
                let mut t: UpdateTask = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?;
                let dir = p.parent().unwrap_or(Path::new("."));
                t.repo_pre = dir.join(&t.repo_pre).display().to_string();
                t.repo_post = dir.join(&t.repo_post).display().to_string();
                t
            }
            TaskEntry::Sample(s) => {
                let (pre, post) = (base.join(&s.pre), base.join(&s.post));
                for p in [&pre, &post] {
                    if !p.is_dir() {
                        return Err(usage(format!("task `{}`: workspace {} does not exist", s.id, p.display())));
                    }
                }
                let diff = match &s.diff {
                    Some(d) => {
                        let p = base.join(d);
                        Some(std::fs::read_to_string(&p).map_err(|e| usage(format!("{}: {e}", p.display())))?)
                    }
                    None => None,
                };
                corpus::build_task(&pre, &post, &s.test_file, &s.test_method, diff.as_deref())
                    .map_err(|e| usage(format!("task `{}`: {e}", s.id)))?
            }
        };
        if !Path::new(&task.repo_post).is_dir() {
            return Err(usage(format!("task `{}`: workspace {} does not exist", entry.id(), task.repo_post)));
        }
        let problems = crate::model::validate_task_against(&task, Path::new(&task.repo_post));
        if !problems.is_empty() {
            return Err(usage(format!("task `{}`: {}", entry.id(), problems.join("; "))));
        }
        task.repo_pre = normalize(&task.repo_pre);
        task.repo_post = normalize(&task.repo_post);
        out.push((entry.id().to_string(), task));
    }
    Ok(out)
}

fn normalize(p: &str) -> String {
    std::fs::canonicalize(p).map_or_else(|_| p.to_string(), |c| c.display().to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub id: String,
    /// `passed`, `tests_failed`, `compile_failed` or `error`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations_used: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminated_by: Option<crate::model::TerminatedBy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_coverage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch_coverage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateSummary {
    pub tasks: Vec<TaskSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
}

fn phase_label(p: Phase) -> &'static str {
    match p {
        Phase::CompileFailed => "compile_failed",
        Phase::TestsFailed => "tests_failed",
        Phase::Passed => "passed",
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

/// Replaces absolute workspace paths in a trace with repo-relative ones.
fn relativize(result: &mut SessionResult, roots: &[&str]) {
    let fix = |s: &mut String| {
        for root in roots {
            if let Some(rest) = s.strip_prefix(root) {
                *s = rest.trim_start_matches('/').to_string();
                return;
            }
        }
    };
    let outcomes = std::iter::once(&mut result.best_outcome).chain(result.trace.iter_mut().map(|r| &mut r.outcome));
    for o in outcomes {
        fix(&mut o.raw_log_ref);
        for d in &mut o.diagnostics {
            if let Some(p) = &mut d.file_path {
                fix(p);
            }
        }
    }
}

fn run_one(id: &str, task: &UpdateTask, cfg: &Config, factory: &AdapterFactory, gateway: &Gateway, out: &Path, isolate: bool) -> TaskSummary {
    let fail = |e: String| TaskSummary {
        id: id.to_string(),
        status: "error".into(),
        iterations_used: None,
        terminated_by: None,
        line_coverage: None,
        branch_coverage: None,
        mutation_score: None,
        error: Some(e),
    };
    let mut adapter = match factory.make() {
        Ok(a) => a,
        Err(e) => return fail(e.to_string()),
    };
    // With several jobs each session works on its own copy of the post tree.
    let scratch = match isolate.then(tempfile::tempdir).transpose() {
        Ok(s) => s,
        Err(e) => return fail(e.to_string()),
    };
    let workspace = match Workspace::open(&task.repo_post) {
        Ok(ws) => match &scratch {
            Some(dir) => ws.clone_to(dir.path()),
            None => Ok(ws),
        },
        Err(e) => Err(e),
    };
    let workspace = match workspace {
        Ok(ws) => ws,
        Err(e) => return fail(e.to_string()),
    };
    let catalog = match cfg.catalog() {
        Ok(c) => c,
        Err(e) => return fail(e.to_string()),
    };
    let mut retriever = Retriever::new(&workspace.root, cfg.embedder(), crate::retrieval::RetrievalBudget {
        max_iterations: cfg.session.max_retrieval_iterations,
        ..Default::default()
    });
    if !isolate {
        retriever = retriever.with_cache(out.join("index-cache").join(id));
    }
    let roots = [workspace.root.display().to_string(), task.repo_post.clone(), task.repo_pre.clone()];
    let mut tools = SessionTools {
        workspace,
        retriever,
        catalog,
    };
    let mut scoped = task.clone();
    scoped.repo_post = tools.workspace.root.display().to_string();
    match run_update_session(&scoped, &cfg.session, gateway, adapter.as_mut(), &mut tools) {
        Ok(mut result) => {
            relativize(&mut result, &roots.iter().map(String::as_str).collect::<Vec<_>>());
            let path = out.join(format!("{id}.trace.json"));
            if let Err(e) = write_json(&path, &result) {
                return fail(e.to_string());
            }
            let o = &result.best_outcome;
            let passed = o.phase_reached == Phase::Passed;
            TaskSummary {
                id: id.to_string(),
                status: phase_label(o.phase_reached).into(),
                iterations_used: Some(result.iterations_used),
                terminated_by: Some(result.terminated_by),
                line_coverage: passed.then(|| o.line_pct()),
                branch_coverage: passed.then(|| o.branch_pct()),
                mutation_score: passed.then(|| o.mutation_pct()),
                error: None,
            }
        }
        Err(e) => {
            log::error!("task {id}: {e}");
            let partial = out.join(format!("{id}.partial.json"));
            let _ = write_json(&partial, &e.trace);
            fail(e.to_string())
        }
    }
}

pub fn cmd_update(cfg: &Config, manifest: &Path, jobs: usize, out: &Path) -> Result<i32, CliError> {
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let tasks = load_tasks(manifest)?;
    let gateway = cfg.gateway()?;
    let factory = cfg.adapter_factory()?;
    std::fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;

    let isolate = jobs > 1;
    let slots: Vec<Mutex<Option<TaskSummary>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    std::thread::scope(|s| {
        for _ in 0..jobs.min(tasks.len().max(1)) {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some((id, task)) = tasks.get(i) else { break };
                let summary = run_one(id, task, cfg, &factory, &gateway, out, isolate);
                *slots[i].lock().unwrap() = Some(summary);
            });
        }
    });
    let summaries: Vec<TaskSummary> = slots.into_iter().map(|m| m.into_inner().unwrap().expect("every task ran")).collect();

    let mut results = Vec::new();
    for s in &summaries {
        let p = out.join(format!("{}.trace.json", s.id));
        if s.error.is_none() {
            if let Ok(text) = std::fs::read_to_string(&p) {
                if let Ok(r) = serde_json::from_str::<SessionResult>(&text) {
                    results.push(r);
                }
            }
        }
    }
    let summary = UpdateSummary {
        metrics: aggregate_metrics(&results).ok(),
        tasks: summaries,
    };
    write_json(&out.join("summary.json"), &summary)?;
    for t in &summary.tasks {
        println!(
            "{}\t{}\t{}",
            t.id,
            t.status,
            match (t.line_coverage, t.branch_coverage, t.mutation_score) {
                (Some(l), Some(b), Some(m)) => format!("line {l:.2} branch {b:.2} mutation {m:.2}"),
                _ => t.error.clone().unwrap_or_default(),
            }
        );
    }
    let all_compiled = summary.tasks.iter().all(|t| t.status == "passed" || t.status == "tests_failed");
    Ok(if all_compiled { EXIT_OK } else { EXIT_PARTIAL })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<OutdatedVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn detect_one(s: &Sample, cfg: &Config, factory: &AdapterFactory) -> Result<OutdatedVerdict, String> {
    let (pre, post) = (Path::new(&s.pre), Path::new(&s.post));
    let (before, after) = corpus::focal_pair(pre, post, &s.test_file, &s.test_method).map_err(|e| e.to_string())?;
    let mut pre_ws = Workspace::open(pre).map_err(|e| e.to_string())?;
    let mut post_ws = Workspace::open(post).map_err(|e| e.to_string())?;
    let mut adapter = factory.make().map_err(|e| e.to_string())?;
    corpus::detect_outdated(
        &mut pre_ws,
        &mut post_ws,
        &s.test_file,
        &s.test_method,
        &before.method,
        &after.method,
        adapter.as_mut(),
        cfg.session.timeouts,
    )
    .map_err(|e| e.to_string())
}

pub fn cmd_detect(cfg: &Config, manifest: &Path, out: &Path) -> Result<i32, CliError> {
    let samples = corpus::SampleManifest::load(manifest).map_err(usage)?;
    for s in &samples.samples {
        for p in [&s.pre, &s.post] {
            if !Path::new(p).is_dir() {
                return Err(usage(format!("sample `{}`: workspace {p} does not exist", s.id)));
            }
        }
    }
    let factory = cfg.adapter_factory()?;
    std::fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    let mut records = Vec::new();
    for s in &samples.samples {
        let rec = match detect_one(s, cfg, &factory) {
            Ok(v) => {
                let cause = v.cause.map_or("-".to_string(), |c| serde_json::to_value(c).unwrap().as_str().unwrap_or("").to_string());
                println!("{}\t{}\t{cause}", s.id, if v.is_outdated { "outdated" } else { "not_outdated" });
                DetectRecord {
                    id: s.id.clone(),
                    verdict: Some(v),
                    error: None,
                }
            }
            Err(e) => {
                println!("{}\terror\t{e}", s.id);
                DetectRecord {
                    id: s.id.clone(),
                    verdict: None,
                    error: Some(e),
                }
            }
        };
        records.push(rec);
    }
    write_json(&out.join("verdicts.json"), &records)?;
    Ok(if records.iter().all(|r| r.error.is_none()) { EXIT_OK } else { EXIT_PARTIAL })
}

/// The focal method as printed by `annotate`: annotated when the report has
/// data for it, otherwise unchanged.
pub fn annotate_source(report: &[u8], source: &str, source_rel: &str, method: Option<&str>, mode: AnnotateMode) -> Result<String, CliError> {
    let parsed = JavaSource::parse(source);
    let candidates: Vec<_> = parsed
        .methods
        .iter()
        .filter(|m| m.has_body && method.is_none_or(|n| m.name == n))
        .collect();
    let decl = match (candidates.as_slice(), method) {
        ([one], _) => *one,
        ([], Some(n)) => return Err(usage(format!("{source_rel}: no method `{n}`"))),
        ([], None) => return Err(usage(format!("{source_rel}: no method with a body"))),
        (_, _) => {
            let names: Vec<&str> = candidates.iter().map(|m| m.name.as_str()).collect();
            return Err(usage(format!("{source_rel}: several candidates ({}); pass --method", names.join(", "))));
        }
    };
    let focal = corpus::method_ref(source_rel, &parsed, decl);
    let text = java::member_source(source, decl.decl_start, decl.end);
    if report.iter().all(u8::is_ascii_whitespace) {
        return Ok(text);
    }
    let annotated = match mode {
        AnnotateMode::Coverage => {
            let facts = parse_coverage_report(report, &focal).map_err(usage)?;
            annotate_coverage(&text, &facts)
        }
        AnnotateMode::Mutation => {
            let facts = parse_mutation_report(report, &focal).map_err(usage)?;
            annotate_mutations(&text, &facts)
        }
    };
    annotated.map_err(usage)
}

pub fn cmd_annotate(report: &Path, source: &Path, method: Option<&str>, mode: AnnotateMode) -> Result<i32, CliError> {
    let bytes = std::fs::read(report).map_err(|e| usage(format!("{}: {e}", report.display())))?;
    let src = std::fs::read_to_string(source).map_err(|e| usage(format!("{}: {e}", source.display())))?;
    let rel = source.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let text = annotate_source(&bytes, &src, &rel, method, mode)?;
    println!("{text}");
    Ok(EXIT_OK)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub metrics: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ngram_overlap: Option<f64>,
}

fn files_with_suffix(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.file_name().to_string_lossy().ends_with(suffix))
        .map(|e| e.into_path())
        .collect();
    v.sort();
    v
}

pub fn cmd_eval(traces: &Path, reference: Option<&Path>, n: usize, out: Option<&Path>) -> Result<i32, CliError> {
    if !traces.is_dir() {
        return Err(usage(format!("{} is not a directory", traces.display())));
    }
    let mut results = Vec::new();
    for p in files_with_suffix(traces, ".trace.json") {
        let text = std::fs::read_to_string(&p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
        results.push(serde_json::from_str::<SessionResult>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?);
    }
    let metrics = aggregate_metrics(&results).map_err(|e| usage(format!("{}: {e}", traces.display())))?;
    let overlap = match reference {
        Some(dir) => {
            let refs: Vec<String> = files_with_suffix(dir, ".java").iter().filter_map(|p| std::fs::read_to_string(p).ok()).collect();
            let gen: Vec<String> = results.iter().map(|r| r.best.test_code.clone()).collect();
            Some(ngram_overlap(&gen, &refs, n).map_err(usage)?)
        }
        None => None,
    };
    println!("{metrics}");
    if let Some(o) = overlap {
        println!("{n}-gram    {o:>8.4}");
    }
    if let Some(path) = out {
        write_json(
            path,
            &EvalReport {
                metrics,
                ngram_overlap: overlap,
            },
        )?;
    }
    Ok(EXIT_OK)
}

/// Parses nothing; runs an already-parsed command line and returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let result = (|| -> Result<i32, CliError> {
        match &cli.command {
            Command::Update {
                manifest,
                replay_bundle,
                transcript,
                jobs,
                out,
            } => {
                let mut cfg = Config::load_or_default(cli.config.as_deref())?;
                cfg.apply_overrides(replay_bundle.as_deref(), transcript.as_deref());
                cmd_update(&cfg, manifest, *jobs, out)
            }
            Command::Detect { manifest, replay_bundle, out } => {
                let mut cfg = Config::load_or_default(cli.config.as_deref())?;
                cfg.apply_overrides(replay_bundle.as_deref(), None);
                cmd_detect(&cfg, manifest, out)
            }
            Command::Annotate { report, source, method, mode } => cmd_annotate(report, source, method.as_deref(), *mode),
            Command::Eval { traces, reference, ngram, out } => cmd_eval(traces, reference.as_deref(), *ngram, out.as_deref()),
        }
    })();
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
