//! Shared fixture plumbing for the integration tests.
#![allow(dead_code)]

pub mod oracles;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use testmend::build::{ReplayAdapter, ReplayBundle, Workspace};
use testmend::coordinator::{run_update_session, SessionConfig, SessionError, SessionTools};
use testmend::llm::{load_transcript, Gateway, ReplayBackend};
use testmend::model::{SessionResult, UpdateTask};
use testmend::retrieval::{HashEmbedder, RetrievalBudget, Retriever};

pub const PROFILER_TEST: &str = "src/test/java/org/example/profiler/ProfilerConfigurationTest.java";
pub const REGISTER_TEST: &str = "src/test/java/org/example/wiki/PropertyRegisterTest.java";
pub const CART_TEST: &str = "src/test/java/org/example/cart/CartTest.java";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn project(name: &str) -> PathBuf {
    fixtures().join("projects").join(name)
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(fixtures().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn profiler_task() -> UpdateTask {
    testmend::corpus::build_task(&project("profiler-pre"), &project("profiler-post"), PROFILER_TEST, "testInjectHtml", None).unwrap()
}

pub fn register_task() -> UpdateTask {
    testmend::corpus::build_task(
        &project("register-pre"),
        &project("register-post"),
        REGISTER_TEST,
        "testSetMissingPropertyTypeFromStringValue",
        None,
    )
    .unwrap()
}

pub fn bundle() -> ReplayBundle {
    ReplayBundle::open(fixtures().join("bundle")).unwrap()
}

/// A private copy of a fixture tree that keeps its directory name (the
/// replay snapshot id).
pub struct Scratch {
    _dir: tempfile::TempDir,
    pub workspace: Workspace,
}

pub fn scratch(project_name: &str) -> Scratch {
    let dir = tempfile::tempdir().unwrap();
    let workspace = Workspace::open(project(project_name)).unwrap().clone_to(&dir.path().join(project_name)).unwrap();
    Scratch { _dir: dir, workspace }
}

/// Runs a session against a private copy of the task's post tree.
pub fn run_session(task: &UpdateTask, backend: ReplayBackend, config: &SessionConfig) -> (Result<SessionResult, SessionError>, ReplayAdapter) {
    let post_name = Path::new(&task.repo_post).file_name().unwrap().to_string_lossy().into_owned();
    let Scratch { _dir, workspace } = scratch(&post_name);
    let mut task = task.clone();
    task.repo_post = workspace.root.display().to_string();
    let retriever = Retriever::new(&workspace.root, Arc::new(HashEmbedder::default()), RetrievalBudget::default());
    let mut tools = SessionTools {
        workspace,
        retriever,
        catalog: testmend::agents::KnownSymbolCatalog::bundled(),
    };
    let gateway = Gateway::replay(backend).unwrap();
    let mut adapter = ReplayAdapter::new(bundle());
    let result = run_update_session(&task, config, &gateway, &mut adapter, &mut tools);
    (result, adapter)
}

pub fn transcript(name: &str) -> ReplayBackend {
    load_transcript(&fixtures().join("transcripts").join(name)).unwrap()
}
