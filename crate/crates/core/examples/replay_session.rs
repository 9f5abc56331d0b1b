//! Run one update session offline: build results come from a replay bundle,
//! model replies from a transcript. Works on a scratch copy of `<post>`.
//!
//!     cargo run --example replay_session -- \
//!         tests/fixtures/projects/profiler-pre tests/fixtures/projects/profiler-post \
//!         src/test/java/org/example/profiler/ProfilerConfigurationTest.java testInjectHtml \
//!         tests/fixtures/bundle tests/fixtures/transcripts/profiler-e2e.jsonl

use std::path::Path;
use std::sync::Arc;

use testmend::agents::KnownSymbolCatalog;
use testmend::build::{ReplayAdapter, ReplayBundle, Workspace};
use testmend::coordinator::{run_update_session, SessionConfig, SessionTools};
use testmend::llm::{load_transcript, Gateway};
use testmend::retrieval::{HashEmbedder, RetrievalBudget, Retriever};

fn die(e: impl std::fmt::Display) -> ! {
    eprintln!("{e}");
    std::process::exit(1);
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [pre, post, file, method, bundle, transcript] = args.as_slice() else {
        eprintln!("usage: replay_session <pre> <post> <test-file> <test-method> <bundle-dir> <transcript>");
        std::process::exit(2);
    };
    let mut task = testmend::corpus::build_task(Path::new(pre), Path::new(post), file, method, None).unwrap_or_else(|e| die(e));

    // the bundle keys snapshots by directory name, so the copy keeps it
    let scratch = tempfile::tempdir().unwrap_or_else(|e| die(e));
    let name = Path::new(post).file_name().unwrap_or_else(|| die("post path has no name"));
    let workspace = Workspace::open(post)
        .and_then(|ws| ws.clone_to(&scratch.path().join(name)))
        .unwrap_or_else(|e| die(e));
    task.repo_post = workspace.root.display().to_string();

    let retriever = Retriever::new(&workspace.root, Arc::new(HashEmbedder::default()), RetrievalBudget::default());
    let mut tools = SessionTools {
        workspace,
        retriever,
        catalog: KnownSymbolCatalog::bundled(),
    };
    let gateway = Gateway::replay(load_transcript(Path::new(transcript)).unwrap_or_else(|e| die(e))).unwrap_or_else(|e| die(e));
    let mut adapter = ReplayAdapter::new(ReplayBundle::open(bundle).unwrap_or_else(|e| die(e)));

    let result = run_update_session(&task, &SessionConfig::default(), &gateway, &mut adapter, &mut tools).unwrap_or_else(|e| die(e));
    for rec in &result.trace {
        let o = &rec.outcome;
        println!(
            "iteration {}: {:?} line {:.2} branch {:.2} mutation {:.2}",
            rec.candidate.iteration,
            o.phase_reached,
            o.line_pct(),
            o.branch_pct(),
            o.mutation_pct()
        );
        for i in rec.instructions.error_instructions.iter().chain(&rec.instructions.coverage_instructions).chain(&rec.instructions.mutation_instructions) {
            println!("    -> {i}");
        }
    }
    println!("terminated by {:?} after {} iterations; best is iteration {}", result.terminated_by, result.iterations_used, result.best.iteration);
    println!("\n{}", result.best.test_code);
}
