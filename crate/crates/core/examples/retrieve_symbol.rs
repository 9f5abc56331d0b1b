//! Resolve an unknown symbol against a repository's production code with the
//! offline hashing embedder. The query text stands in for the one a model
//! would write; the top candidate is accepted.
//!
//!     cargo run --example retrieve_symbol -- tests/fixtures/projects/profiler-post setInjectHtml \
//!         "enables or disables injection of the profiler widget into html pages"

use std::path::Path;
use std::sync::Arc;

use testmend::llm::{Gateway, ReplayBackend, TemplateId};
use testmend::retrieval::{build_index, query, Embedder, HashEmbedder, RetrievalBudget, Retriever};

fn die(e: impl std::fmt::Display) -> ! {
    eprintln!("{e}");
    std::process::exit(1);
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (repo, symbol, text) = match args.as_slice() {
        [r, s] => (r, s, s.clone()),
        [r, s, q] => (r, s, q.clone()),
        _ => {
            eprintln!("usage: retrieve_symbol <repo> <symbol> [query]");
            std::process::exit(2);
        }
    };
    let embedder = HashEmbedder::default();
    let index = build_index(Path::new(repo), &embedder).unwrap_or_else(|e| die(e));
    let vector = embedder.embed(std::slice::from_ref(&text)).unwrap_or_else(|e| die(e)).remove(0);
    println!("top entries for {text:?}:");
    for (e, score) in query(&index, &vector, 5).unwrap_or_else(|e| die(e)) {
        println!("  {score:.3}  {}  ({})", e.signature_or_definition, e.import_path);
    }

    let gateway = Gateway::replay(ReplayBackend::scripted([(TemplateId::RetrievalQuery, text.as_str()), (TemplateId::RetrievalFilter, "1")]))
        .unwrap_or_else(|e| die(e));
    let mut retriever = Retriever::new(Path::new(repo), Arc::new(embedder), RetrievalBudget::default());
    let out = retriever.resolve_symbols(std::slice::from_ref(symbol), "", &gateway).unwrap_or_else(|e| die(e));
    for r in &out.resolved {
        let s = &r.symbol;
        println!("{} -> {} [{}] {} (exact: {})", r.requested, s.signature_or_definition, s.import_path, s.file_path, r.exact);
    }
    for u in &out.unresolved {
        println!("{u} -> unresolved");
    }
    println!("{} iteration(s)", out.iterations);
}
