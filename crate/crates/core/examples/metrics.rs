//! Aggregate pass rates and coverage over saved session traces, and the
//! n-gram overlap of the best tests with a reference corpus.
//!
//!     cargo run --example metrics -- out/ [reference-dir]

use std::path::Path;

use testmend::eval::{aggregate_metrics, ngram_overlap};
use testmend::model::SessionResult;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (traces, reference) = match args.as_slice() {
        [t] => (t, None),
        [t, r] => (t, Some(r)),
        _ => {
            eprintln!("usage: metrics <trace-dir> [reference-dir]");
            std::process::exit(2);
        }
    };
    let files = |dir: &str, suffix: &str| -> Vec<String> {
        walkdir::WalkDir::new(dir)
            .sort_by_file_name()
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| e.file_name().to_string_lossy().ends_with(suffix))
            .filter_map(|e| std::fs::read_to_string(e.path()).ok())
            .collect()
    };
    let results: Vec<SessionResult> = files(traces, ".trace.json").iter().filter_map(|t| serde_json::from_str(t).ok()).collect();
    match aggregate_metrics(&results) {
        Ok(m) => println!("{m}"),
        Err(e) => {
            eprintln!("{}: {e}", Path::new(traces).display());
            std::process::exit(1);
        }
    }
    if let Some(r) = reference {
        let generated: Vec<String> = results.iter().map(|r| r.best.test_code.clone()).collect();
        let overlap = ngram_overlap(&generated, &files(r, ".java"), 4).expect("n is positive");
        println!("4-gram    {overlap:>8.4}");
    }
}
