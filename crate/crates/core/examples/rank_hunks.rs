//! Rank the hunks of a production diff by relevance to a test.
//!
//!     cargo run --example rank_hunks -- \
//!         tests/fixtures/projects/profiler-pre/src/test/java/org/example/profiler/ProfilerConfigurationTest.java \
//!         tests/fixtures/diffs/multi-file.diff 3

use testmend::agents::{rank_hunks_with, HunkRanking};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (test, diff, k) = match args.as_slice() {
        [t, d] => (t, d, 10),
        [t, d, k] => (t, d, k.parse().unwrap_or(10)),
        _ => {
            eprintln!("usage: rank_hunks <test-source> <unified.diff> [k]");
            std::process::exit(2);
        }
    };
    let read = |p: &str| {
        std::fs::read_to_string(p).unwrap_or_else(|e| {
            eprintln!("{p}: {e}");
            std::process::exit(1);
        })
    };
    let hunks = testmend::report::parse_unified_diff(&read(diff)).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(1);
    });
    let config = HunkRanking { k, ..HunkRanking::default() };
    for r in rank_hunks_with(&read(test), &hunks, &config) {
        println!(
            "#{:<2} score {:.3}  tfidf {:.3}  repeated {}x  {} -{},{} +{},{}",
            r.hunk.index, r.score, r.tfidf, r.repetition, r.hunk.file_path, r.hunk.old_range.0, r.hunk.old_range.1, r.hunk.new_range.0, r.hunk.new_range.1
        );
    }
}
