//! Print a focal method with per-line coverage comments from a JaCoCo report.
//!
//!     cargo run --example annotate_coverage -- \
//!         tests/fixtures/reports/cart-cd-old-test.jacoco.xml \
//!         tests/fixtures/projects/cart-post-cd/src/main/java/org/example/cart/Cart.java total

use testmend::agents::{annotate_coverage, extract_uncover_info};
use testmend::java::{member_source, JavaSource};

fn die(e: impl std::fmt::Display) -> ! {
    eprintln!("{e}");
    std::process::exit(1);
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [report, source, method] = args.as_slice() else {
        eprintln!("usage: annotate_coverage <jacoco.xml> <Source.java> <method>");
        std::process::exit(2);
    };
    let xml = std::fs::read(report).unwrap_or_else(|e| die(e));
    let text = std::fs::read_to_string(source).unwrap_or_else(|e| die(e));
    let parsed = JavaSource::parse(&text);
    let decl = parsed.methods.iter().find(|m| &m.name == method && m.has_body).unwrap_or_else(|| die(format!("no method `{method}`")));
    let rel = std::path::Path::new(source).file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let focal = testmend::corpus::method_ref(&rel, &parsed, decl);

    let facts = testmend::report::parse_coverage_report(&xml, &focal).unwrap_or_else(|e| die(e));
    let body = member_source(&text, decl.decl_start, decl.end);
    println!("{}", annotate_coverage(&body, &facts).unwrap_or_else(|e| die(e)));
    let (lines, branches) = extract_uncover_info(&facts);
    eprintln!(
        "line {:.2}% branch {:.2}%; uncovered lines {lines:?}; partial branches {branches:?}",
        facts.line_coverage_pct, facts.branch_coverage_pct
    );
}
