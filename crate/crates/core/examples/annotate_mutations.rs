//! Print a focal method with one comment per mutant from a PIT report.
//!
//!     cargo run --example annotate_mutations -- \
//!         tests/fixtures/reports/cart-weak.mutations.xml \
//!         tests/fixtures/projects/cart-pre/src/main/java/org/example/cart/Cart.java total

use testmend::agents::{annotate_mutations, extract_mutation_info};
use testmend::java::{member_source, JavaSource};

fn die(e: impl std::fmt::Display) -> ! {
    eprintln!("{e}");
    std::process::exit(1);
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [report, source, method] = args.as_slice() else {
        eprintln!("usage: annotate_mutations <mutations.xml> <Source.java> <method>");
        std::process::exit(2);
    };
    let xml = std::fs::read(report).unwrap_or_else(|e| die(e));
    let text = std::fs::read_to_string(source).unwrap_or_else(|e| die(e));
    let parsed = JavaSource::parse(&text);
    let decl = parsed.methods.iter().find(|m| &m.name == method && m.has_body).unwrap_or_else(|| die(format!("no method `{method}`")));
    let rel = std::path::Path::new(source).file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let focal = testmend::corpus::method_ref(&rel, &parsed, decl);

    let facts = testmend::report::parse_mutation_report(&xml, &focal).unwrap_or_else(|e| die(e));
    let body = member_source(&text, decl.decl_start, decl.end);
    println!("{}", annotate_mutations(&body, &facts).unwrap_or_else(|e| die(e)));
    let (survived, uncovered) = extract_mutation_info(&facts);
    eprintln!("score {:.2}%; {} survived, {} without coverage", facts.mutation_score_pct, survived.len(), uncovered.len());
}
