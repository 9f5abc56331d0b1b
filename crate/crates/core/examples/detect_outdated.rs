//! Three-round check of whether a test is outdated by a production change,
//! with build results served from a replay bundle.
//!
//!     cargo run --example detect_outdated -- \
//!         tests/fixtures/projects/cart-pre tests/fixtures/projects/cart-post-cd \
//!         src/test/java/org/example/cart/CartTest.java testTotal tests/fixtures/bundle

use std::path::Path;

use testmend::build::{PhaseTimeouts, ReplayAdapter, ReplayBundle, Workspace};
use testmend::corpus::{detect_outdated, focal_pair};

fn die(e: impl std::fmt::Display) -> ! {
    eprintln!("{e}");
    std::process::exit(1);
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [pre, post, file, method, bundle] = args.as_slice() else {
        eprintln!("usage: detect_outdated <pre> <post> <test-file> <test-method> <bundle-dir>");
        std::process::exit(2);
    };
    let (before, after) = focal_pair(Path::new(pre), Path::new(post), file, method).unwrap_or_else(|e| die(e));
    println!("focal method {} {:?} -> {:?}", before.method.method_name, before.method.line_span, after.method.line_span);

    let scratch = tempfile::tempdir().unwrap_or_else(|e| die(e));
    let copy = |p: &str| {
        let name = Path::new(p).file_name().unwrap_or_else(|| die("path has no name"));
        Workspace::open(p).and_then(|ws| ws.clone_to(&scratch.path().join(name))).unwrap_or_else(|e| die(e))
    };
    let (mut pre_ws, mut post_ws) = (copy(pre), copy(post));
    let mut adapter = ReplayAdapter::new(ReplayBundle::open(bundle).unwrap_or_else(|e| die(e)));
    let v = detect_outdated(&mut pre_ws, &mut post_ws, file, method, &before.method, &after.method, &mut adapter, PhaseTimeouts::default())
        .unwrap_or_else(|e| die(e));

    for (round, o) in ["old test, old code", "old test, new code", "new test, new code"].iter().zip(&v.round_outcomes) {
        println!(
            "{round:<20} {:?} line {:.2} branch {:.2} mutation {:.2}",
            o.phase_reached,
            o.line_pct(),
            o.branch_pct(),
            o.mutation_pct()
        );
    }
    match v.cause {
        Some(c) => println!("outdated: {c:?}"),
        None => println!("not outdated"),
    }
}
