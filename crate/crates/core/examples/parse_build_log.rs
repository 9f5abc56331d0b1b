//! Extract compiler errors and test failures from a Maven log.
//!
//!     cargo run --example parse_build_log -- tests/fixtures/logs/register-assertion-failure.log

use testmend::report::{parse_build_log, LogPatterns};

fn main() {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: parse_build_log <log>");
        std::process::exit(2);
    };
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| {
        eprintln!("{path}: {e}");
        std::process::exit(1);
    });
    let log = parse_build_log(&text, &LogPatterns::maven());
    if log.unrecognized {
        eprintln!("warning: nothing recognized in {path}");
    }
    for d in &log.diagnostics {
        println!("{}", serde_json::to_string(d).expect("diagnostic serializes"));
    }
}
