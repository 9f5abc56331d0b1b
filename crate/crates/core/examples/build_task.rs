//! Build an update task from a pre/post revision pair and print it as JSON.
//!
//!     cargo run --example build_task -- <pre> <post> <test-file> <test-method>

use std::path::Path;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [pre, post, file, method] = args.as_slice() else {
        eprintln!("usage: build_task <pre> <post> <test-file> <test-method>");
        std::process::exit(2);
    };
    let focal = testmend::corpus::identify_focal_method(file, method, Path::new(pre)).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(1);
    });
    for c in &focal {
        eprintln!("focal candidate {} {:?} similarity {:.3}", c.method.method_name, c.method.line_span, c.similarity);
    }
    match testmend::corpus::build_task(Path::new(pre), Path::new(post), file, method, None) {
        Ok(task) => println!("{}", serde_json::to_string_pretty(&task).expect("task serializes")),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
}
