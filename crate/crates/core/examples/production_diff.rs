//! Print the production-code diff between two source trees (test directories
//! and build output are skipped), then the hunks as parsed.
//!
//!     cargo run --example production_diff -- <pre> <post>

use std::path::Path;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [pre, post] = args.as_slice() else {
        eprintln!("usage: production_diff <pre> <post>");
        std::process::exit(2);
    };
    let diff = match testmend::corpus::production_diff(Path::new(pre), Path::new(post)) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    print!("{diff}");
    match testmend::report::parse_unified_diff(&diff) {
        Ok(hunks) => {
            for h in &hunks {
                eprintln!("hunk {} {} -{},{} +{},{}", h.index, h.file_path, h.old_range.0, h.old_range.1, h.new_range.0, h.new_range.1);
            }
        }
        Err(e) => eprintln!("{e}"),
    }
}
