//! The command-line binary, driven end to end over the fixtures.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use testmend::build::Workspace;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_testmend")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Copies fixture projects next to each other under a fresh directory.
fn workdir(projects: &[&str]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for p in projects {
        Workspace::open(project(p)).unwrap().clone_to(&dir.path().join(p)).unwrap();
    }
    dir
}

fn write_replay_config(dir: &Path, transcript_name: &str) {
    let cfg = format!(
        "[adapter]\nkind = \"replay\"\nbundle = {:?}\n\n[llm]\nbackend = \"replay\"\ntranscript = {:?}\n",
        fixtures().join("bundle").display().to_string(),
        fixtures().join("transcripts").join(transcript_name).display().to_string(),
    );
    std::fs::write(dir.join("replay.toml"), cfg).unwrap();
}

#[test]
fn update_then_eval() {
    let dir = workdir(&["profiler-pre", "profiler-post"]);
    let manifest = serde_json::json!({"tasks": [{
        "id": "profiler",
        "pre": "profiler-pre",
        "post": "profiler-post",
        "test_file": PROFILER_TEST,
        "test_method": "testInjectHtml",
    }]});
    std::fs::write(dir.path().join("tasks.json"), manifest.to_string()).unwrap();
    write_replay_config(dir.path(), "profiler-e2e.jsonl");
    let before = Workspace::open(dir.path().join("profiler-post")).unwrap().tree_hash().unwrap();

    let o = bin(&["--config", "replay.toml", "update", "--manifest", "tasks.json", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "profiler\tpassed\tline 100.00 branch 100.00 mutation 100.00");
    let trace: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/profiler.trace.json")).unwrap()).unwrap();
    assert_eq!(trace["iterations_used"], 3);
    assert_eq!(trace["terminated_by"], "thresholds_met");
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["metrics"]["tpr"], 100.0);
    // the session restores the working tree when it finishes
    assert_eq!(Workspace::open(dir.path().join("profiler-post")).unwrap().tree_hash().unwrap(), before);

    let o = bin(&["eval", "out", "--out", "metrics.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("CPR         100.00  (1 compiled)"), "{text}");
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["mean_mutation_score"], 100.0);

    // the best test against the post revision's own test file
    let reference = dir.path().join("profiler-post/src/test");
    let o = bin(&["eval", "out", "--reference", reference.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("4-gram"));
}

#[test]
fn detect_over_four_samples() {
    let names = ["profiler-pre", "profiler-post", "register-pre", "register-post", "cart-pre", "cart-post-cd", "cart-post-md"];
    let dir = workdir(&names);
    let sample = |id: &str, pre: &str, post: &str, file: &str, method: &str| {
        serde_json::json!({"id": id, "pre": pre, "post": post, "test_file": file, "test_method": method})
    };
    let manifest = serde_json::json!({"samples": [
        sample("profiler", "profiler-pre", "profiler-post", PROFILER_TEST, "testInjectHtml"),
        sample("register", "register-pre", "register-post", REGISTER_TEST, "testSetMissingPropertyTypeFromStringValue"),
        sample("cart-cd", "cart-pre", "cart-post-cd", CART_TEST, "testTotal"),
        sample("cart-md", "cart-pre", "cart-post-md", CART_TEST, "testTotal"),
    ]});
    std::fs::write(dir.path().join("samples.json"), manifest.to_string()).unwrap();
    let bundle = fixtures().join("bundle");
    let o = bin(&["detect", "--manifest", "samples.json", "--replay-bundle", bundle.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(
        lines,
        [
            "profiler\toutdated\tcompile_error",
            "register\toutdated\ttest_failure",
            "cart-cd\toutdated\tcoverage_degradation",
            "cart-md\toutdated\tmutation_degradation",
        ]
    );
    assert!(dir.path().join("out/verdicts.json").is_file());
}

#[test]
fn annotate_prints_the_golden_file() {
    let o = bin(
        &[
            "annotate",
            "--mode",
            "coverage",
            "--report",
            fixtures().join("reports/cart-cd-old-test.jacoco.xml").to_str().unwrap(),
            "--source",
            project("cart-post-cd").join("src/main/java/org/example/cart/Cart.java").to_str().unwrap(),
            "--method",
            "total",
        ],
        &fixtures(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), read("golden/cart-cd-total.coverage.txt"));
}

#[test]
fn annotate_with_empty_report_echoes_the_method() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.xml"), "").unwrap();
    let src = project("cart-pre").join("src/main/java/org/example/cart/Cart.java");
    let o = bin(
        &["annotate", "--mode", "mutation", "--report", "empty.xml", "--source", src.to_str().unwrap(), "--method", "total"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("public int total()") && !text.contains(" // "), "{text}");
}

#[test]
fn missing_workspace_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = serde_json::json!({"tasks": [{
        "id": "gone",
        "pre": "nowhere-pre",
        "post": "nowhere-post",
        "test_file": PROFILER_TEST,
        "test_method": "testInjectHtml",
    }]});
    std::fs::write(dir.path().join("tasks.json"), manifest.to_string()).unwrap();
    let o = bin(&["update", "--manifest", "tasks.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere-pre"));
}

#[test]
fn empty_manifest_succeeds_with_empty_summary() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tasks.json"), r#"{"tasks": []}"#).unwrap();
    write_replay_config(dir.path(), "profiler-e2e.jsonl");
    let o = bin(&["--config", "replay.toml", "update", "--manifest", "tasks.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["tasks"], serde_json::json!([]));
}

#[test]
fn unreadable_detect_workspace_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = serde_json::json!({"samples": [{
        "id": "x", "pre": "a", "post": "b", "test_file": CART_TEST, "test_method": "testTotal"
    }]});
    std::fs::write(dir.path().join("samples.json"), manifest.to_string()).unwrap();
    let o = bin(&["detect", "--manifest", "samples.json"], dir.path());
    assert_ne!(o.status.code(), Some(0));
}
