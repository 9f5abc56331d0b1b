//! Report and diff parsers against every checked-in fixture, with hand-counted
//! expectations and brute-force scans of the raw files as oracles.

mod common;

use common::oracles::*;
use common::*;
use testmend::agents::extract_mutation_info;
use testmend::model::MutantStatus;
use testmend::report::{parse_build_log, parse_coverage_report, parse_mutation_report, parse_unified_diff, LogPatterns};

#[test]
fn every_coverage_fixture_matches_hand_counts() {
    let table = coverage_table();
    let mut listed: Vec<String> = table.iter().map(|t| t.0.to_string()).collect();
    listed.sort();
    assert_eq!(listed, fixture_files("reports", ".jacoco.xml"), "every coverage fixture needs a hand count");
    for (file, focal, line, branch) in table {
        let facts = parse_coverage_report(read(&format!("reports/{file}")).as_bytes(), &focal).unwrap();
        assert!((facts.line_coverage_pct - line).abs() <= 0.01, "{file}: line {}", facts.line_coverage_pct);
        assert!((facts.branch_coverage_pct - branch).abs() <= 0.01, "{file}: branch {}", facts.branch_coverage_pct);
        assert!(facts.violations().is_empty(), "{file}: {:?}", facts.violations());
    }
}

#[test]
fn every_mutation_fixture_matches_hand_counts() {
    let table = mutation_table();
    let mut listed: Vec<String> = table.iter().map(|t| t.0.to_string()).collect();
    listed.sort();
    assert_eq!(listed, fixture_files("reports", ".mutations.xml"), "every mutation fixture needs a hand count");
    for (file, focal, killed, survived, uncovered, score) in table {
        let facts = parse_mutation_report(read(&format!("reports/{file}")).as_bytes(), &focal).unwrap();
        assert_eq!(
            (facts.count(MutantStatus::Killed), facts.count(MutantStatus::Survived), facts.count(MutantStatus::NoCoverage)),
            (killed, survived, uncovered),
            "{file}"
        );
        assert!((facts.mutation_score_pct - score).abs() <= 0.01, "{file}: {}", facts.mutation_score_pct);
    }
}

#[test]
fn open_mutants_match_a_raw_scan() {
    for (file, focal, ..) in mutation_table() {
        let xml = read(&format!("reports/{file}"));
        let facts = parse_mutation_report(xml.as_bytes(), &focal).unwrap();
        let (s, u) = extract_mutation_info(&facts);
        let lines = |ms: Vec<&testmend::model::Mutant>| ms.iter().map(|m| m.line).collect::<Vec<_>>();
        assert_eq!((lines(s), lines(u)), brute_force_open_mutants(&xml, &focal.method_name), "{file}");
    }
}

#[test]
fn diff_fixtures_round_trip_byte_exactly() {
    let files = fixture_files("diffs", "");
    assert!(files.len() >= 5);
    for file in files {
        let text = read(&format!("diffs/{file}"));
        let hunks = parse_unified_diff(&text).unwrap();
        let raw = raw_hunks(&text);
        assert_eq!(hunks.len(), raw.len(), "{file}");
        for (i, (h, r)) in hunks.iter().zip(&raw).enumerate() {
            assert_eq!(h.index, i);
            assert_eq!(&h.render(), r, "{file} hunk {i}");
        }
    }
}

#[test]
fn multi_file_diff_paths_and_indices() {
    let hunks = parse_unified_diff(&read("diffs/multi-file.diff")).unwrap();
    let paths: Vec<&str> = hunks.iter().map(|h| h.file_path.rsplit('/').next().unwrap()).collect();
    assert_eq!(paths, ["Basket.java", "Basket.java", "Item.java", "Coupon.java"]);
    assert_eq!(hunks[0].section, "public class Basket {");
    assert!(hunks[2].lines.iter().any(|l| l.no_newline));
    assert_eq!(hunks[3].old_range, (0, 0));
}

#[test]
fn fixture_logs() {
    let p = LogPatterns::maven();
    let compile = parse_build_log(&read("logs/profiler-compile-error.log"), &p);
    assert!(!compile.unrecognized);
    assert_eq!(compile.diagnostics.len(), 1, "{:#?}", compile.diagnostics);
    let d = &compile.diagnostics[0];
    assert_eq!(d.symbol.as_deref(), Some("setInjectHtml"));
    assert_eq!(d.line, Some(20));

    let failed = parse_build_log(&read("logs/register-assertion-failure.log"), &p);
    assert_eq!(failed.diagnostics.len(), 1, "{:#?}", failed.diagnostics);
    let d = &failed.diagnostics[0];
    assert_eq!(d.expected.as_deref(), Some("http://wikiba.se/ontology#String"));
    assert_eq!(d.actual.as_deref(), Some("http://www.wikidata.org/ontology#propertyTypeString"));
    assert_eq!((d.file_path.as_deref(), d.line), (Some("PropertyRegisterTest.java"), Some(13)));

    for log in ["logs/profiler-passed.log", "logs/register-passed.log", "logs/cart-passed.log"] {
        let ok = parse_build_log(&read(log), &p);
        assert!(!ok.unrecognized && ok.diagnostics.is_empty(), "{log}");
    }
}
