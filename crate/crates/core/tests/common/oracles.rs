//! Independent oracles and the randomized checks built on them. Shared by the
//! property tests and the acceptance runner.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use regex::Regex;

use testmend::agents;
use testmend::coordinator::record_best;
use testmend::llm::{Gateway, ReplayBackend, TemplateId, TranscriptRecord, WILDCARD_DIGEST};
use testmend::model::*;
use testmend::retrieval::{query, EmbeddingIndex, HashEmbedder, IndexEntry, RetrievalBudget, Retriever};

use super::{fixtures, project, read};

pub fn method(span: (u32, u32)) -> MethodRef {
    MethodRef {
        file_path: "src/main/java/a/A.java".into(),
        fully_qualified_class: "a.A".into(),
        method_name: "run".into(),
        signature: vec![],
        line_span: span,
    }
}

pub fn candidate(iteration: u32) -> CandidateUpdate {
    CandidateUpdate {
        test_code: format!("@Test public void t{iteration}() {{}}"),
        imports: vec![],
        iteration,
    }
}

// ---------------------------------------------------------------------------
// best-record fold

/// Percentages as the parsers produce them: two decimals.
pub const PCTS: [f64; 6] = [0.0, 33.33, 50.0, 66.67, 83.33, 100.0];

#[derive(Clone, Debug)]
pub struct Step {
    pub phase: Phase,
    pub line: usize,
    pub branch: usize,
    pub mutation: usize,
}

pub fn outcome(step: &Step) -> ExecutionOutcome {
    match step.phase {
        Phase::Passed => {
            let mut cov = CoverageFacts::new(method((1, 3)), BTreeMap::new(), BTreeMap::new());
            cov.line_coverage_pct = PCTS[step.line];
            cov.branch_coverage_pct = PCTS[step.branch];
            let mut mutation = MutationFacts::new(method((1, 3)), vec![]);
            mutation.mutation_score_pct = PCTS[step.mutation];
            ExecutionOutcome::passed(cov, mutation, "log")
        }
        p => ExecutionOutcome::failed(p, vec![Diagnostic::new(DiagnosticKind::CompileError, "x")], "log"),
    }
}

pub fn step() -> impl Strategy<Value = Step> {
    (
        prop_oneof![Just(Phase::CompileFailed), Just(Phase::TestsFailed), Just(Phase::Passed)],
        0..PCTS.len(),
        0..PCTS.len(),
        0..PCTS.len(),
    )
        .prop_map(|(phase, line, branch, mutation)| Step { phase, line, branch, mutation })
}

pub fn trace() -> impl Strategy<Value = Vec<Step>> {
    prop::collection::vec(step(), 1..9)
}

/// Integer keys, strict improvement only, so the earliest of equal records stays.
pub fn oracle_best(trace: &[Step]) -> u32 {
    let key = |s: &Step| -> (u8, usize, usize, usize) {
        match s.phase {
            Phase::CompileFailed => (0, 0, 0, 0),
            Phase::TestsFailed => (1, 0, 0, 0),
            Phase::Passed => (2, s.mutation, s.branch, s.line),
        }
    };
    let mut best = 0;
    for (i, s) in trace.iter().enumerate() {
        if key(s) > key(&trace[best]) {
            best = i;
        }
    }
    best as u32 + 1
}

pub fn check_best_fold(trace: &[Step]) -> Result<(), TestCaseError> {
    let mut best = None;
    for (i, s) in trace.iter().enumerate() {
        best = Some(record_best(best, &candidate(i as u32 + 1), &outcome(s)));
    }
    let (c, o) = best.unwrap();
    let want = oracle_best(trace);
    prop_assert_eq!(c.iteration, want);
    prop_assert_eq!(o, outcome(&trace[want as usize - 1]));
    Ok(())
}

// ---------------------------------------------------------------------------
// instruction completeness

#[derive(Clone, Debug)]
pub struct Facts {
    pub start: u32,
    pub lines: Vec<LineStatus>,
    pub branches: BTreeMap<u32, (u32, u32)>,
    pub mutants: Vec<(u32, MutantStatus)>,
}

pub fn facts() -> impl Strategy<Value = Facts> {
    (1u32..40, 1usize..12).prop_flat_map(|(start, len)| {
        let line_status = prop_oneof![Just(LineStatus::Covered), Just(LineStatus::NotCovered), Just(LineStatus::NoInstruction)];
        let branch = (0..len as u32, 2u32..5).prop_flat_map(|(off, t)| (Just(off), 0..=t, Just(t)));
        let status = prop_oneof![Just(MutantStatus::Killed), Just(MutantStatus::Survived), Just(MutantStatus::NoCoverage)];
        (
            prop::collection::vec(line_status, len),
            prop::collection::vec(branch, 0..4),
            prop::collection::vec((0..len as u32, status), 0..8),
        )
            .prop_map(move |(lines, branches, mutants)| Facts {
                start,
                lines,
                branches: branches.into_iter().map(|(off, c, t)| (start + off, (c, t))).collect(),
                mutants: mutants.into_iter().map(|(off, s)| (start + off, s)).collect(),
            })
    })
}

/// Reply lines in the formats the agents read, mixed with noise.
pub fn reply() -> impl Strategy<Value = String> {
    let line = prop_oneof![
        (0u32..55, prop_oneof![Just("easy"), Just("hard"), Just("??")], "[a-z ]{0,12}").prop_map(|(n, t, x)| format!("L{n} | {t} | {x}")),
        (0u32..55, prop_oneof![Just("easy"), Just("hard")], "[a-z ]{0,12}").prop_map(|(n, t, x)| format!("B{n} | {t} | {x}")),
        (0u32..10, "[a-z ]{0,12}").prop_map(|(n, x)| format!("M{n} | {x}")),
        "[ -~]{0,30}",
    ];
    prop::collection::vec(line, 0..12).prop_map(|v| v.join("\n"))
}

pub fn check_instruction_counts(f: &Facts, cov_reply: &str, mut_reply: &str) -> Result<(), TestCaseError> {
    let end = f.start + f.lines.len() as u32 - 1;
    let source: String = (0..f.lines.len()).map(|i| format!("    x{i} = {i};\n")).collect();
    let line_status: BTreeMap<u32, LineStatus> = f.lines.iter().enumerate().map(|(i, s)| (f.start + i as u32, *s)).collect();
    let cov = CoverageFacts::new(method((f.start, end)), line_status, f.branches.clone());
    let mutants: Vec<Mutant> = f
        .mutants
        .iter()
        .map(|(line, status)| Mutant {
            line: *line,
            operator: "MathMutator".into(),
            description: "Replaced integer addition with subtraction".into(),
            status: *status,
        })
        .collect();
    let mutation = MutationFacts::new(method((f.start, end)), mutants);

    // counts straight from the generated facts
    let not_covered = f.lines.iter().filter(|s| **s == LineStatus::NotCovered).count();
    let partial = f.branches.values().filter(|(c, t)| c < t).count();
    let open = f.mutants.iter().filter(|(_, s)| *s != MutantStatus::Killed).count();

    let gw = Gateway::replay(ReplayBackend::scripted([(TemplateId::CoverageAnalyze, cov_reply), (TemplateId::MutationAnalyze, mut_reply)])).unwrap();
    let cov_out = agents::coverage::analyze(&cov, &source, "@Test void t() {}", &gw).unwrap();
    let mut_out = agents::mutation::analyze(&mutation, &source, "@Test void t() {}", &gw).unwrap();
    prop_assert_eq!(cov_out.len(), not_covered + partial);
    prop_assert_eq!(mut_out.len(), open);
    Ok(())
}

// ---------------------------------------------------------------------------
// hunk ranking

pub const WORDS: [&str; 6] = ["alpha", "beta", "gamma", "delta", "config", "value"];

pub fn hunk(index: usize, changed: &[Vec<usize>]) -> DiffHunk {
    let mut lines = vec![DiffLine {
        tag: LineTag::Context,
        text: "context only".into(),
        no_newline: false,
    }];
    for (i, words) in changed.iter().enumerate() {
        lines.push(DiffLine {
            tag: if i % 2 == 0 { LineTag::Del } else { LineTag::Add },
            text: words.iter().map(|w| WORDS[*w]).collect::<Vec<_>>().join(" "),
            no_newline: false,
        });
    }
    DiffHunk {
        file_path: "src/main/java/a/A.java".into(),
        old_range: (1, 1),
        new_range: (1, 1),
        section: String::new(),
        lines,
        index,
    }
}

/// Brute force over a fixed vocabulary: dense TF-IDF vectors, cosine, token
/// multiset repetition, min-max, equal weights; best first, near-equal scores
/// by lower index.
pub fn oracle_rank(test: &[usize], docs: &[Vec<usize>], k: usize) -> Vec<usize> {
    let v = WORDS.len();
    let all: Vec<&[usize]> = std::iter::once(test).chain(docs.iter().map(Vec::as_slice)).collect();
    let n = all.len() as f64;
    let tf = |d: &[usize]| {
        let mut c = vec![0.0; v];
        d.iter().for_each(|w| c[*w] += 1.0);
        c
    };
    let tfs: Vec<Vec<f64>> = all.iter().map(|d| tf(d)).collect();
    let idf: Vec<f64> = (0..v)
        .map(|w| {
            let df = tfs.iter().filter(|c| c[w] > 0.0).count() as f64;
            ((1.0 + n) / (1.0 + df)).ln() + 1.0
        })
        .collect();
    let vecs: Vec<Vec<f64>> = tfs.iter().map(|c| (0..v).map(|w| c[w] * idf[w]).collect()).collect();
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let sims: Vec<f64> = vecs[1..]
        .iter()
        .map(|h| {
            let (a, b) = (norm(&vecs[0]), norm(h));
            if a == 0.0 || b == 0.0 {
                0.0
            } else {
                (0..v).map(|w| vecs[0][w] * h[w]).sum::<f64>() / (a * b)
            }
        })
        .collect();
    let bags: Vec<Vec<usize>> = tfs[1..].iter().map(|c| c.iter().map(|x| *x as usize).collect()).collect();
    let reps: Vec<f64> = bags.iter().map(|b| bags.iter().filter(|o| *o == b).count() as f64).collect();
    let scale = |xs: &[f64]| -> Vec<f64> {
        let lo = xs.iter().cloned().fold(f64::MAX, f64::min);
        let hi = xs.iter().cloned().fold(f64::MIN, f64::max);
        xs.iter().map(|x| if hi - lo > 1e-12 { (x - lo) / (hi - lo) } else { 0.0 }).collect()
    };
    let (s, r) = (scale(&sims), scale(&reps));
    let scores: Vec<f64> = (0..docs.len()).map(|i| 0.5 * s[i] + 0.5 * r[i]).collect();
    let mut left: Vec<usize> = (0..docs.len()).collect();
    let mut out = Vec::new();
    while !left.is_empty() && out.len() < k.max(1) {
        let top = left.iter().cloned().fold(f64::MIN, |m, i| m.max(scores[i]));
        let pick = *left.iter().filter(|i| top - scores[**i] <= 1e-12).min().unwrap();
        left.retain(|i| *i != pick);
        out.push(pick);
    }
    out
}

pub type RankingCase = (Vec<usize>, Vec<Vec<Vec<usize>>>, usize);

pub fn ranking_case() -> impl Strategy<Value = RankingCase> {
    let words = || prop::collection::vec(0..WORDS.len(), 0..4);
    (words(), prop::collection::vec(prop::collection::vec(words(), 1..3), 1..7), 0usize..9)
}

pub fn check_ranking((test, hunks, k): &RankingCase) -> Result<(), TestCaseError> {
    let built: Vec<DiffHunk> = hunks.iter().enumerate().map(|(i, h)| hunk(i, h)).collect();
    let test_text = test.iter().map(|w| WORDS[*w]).collect::<Vec<_>>().join(" ");
    let got: Vec<usize> = agents::rank_hunks(&test_text, &built, *k).iter().map(|h| h.index).collect();
    let docs: Vec<Vec<usize>> = hunks.iter().map(|h| h.concat()).collect();
    prop_assert_eq!(got, oracle_rank(test, &docs, *k));
    Ok(())
}

// ---------------------------------------------------------------------------
// retrieval

pub fn toy_index(vectors: &[Vec<f32>]) -> EmbeddingIndex {
    EmbeddingIndex {
        module_root: PathBuf::from("toy"),
        entries: vectors
            .iter()
            .enumerate()
            .map(|(i, v)| IndexEntry {
                name: format!("e{i}"),
                kind: SymbolKind::Method,
                doc: String::new(),
                signature_or_definition: String::new(),
                file_path: String::new(),
                import_path: String::new(),
                vector: v.clone(),
            })
            .collect(),
        dimension: 4,
        embedder_id: "toy".into(),
    }
}

pub type TopKCase = (Vec<Vec<f32>>, Vec<f32>, usize);

pub fn top_k_case() -> impl Strategy<Value = TopKCase> {
    // small integer components so equal scores really occur
    let vector = || prop::collection::vec((-2i8..3).prop_map(f32::from), 4);
    (prop::collection::vec(vector(), 1..10), vector(), 1usize..12)
}

pub fn check_top_k((vectors, q, k): &TopKCase) -> Result<(), TestCaseError> {
    let index = toy_index(vectors);
    let got: Vec<String> = query(&index, q, *k).unwrap().into_iter().map(|(e, _)| e.name.clone()).collect();
    let score = |v: &[f32]| -> f64 {
        let dot: f64 = v.iter().zip(q).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
        let na: f64 = v.iter().map(|a| f64::from(*a).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = q.iter().map(|a| f64::from(*a).powi(2)).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    };
    let mut order: Vec<(usize, f64)> = vectors.iter().map(|v| score(v)).enumerate().collect();
    // insertion sort, descending; equal scores keep insertion order
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && order[j - 1].1 < order[j].1 {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let want: Vec<String> = order.into_iter().take(*k).map(|(i, _)| format!("e{i}")).collect();
    prop_assert_eq!(got, want);
    Ok(())
}

pub const KNOWN_SYMBOLS: [&str; 3] = ["isInjectHtml", "setInjectHtmlEnabled", "injectHtmlEnabled"];
const UNKNOWN_SYMBOLS: [&str; 4] = ["frobnicate", "setInjectHtml", "widgetCount", "qux"];

pub type ResolveCase = (Vec<&'static str>, Vec<&'static str>);

pub fn resolve_case() -> impl Strategy<Value = ResolveCase> {
    let pool: Vec<&str> = KNOWN_SYMBOLS.iter().chain(&UNKNOWN_SYMBOLS).copied().collect();
    (
        prop::collection::vec(prop::sample::select(pool), 0..6),
        prop::collection::vec(prop_oneof![Just("none"), Just("1"), Just("2"), Just("NONE")], 12),
    )
}

/// At most three iterations, and every distinct input symbol ends up exactly
/// once in either the resolved or the unresolved list.
pub fn check_resolve((symbols, filters): &ResolveCase) -> Result<(), TestCaseError> {
    let mut script: Vec<(TemplateId, &str)> = Vec::new();
    for f in filters {
        script.push((TemplateId::RetrievalQuery, "enable injection into html pages"));
        script.push((TemplateId::RetrievalFilter, f));
    }
    let gw = Gateway::replay(ReplayBackend::scripted(script)).unwrap();
    let mut r = Retriever::new(&project("profiler-post"), Arc::new(HashEmbedder::default()), RetrievalBudget::default());
    let symbols: Vec<String> = symbols.iter().map(|s| s.to_string()).collect();
    let out = r.resolve_symbols(&symbols, "config.setInjectHtml(true);", &gw).unwrap();
    prop_assert!(out.iterations <= 3);
    let input: BTreeSet<&str> = symbols.iter().map(String::as_str).collect();
    let mut seen: Vec<&str> = out.resolved.iter().map(|r| r.requested.as_str()).chain(out.unresolved.iter().map(String::as_str)).collect();
    let total = seen.len();
    seen.sort();
    seen.dedup();
    prop_assert_eq!(seen.len(), total, "a symbol landed twice");
    prop_assert_eq!(seen.into_iter().collect::<BTreeSet<_>>(), input);
    for k in KNOWN_SYMBOLS {
        if symbols.iter().any(|s| s == k) {
            prop_assert!(out.resolved.iter().any(|r| r.requested == k && r.exact));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// report fixtures

pub fn focal(class: &str, method: &str, signature: &[&str], span: (u32, u32)) -> MethodRef {
    MethodRef {
        file_path: format!("src/main/java/{}.java", class.replace('.', "/")),
        fully_qualified_class: class.into(),
        method_name: method.into(),
        signature: signature.iter().map(|s| s.to_string()).collect(),
        line_span: span,
    }
}

fn profiler() -> MethodRef {
    focal("org.example.profiler.ProfilerConfiguration", "isInjectHtml", &[], (16, 18))
}
fn register() -> MethodRef {
    focal("org.example.wiki.PropertyRegister", "setPropertyTypeFromStringValue", &["String", "String"], (22, 26))
}
fn cart(span: (u32, u32)) -> MethodRef {
    focal("org.example.cart.Cart", "total", &[], span)
}

/// Hand counts: (file, focal, line %, branch %) — worked out from the
/// fixture sources, not from the parser.
pub fn coverage_table() -> Vec<(&'static str, MethodRef, f64, f64)> {
    vec![
        ("profiler-pre.jacoco.xml", profiler(), 100.0, 100.0),
        ("profiler-post.jacoco.xml", profiler(), 100.0, 100.0),
        ("register-pre.jacoco.xml", register(), 100.0, 100.0),
        ("register-post.jacoco.xml", register(), 100.0, 100.0),
        ("cart-pre.jacoco.xml", cart((14, 19)), 100.0, 100.0),
        // lines 15,16,18,21 covered, 19 missed; branches 2/2 on 15, 1/2 on 18
        ("cart-cd-old-test.jacoco.xml", cart((14, 22)), 80.0, 75.0),
        ("cart-cd-new-test.jacoco.xml", cart((14, 22)), 100.0, 100.0),
        ("cart-md.jacoco.xml", cart((16, 22)), 100.0, 100.0),
    ]
}

/// (file, focal, killed, survived, no_coverage, score)
pub fn mutation_table() -> Vec<(&'static str, MethodRef, usize, usize, usize, f64)> {
    vec![
        ("profiler-pre.mutations.xml", profiler(), 2, 0, 0, 100.0),
        ("profiler-full.mutations.xml", profiler(), 2, 0, 0, 100.0),
        ("profiler-half.mutations.xml", profiler(), 1, 1, 0, 50.0),
        ("profiler-none.mutations.xml", profiler(), 0, 2, 0, 0.0),
        ("register-pre.mutations.xml", register(), 2, 0, 0, 100.0),
        ("register-post.mutations.xml", register(), 2, 0, 0, 100.0),
        ("cart-pre.mutations.xml", cart((14, 19)), 5, 0, 0, 100.0),
        ("cart-cd-old-test.mutations.xml", cart((14, 22)), 6, 0, 0, 100.0),
        ("cart-cd-new-test.mutations.xml", cart((14, 22)), 6, 0, 0, 100.0),
        ("cart-md-old-test.mutations.xml", cart((16, 22)), 5, 1, 0, 83.33),
        ("cart-md-new-test.mutations.xml", cart((16, 22)), 6, 0, 0, 100.0),
        // TIMED_OUT counts as detected: 3 killed, 1 survived, 1 uncovered
        ("cart-weak.mutations.xml", cart((14, 19)), 3, 1, 1, 60.0),
    ]
}

/// Sorted file names under `fixtures/<dir>` ending with `suffix`.
pub fn fixture_files(dir: &str, suffix: &str) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(fixtures().join(dir))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(suffix))
        .collect();
    names.sort();
    names
}

/// Regex over the raw XML, no XML parser involved: lines of surviving and
/// uncovered mutants of `method`.
pub fn brute_force_open_mutants(xml: &str, method: &str) -> (Vec<u32>, Vec<u32>) {
    let re = Regex::new(r"(?s)<mutation [^>]*status='(\w+)'.*?<mutatedMethod>([^<]*)</mutatedMethod>.*?<lineNumber>(\d+)</lineNumber>").unwrap();
    let (mut survived, mut uncovered) = (Vec::new(), Vec::new());
    for c in re.captures_iter(xml) {
        if &c[2] != method {
            continue;
        }
        let line: u32 = c[3].parse().unwrap();
        match &c[1] {
            "SURVIVED" => survived.push(line),
            "NO_COVERAGE" => uncovered.push(line),
            _ => {}
        }
    }
    (survived, uncovered)
}

/// The hunk blocks of a diff: each `@@` header through the end of its body,
/// cut out of the raw text.
pub fn raw_hunks(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut current: Option<String> = None;
    for line in text.split_inclusive('\n') {
        let body = matches!(line.as_bytes().first(), Some(b' ' | b'+' | b'-' | b'\\')) && !line.starts_with("--- ") && !line.starts_with("+++ ");
        if line.starts_with("@@") {
            out.extend(current.take());
            current = Some(line.to_string());
        } else if body && current.is_some() {
            current.as_mut().unwrap().push_str(line);
        } else {
            out.extend(current.take());
        }
    }
    out.extend(current);
    out
}

// ---------------------------------------------------------------------------
// scripted sessions

#[derive(Clone, Copy, Debug)]
pub enum Reply {
    Stale,
    Partial,
    NoAssert,
    Prose,
}

pub fn any_reply() -> impl Strategy<Value = Reply> {
    prop_oneof![Just(Reply::Stale), Just(Reply::Partial), Just(Reply::NoAssert), Just(Reply::Prose)]
}

pub fn update_reply(kind: Reply) -> String {
    let file = match kind {
        Reply::Stale => "profiler-stale",
        Reply::Partial => "profiler-partial",
        Reply::NoAssert => "profiler-no-assert",
        Reply::Prose => return "I could not find enough context to update this test.".into(),
    };
    format!("```java\n{}```\n", read(&format!("bundle/candidates/{file}.java")))
}

/// A transcript whose update replies never reach the thresholds, with enough
/// analysis replies for every iteration.
pub fn budget_transcript(replies: &[Reply]) -> ReplayBackend {
    let wild = |id: TemplateId, text: String| TranscriptRecord {
        template_id: id.as_str().into(),
        binding_digest: WILDCARD_DIGEST.into(),
        response_text: text,
        prompt_digest: None,
    };
    let mut records = vec![wild(TemplateId::InputFilter, "{}".into())];
    records.extend(replies.iter().map(|r| wild(TemplateId::TestUpdate, update_reply(*r))));
    for _ in 0..replies.len() {
        records.push(wild(TemplateId::RetrievalQuery, "enable html injection".into()));
        records.push(wild(TemplateId::RetrievalFilter, "1".into()));
        records.push(wild(TemplateId::MutationAnalyze, "M1 | assert the returned flag".into()));
        records.push(wild(TemplateId::ErrorAnalyze, "- reply with a complete test method".into()));
    }
    ReplayBackend::new(records)
}
