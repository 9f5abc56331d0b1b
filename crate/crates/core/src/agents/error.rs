use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{split_keep_ends, AgentError};
use crate::build::AppliedTest;
use crate::llm::{bindings, Gateway, TemplateId};
use crate::model::{Diagnostic, DiagnosticKind, ExecutionOutcome, Phase, ResolvedSymbol, UpdateTask};
use crate::retrieval::Retriever;

/// Annotation markers. Each annotation is a whole comment line.
pub const ERROR_MARKER: &str = "// ERROR: ";
pub const ASSERTION_MARKER: &str = "// ASSERTION FAILED: ";
pub const RUNTIME_MARKER: &str = "// RUNTIME FAILURE: ";

const BUNDLED_CATALOG: &str = include_str!("../../data/known_symbols.txt");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnownSymbol {
    /// `class` or `static`.
    pub kind: String,
    pub import_path: String,
}

impl KnownSymbol {
    pub fn import_decl(&self) -> String {
        if self.kind == "static" {
            format!("import static {};", self.import_path)
        } else {
            format!("import {};", self.import_path)
        }
    }
}

/// Standard-library and test-framework symbols whose imports are known
/// without looking at the project.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KnownSymbolCatalog {
    pub entries: BTreeMap<String, KnownSymbol>,
}

impl KnownSymbolCatalog {
    /// Lines of `<name> <kind> <import path>`; `#` starts a comment. Earlier
    /// entries win over later ones with the same name.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut catalog = KnownSymbolCatalog::default();
        catalog.extend_from(text)?;
        Ok(catalog)
    }

    pub fn extend_from(&mut self, text: &str) -> Result<(), String> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [name, kind, path] = parts[..] else {
                return Err(format!("line {}: expected `<name> <kind> <import path>`", i + 1));
            };
            if kind != "class" && kind != "static" {
                return Err(format!("line {}: unknown kind `{kind}`", i + 1));
            }
            self.entries.entry(name.to_string()).or_insert(KnownSymbol {
                kind: kind.to_string(),
                import_path: path.to_string(),
            });
        }
        Ok(())
    }

    /// The bundled JDK / JUnit 4 / JUnit 5 / Hamcrest / Mockito table.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_CATALOG).expect("bundled catalog parses")
    }

    /// Bundled entries plus a user file; user entries override bundled ones.
    pub fn bundled_with(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut user = Self::parse(&text)?;
        for (k, v) in Self::bundled().entries {
            user.entries.entry(k).or_insert(v);
        }
        Ok(user)
    }

    pub fn get(&self, name: &str) -> Option<&KnownSymbol> {
        self.entries.get(name)
    }
}

/// Splits symbols into catalog hits (with their import) and unknown names.
/// Duplicates are reported once, in first-seen order.
pub fn distinguish_unknown_symbols(symbols: &[String], catalog: &KnownSymbolCatalog) -> (Vec<(String, KnownSymbol)>, Vec<String>) {
    let mut known: Vec<(String, KnownSymbol)> = Vec::new();
    let mut unknown: Vec<String> = Vec::new();
    for s in symbols {
        if known.iter().any(|(k, _)| k == s) || unknown.contains(s) {
            continue;
        }
        match catalog.get(s) {
            Some(k) => known.push((s.clone(), k.clone())),
            None => unknown.push(s.clone()),
        }
    }
    (known, unknown)
}

/// Maps diagnostics into the coordinates of the applied test method: lines in
/// the test file that fall inside the method become 1-based method lines;
/// everything else loses its line (and is annotated in the trailing block).
pub fn locate_errors(diagnostics: &[Diagnostic], applied: &AppliedTest, method_lines: usize) -> Vec<Diagnostic> {
    let file_name = applied.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    diagnostics
        .iter()
        .map(|d| {
            let mut d = d.clone();
            let in_test_file = d
                .file_path
                .as_deref()
                .map(|p| Path::new(p).file_name().is_some_and(|n| n.to_string_lossy() == file_name))
                .unwrap_or(false);
            d.line = match d.line {
                Some(l) if in_test_file && l >= applied.first_line && ((l - applied.first_line) as usize) < method_lines => {
                    Some(l - applied.first_line + 1)
                }
                _ => None,
            };
            d
        })
        .collect()
}

fn annotation(d: &Diagnostic) -> String {
    match d.kind {
        DiagnosticKind::CompileError => format!("{ERROR_MARKER}{}", d.summary()),
        DiagnosticKind::AssertionFailure => match (&d.expected, &d.actual) {
            (Some(e), Some(a)) => format!("{ASSERTION_MARKER}expected <{e}> but was <{a}>"),
            _ => format!("{ASSERTION_MARKER}{}", d.summary()),
        },
        DiagnosticKind::RuntimeFailure => format!("{RUNTIME_MARKER}{}", d.summary()),
    }
}

fn is_annotation_line(line: &str) -> bool {
    let t = line.trim_start();
    [ERROR_MARKER, ASSERTION_MARKER, RUNTIME_MARKER].iter().any(|m| t.starts_with(m))
}

/// Inserts one comment line per diagnostic above the line it refers to
/// (method-relative, see [`locate_errors`]), indented like that line.
/// Diagnostics without a usable line go to a block after the method.
/// Multiple diagnostics on one line stack in diagnostic order.
pub fn annotate_errors(test_code: &str, diagnostics: &[Diagnostic]) -> String {
    if diagnostics.is_empty() {
        return test_code.to_string();
    }
    let lines = split_keep_ends(test_code);
    let mut by_line: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut trailing = Vec::new();
    for d in diagnostics {
        match d.line.map(|l| l as usize).filter(|l| (1..=lines.len()).contains(l)) {
            Some(l) => by_line.entry(l).or_default().push(annotation(d)),
            None => trailing.push(annotation(d)),
        }
    }
    let mut out = String::with_capacity(test_code.len() + 64 * diagnostics.len());
    for (i, (body, end)) in lines.iter().enumerate() {
        if let Some(notes) = by_line.get(&(i + 1)) {
            let indent: String = body.chars().take_while(|c| c.is_whitespace()).collect();
            let eol = if end.is_empty() { "\n" } else { end };
            for n in notes {
                out.push_str(&indent);
                out.push_str(n);
                out.push_str(eol);
            }
        }
        out.push_str(body);
        out.push_str(end);
    }
    if !trailing.is_empty() {
        let ends_with_newline = test_code.ends_with('\n');
        for (i, n) in trailing.iter().enumerate() {
            if i > 0 || !ends_with_newline {
                out.push('\n');
            }
            out.push_str(n);
        }
        if ends_with_newline {
            out.push('\n');
        }
    }
    out
}

/// Removes every line [`annotate_errors`] inserted.
pub fn strip_error_annotations(annotated: &str) -> String {
    let lines = split_keep_ends(annotated);
    let mut out = String::with_capacity(annotated.len());
    let mut dropped_unterminated_tail = false;
    for (i, (body, end)) in lines.iter().enumerate() {
        if is_annotation_line(body) {
            if end.is_empty() && i == lines.len() - 1 {
                dropped_unterminated_tail = true;
            }
            continue;
        }
        out.push_str(body);
        out.push_str(end);
    }
    if dropped_unterminated_tail && out.ends_with('\n') {
        out.pop();
        if out.ends_with('\r') {
            out.pop();
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorAnalysis {
    pub instructions: Vec<String>,
    pub context: Vec<ResolvedSymbol>,
    /// Imports to add, from catalog hits and retrieved symbols.
    pub imports: Vec<String>,
}

fn parse_instruction_lines(reply: &str) -> Vec<String> {
    let bullets: Vec<String> = reply
        .lines()
        .filter_map(|l| {
            let t = l.trim();
            let stripped = t
                .strip_prefix("- ")
                .or_else(|| t.strip_prefix("* "))
                .or_else(|| {
                    let digits = t.chars().take_while(char::is_ascii_digit).count();
                    (digits > 0).then(|| t[digits..].strip_prefix(". ").or_else(|| t[digits..].strip_prefix(") "))).flatten()
                })?;
            let s = stripped.trim();
            (!s.is_empty()).then(|| s.to_string())
        })
        .collect();
    if bullets.is_empty() && !reply.trim().is_empty() {
        return vec![reply.trim().to_string()];
    }
    bullets
}

fn failure_line(d: &Diagnostic) -> String {
    let at = d.line.map(|l| format!(" at test line {l}")).unwrap_or_default();
    match d.kind {
        DiagnosticKind::AssertionFailure => match (&d.expected, &d.actual) {
            (Some(e), Some(a)) => format!("- assertion failure{at}: expected <{e}> but was <{a}>"),
            _ => format!("- assertion failure{at}: {}", d.message.trim()),
        },
        DiagnosticKind::RuntimeFailure => format!("- runtime failure{at}: {}", d.message.trim()),
        DiagnosticKind::CompileError => format!("- compile error{at}: {}", d.message.trim()),
    }
}

/// Turns a failed outcome into repair instructions.
///
/// `diagnostics` should already be method-relative ([`locate_errors`]).
/// Catalog symbols become import instructions without any model or retrieval
/// call; unknown symbols go through the retriever; remaining failures are
/// explained by the model.
pub fn analyze(
    outcome: &ExecutionOutcome,
    diagnostics: &[Diagnostic],
    task: &UpdateTask,
    test_code: &str,
    catalog: &KnownSymbolCatalog,
    retriever: &mut Retriever,
    gateway: &Gateway,
) -> Result<ErrorAnalysis, AgentError> {
    if outcome.phase_reached == Phase::Passed {
        return Err(AgentError::Precondition("error analysis on a passing outcome".into()));
    }
    let mut out = ErrorAnalysis::default();
    let symbols: Vec<String> = diagnostics
        .iter()
        .filter(|d| d.kind == DiagnosticKind::CompileError)
        .filter_map(|d| d.symbol.clone())
        .collect();
    let (known, unknown) = distinguish_unknown_symbols(&symbols, catalog);
    for (name, k) in &known {
        let decl = k.import_decl();
        out.instructions.push(format!("add import for `{name}`: {decl}"));
        out.imports.push(decl);
    }
    if !unknown.is_empty() {
        let found = retriever.resolve_symbols(&unknown, test_code, gateway)?;
        for r in &found.resolved {
            let s = &r.symbol;
            let import = format!("import {};", s.import_path);
            if r.exact {
                out.instructions.push(format!(
                    "`{}` exists as `{}` in {}; reference it correctly and add {import}",
                    r.requested, s.signature_or_definition, s.file_path
                ));
            } else {
                out.instructions.push(format!(
                    "replace hallucinated symbol `{}` with `{}` (`{}` in {}), {import}",
                    r.requested, s.name, s.signature_or_definition, s.file_path
                ));
            }
            out.imports.push(import);
            out.context.push(s.clone());
        }
        for name in &found.unresolved {
            out.instructions.push(format!("symbol unresolved: `{name}`; consider removing or re-deriving it"));
        }
    }
    // Everything not explained by a symbol goes to the model.
    let others: Vec<&Diagnostic> = diagnostics
        .iter()
        .filter(|d| !(d.kind == DiagnosticKind::CompileError && d.symbol.is_some()))
        .collect();
    if !others.is_empty() {
        let reply = gateway.ask(
            TemplateId::ErrorAnalyze,
            &bindings([
                ("annotated_test", annotate_errors(test_code, diagnostics)),
                ("focal_after", task.focal_after.source.clone()),
                ("failures", others.iter().map(|d| failure_line(d)).collect::<Vec<_>>().join("\n")),
            ]),
        )?;
        let parsed = parse_instruction_lines(&reply);
        if parsed.is_empty() {
            out.instructions.extend(others.iter().map(|d| format!("fix {}", &failure_line(d)[2..])));
        } else {
            out.instructions.extend(parsed);
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    out.imports.retain(|i| seen.insert(i.clone()));
    Ok(out)
}
