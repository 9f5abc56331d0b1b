use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use super::{check_span, split_keep_ends, AgentError};
use crate::llm::{bindings, Gateway, TemplateId};
use crate::model::{Mutant, MutantStatus, MutationFacts};

/// (survived, no_coverage); killed mutants are dropped.
pub fn extract_mutation_info(facts: &MutationFacts) -> (Vec<&Mutant>, Vec<&Mutant>) {
    let survived = facts.mutants.iter().filter(|m| m.status == MutantStatus::Survived).collect();
    let uncovered = facts.mutants.iter().filter(|m| m.status == MutantStatus::NoCoverage).collect();
    (survived, uncovered)
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Appends ` // MUTANT[<operator>] <STATUS>: <description>` to the mutated
/// line, once per mutant, stacked in report order.
pub fn annotate_mutations(focal_source: &str, facts: &MutationFacts) -> Result<String, AgentError> {
    let span = facts.method.line_span;
    check_span(focal_source, span)?;
    let mut by_line: BTreeMap<u32, Vec<&Mutant>> = BTreeMap::new();
    for m in &facts.mutants {
        if m.line < span.0 || m.line > span.1 {
            return Err(AgentError::Precondition(format!("mutant on line {} lies outside the method span {}-{}", m.line, span.0, span.1)));
        }
        by_line.entry(m.line).or_default().push(m);
    }
    let mut out = String::with_capacity(focal_source.len() + 64 * facts.mutants.len());
    for (i, (body, end)) in split_keep_ends(focal_source).into_iter().enumerate() {
        out.push_str(body);
        for m in by_line.get(&(span.0 + i as u32)).into_iter().flatten() {
            out.push_str(&format!(" // MUTANT[{}] {}: {}", m.operator, m.status.label(), one_line(&m.description)));
        }
        out.push_str(end);
    }
    Ok(out)
}

fn suffix_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r" // MUTANT\[[^\]\s]*\] (?:KILLED|SURVIVED|NO_COVERAGE): .*$").unwrap())
}

/// Inverse of [`annotate_mutations`].
pub fn strip_mutation_annotations(annotated: &str) -> String {
    split_keep_ends(annotated)
        .into_iter()
        .map(|(body, end)| format!("{}{end}", suffix_re().replace(body, "")))
        .collect()
}

/// Operators that replace a method's return value.
fn mutates_return_value(m: &Mutant) -> bool {
    m.operator.contains("Return") || m.description.contains("return value")
}

fn default_instruction(m: &Mutant, id: &str, focal_name: &str) -> String {
    match m.status {
        MutantStatus::NoCoverage => format!("cover line {} so the mutant is reachable ({id}, {}: {})", m.line, m.operator, m.description),
        _ if mutates_return_value(m) => format!(
            "add an equality assertion (assertEquals) on the exact value returned by {focal_name}() so that mutant {id} at line {} ({}: {}) is detected",
            m.line, m.operator, m.description
        ),
        _ => format!(
            "strengthen the assertions so that mutant {id} at line {} ({}: {}) changes an asserted value",
            m.line, m.operator, m.description
        ),
    }
}

/// One instruction per surviving or uncovered mutant. Mutants are numbered
/// `M1..` in report order (killed ones skipped); reply lines of the form
/// `M<n> | <instruction>` are matched to them and any mutant left out gets a
/// default instruction. Uncovered mutants are always phrased coverage-first.
pub fn analyze(facts: &MutationFacts, focal_source: &str, test_code: &str, gateway: &Gateway) -> Result<Vec<String>, AgentError> {
    let open: Vec<&Mutant> = facts.mutants.iter().filter(|m| m.status != MutantStatus::Killed).collect();
    if open.is_empty() {
        return Ok(Vec::new());
    }
    let ids: Vec<String> = (1..=open.len()).map(|i| format!("M{i}")).collect();
    let listing = open
        .iter()
        .zip(&ids)
        .map(|(m, id)| format!("{id} | line {} | {} | {} | {}", m.line, m.operator, m.status.label(), one_line(&m.description)))
        .collect::<Vec<_>>()
        .join("\n");
    let reply = gateway.ask(
        TemplateId::MutationAnalyze,
        &bindings([
            ("annotated_focal", annotate_mutations(focal_source, facts)?),
            ("test_code", test_code.to_string()),
            ("mutants", listing),
        ]),
    )?;
    let mut answered: Vec<Option<String>> = vec![None; open.len()];
    for line in reply.lines() {
        let Some((head, text)) = line.split_once('|') else { continue };
        let head = head.trim().trim_start_matches(|c: char| !c.is_alphanumeric());
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(pos) = ids.iter().position(|id| head.eq_ignore_ascii_case(id)) {
            answered[pos].get_or_insert_with(|| text.to_string());
        }
    }
    Ok(open
        .iter()
        .zip(&ids)
        .zip(answered)
        .map(|((m, id), a)| match (a, m.status) {
            (Some(text), MutantStatus::NoCoverage) => format!("cover line {} so the mutant is reachable ({id}): {text}", m.line),
            (Some(text), _) => format!("kill mutant {id} at line {} ({}): {text}", m.line, m.operator),
            (None, _) => default_instruction(m, id, &facts.method.method_name),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ReplayBackend;
    use crate::model::MethodRef;

    fn mutant(line: u32, op: &str, status: MutantStatus, desc: &str) -> Mutant {
        Mutant {
            line,
            operator: op.into(),
            description: desc.into(),
            status,
        }
    }

    fn facts(mutants: Vec<Mutant>) -> MutationFacts {
        MutationFacts::new(
            MethodRef {
                file_path: "A.java".into(),
                fully_qualified_class: "a.A".into(),
                method_name: "getDatatype".into(),
                signature: vec![],
                line_span: (10, 13),
            },
            mutants,
        )
    }

    const SRC: &str = "String getDatatype() {\n    if (x) return A;\n    return B;\n}\n";

    #[test]
    fn annotation_stacks_and_strips() {
        let f = facts(vec![
            mutant(11, "NegateConditionals", MutantStatus::Survived, "negated conditional"),
            mutant(11, "NullReturnVals", MutantStatus::Killed, "replaced return value with null"),
            mutant(12, "EmptyObjectReturnVals", MutantStatus::NoCoverage, "replaced return value with \"\""),
        ]);
        let a = annotate_mutations(SRC, &f).unwrap();
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(
            lines[1],
            "    if (x) return A; // MUTANT[NegateConditionals] SURVIVED: negated conditional // MUTANT[NullReturnVals] KILLED: replaced return value with null"
        );
        assert_eq!(lines[2], "    return B; // MUTANT[EmptyObjectReturnVals] NO_COVERAGE: replaced return value with \"\"");
        assert_eq!(strip_mutation_annotations(&a), SRC);
        assert_eq!(annotate_mutations(SRC, &facts(vec![])).unwrap(), SRC);
    }

    #[test]
    fn default_fill_and_listing_one_shape() {
        let f = facts(vec![
            mutant(11, "NegateConditionals", MutantStatus::Survived, "negated conditional"),
            mutant(12, "EmptyObjectReturnVals", MutantStatus::Survived, "replaced return value with \"\""),
            mutant(11, "NullReturnVals", MutantStatus::Killed, "replaced return value with null"),
            mutant(12, "NullReturnVals", MutantStatus::NoCoverage, "replaced return value with null"),
        ]);
        let (s, u) = extract_mutation_info(&f);
        assert_eq!((s.len(), u.len()), (2, 1));
        let gw = Gateway::replay(ReplayBackend::scripted([(TemplateId::MutationAnalyze, "M1 | assert the false branch too\nM3 | call it with x = false")])).unwrap();
        let out = analyze(&f, SRC, "t()", &gw).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], "kill mutant M1 at line 11 (NegateConditionals): assert the false branch too");
        assert!(out[1].starts_with("add an equality assertion (assertEquals) on the exact value returned by getDatatype()"));
        assert_eq!(out[2], "cover line 12 so the mutant is reachable (M3): call it with x = false");
    }
}
