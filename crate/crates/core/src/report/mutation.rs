use quick_xml::events::Event;
use quick_xml::Reader;

use super::{attr, resolve_ref, ReportError};
use crate::model::{MethodRef, Mutant, MutantStatus, MutationFacts};

#[derive(Default)]
struct RawMutation {
    status: String,
    fields: std::collections::HashMap<String, String>,
}

/// Number of parameters in a JVM method descriptor such as `(I[Ljava/lang/String;)V`.
pub fn descriptor_param_count(desc: &str) -> Option<usize> {
    let inner = desc.strip_prefix('(')?.split(')').next()?;
    let mut count = 0;
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '[' => continue,
            'L' => {
                for c in chars.by_ref() {
                    if c == ';' {
                        break;
                    }
                }
                count += 1;
            }
            'B' | 'C' | 'D' | 'F' | 'I' | 'J' | 'S' | 'Z' => count += 1,
            _ => return None,
        }
    }
    Some(count)
}

/// `org.pitest...NegateConditionalsMutator` -> `NegateConditionals`.
pub fn operator_name(mutator: &str) -> String {
    mutator.rsplit('.').next().unwrap_or(mutator).replace("Mutator", "")
}

fn map_status(token: &str) -> Result<MutantStatus, ReportError> {
    match token {
        "KILLED" | "TIMED_OUT" | "MEMORY_ERROR" | "RUN_ERROR" => Ok(MutantStatus::Killed),
        "SURVIVED" => Ok(MutantStatus::Survived),
        "NO_COVERAGE" => Ok(MutantStatus::NoCoverage),
        other => Err(ReportError::UnknownStatus(other.to_string())),
    }
}

/// Parses a PIT `mutations.xml` report, keeping mutants of the focal method.
///
/// Methods match on (name, parameter count); descriptors and source signatures
/// are formatted too differently to compare directly.
pub fn parse_mutation_report(xml: &[u8], focal: &MethodRef) -> Result<MutationFacts, ReportError> {
    let mut reader = Reader::from_reader(xml);
    let mut buf = Vec::new();
    let mut raws = Vec::new();
    let mut current: Option<RawMutation> = None;
    let mut field: Option<String> = None;
    let mut saw_root = false;

    loop {
        match reader.read_event_into(&mut buf)? {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if name == "mutations" {
                    saw_root = true;
                } else if name == "mutation" {
                    current = Some(RawMutation {
                        status: attr(&e, "status")?.unwrap_or_default(),
                        ..Default::default()
                    });
                } else if current.is_some() {
                    field = Some(name);
                }
            }
            Event::Empty(e) => {
                if e.name().as_ref() == b"mutations" {
                    saw_root = true;
                } else if e.name().as_ref() == b"mutation" {
                    raws.push(RawMutation {
                        status: attr(&e, "status")?.unwrap_or_default(),
                        ..Default::default()
                    });
                }
            }
            Event::Text(t) => {
                if let (Some(m), Some(f)) = (current.as_mut(), field.as_ref()) {
                    let text = t.decode().map_err(|e| ReportError::Xml(e.to_string()))?;
                    m.fields.entry(f.clone()).or_default().push_str(&text);
                }
            }
            Event::GeneralRef(r) => {
                if let (Some(m), Some(f)) = (current.as_mut(), field.as_ref()) {
                    m.fields.entry(f.clone()).or_default().push_str(&resolve_ref(&r)?);
                }
            }
            Event::CData(t) => {
                if let (Some(m), Some(f)) = (current.as_mut(), field.as_ref()) {
                    m.fields
                        .entry(f.clone())
                        .or_default()
                        .push_str(&String::from_utf8_lossy(&t));
                }
            }
            Event::End(e) => {
                if e.name().as_ref() == b"mutation" {
                    raws.extend(current.take());
                }
                field = None;
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !saw_root {
        return Err(ReportError::Xml("no <mutations> root element".into()));
    }

    let mut mutants = Vec::new();
    for raw in raws {
        let get = |k: &str| raw.fields.get(k).map(|s| s.trim()).unwrap_or("");
        let class = get("mutatedClass").replace('$', ".");
        if class != focal.fully_qualified_class || get("mutatedMethod") != focal.method_name {
            continue;
        }
        if descriptor_param_count(get("methodDescription")) != Some(focal.signature.len()) {
            continue;
        }
        let status = map_status(&raw.status)?;
        let line = get("lineNumber")
            .parse()
            .map_err(|_| ReportError::Xml(format!("bad lineNumber `{}`", get("lineNumber"))))?;
        mutants.push(Mutant {
            line,
            operator: operator_name(get("mutator")),
            description: get("description").to_string(),
            status,
        });
    }
    Ok(MutationFacts::new(focal.clone(), mutants))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn focal() -> MethodRef {
        MethodRef {
            file_path: "src/main/java/a/b/Calc.java".into(),
            fully_qualified_class: "a.b.Calc".into(),
            method_name: "clamp".into(),
            signature: vec!["int".into()],
            line_span: (4, 11),
        }
    }

    fn entry(status: &str, method: &str, desc: &str, line: u32, mutator: &str, description: &str) -> String {
        format!(
            "<mutation detected='{}' status='{status}' numberOfTestsRun='1'><sourceFile>Calc.java</sourceFile><mutatedClass>a.b.Calc</mutatedClass><mutatedMethod>{method}</mutatedMethod><methodDescription>{desc}</methodDescription><lineNumber>{line}</lineNumber><mutator>org.pitest.mutationtest.engine.gregor.mutators.{mutator}</mutator><indexes><index>5</index></indexes><blocks><block>0</block></blocks><killingTest/><description>{description}</description></mutation>",
            status == "KILLED"
        )
    }

    #[test]
    fn statuses_and_filtering() {
        let xml = format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<mutations>{}{}{}{}{}</mutations>",
            entry("KILLED", "clamp", "(I)I", 5, "NegateConditionalsMutator", "negated conditional"),
            entry("SURVIVED", "clamp", "(I)I", 6, "MathMutator", "Replaced integer addition with subtraction"),
            entry("NO_COVERAGE", "clamp", "(I)I", 6, "returns.PrimitiveReturnsMutator", "replaced int return with 0 for a/b/Calc::clamp"),
            entry("KILLED", "clamp", "(II)I", 20, "MathMutator", "overload"),
            entry("TIMED_OUT", "other", "(I)I", 30, "MathMutator", "elsewhere"),
        );
        let facts = parse_mutation_report(xml.as_bytes(), &focal()).unwrap();
        assert_eq!(facts.mutants.len(), 3);
        assert_eq!(facts.mutants[0].operator, "NegateConditionals");
        assert_eq!(facts.mutants[2].operator, "PrimitiveReturns");
        assert_eq!(facts.mutants[1].status, MutantStatus::Survived);
        assert_eq!(facts.mutation_score_pct, 33.33);
    }

    #[test]
    fn timed_out_counts_as_killed() {
        let xml = format!("<mutations>{}</mutations>", entry("TIMED_OUT", "clamp", "(I)I", 5, "MathMutator", "x"));
        let facts = parse_mutation_report(xml.as_bytes(), &focal()).unwrap();
        assert_eq!(facts.mutants[0].status, MutantStatus::Killed);
    }

    #[test]
    fn empty_report_scores_full() {
        let facts = parse_mutation_report(b"<mutations/>", &focal()).unwrap();
        assert!(facts.mutants.is_empty());
        assert_eq!(facts.mutation_score_pct, 100.0);
    }

    #[test]
    fn unknown_status_is_named() {
        let xml = format!("<mutations>{}</mutations>", entry("EXPLODED", "clamp", "(I)I", 5, "MathMutator", "x"));
        match parse_mutation_report(xml.as_bytes(), &focal()) {
            Err(ReportError::UnknownStatus(s)) => assert_eq!(s, "EXPLODED"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn entities_in_descriptions() {
        let xml = format!(
            "<mutations>{}</mutations>",
            entry("SURVIVED", "clamp", "(I)I", 5, "returns.EmptyObjectReturnValsMutator", "replaced return value with &quot;&quot; for a/b/Calc::clamp")
        );
        let facts = parse_mutation_report(xml.as_bytes(), &focal()).unwrap();
        assert_eq!(facts.mutants[0].description, "replaced return value with \"\" for a/b/Calc::clamp");
    }

    #[test]
    fn descriptors() {
        assert_eq!(descriptor_param_count("()V"), Some(0));
        assert_eq!(descriptor_param_count("(I[JLjava/lang/String;[[Ljava/util/List;Z)V"), Some(5));
        assert_eq!(descriptor_param_count("nonsense"), None);
    }
}
