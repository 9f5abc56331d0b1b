use std::collections::{BTreeMap, HashMap};

use quick_xml::events::Event;
use quick_xml::Reader;

use super::{attr, ReportError};
use crate::model::{CoverageFacts, LineStatus, MethodRef};

#[derive(Default)]
struct LineCounters {
    mi: u32,
    ci: u32,
    mb: u32,
    cb: u32,
}

/// Parses a JaCoCo XML report and extracts the focal method's line and branch facts.
///
/// Lines of `focal.line_span` that the report does not mention are `NoInstruction`.
pub fn parse_coverage_report(xml: &[u8], focal: &MethodRef) -> Result<CoverageFacts, ReportError> {
    let wanted = focal.fully_qualified_class.replace('.', "/");
    let mut reader = Reader::from_reader(xml);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();

    let mut package = String::new();
    // (package, sourcefile) -> lines
    let mut sources: HashMap<(String, String), BTreeMap<u32, LineCounters>> = HashMap::new();
    let mut focal_source: Option<(String, String)> = None;
    let mut current_source: Option<(String, String)> = None;
    let mut saw_report = false;

    loop {
        let event = reader.read_event_into(&mut buf)?;
        match &event {
            Event::Start(e) | Event::Empty(e) => match e.name().as_ref() {
                b"report" => saw_report = true,
                b"package" => package = attr(e, "name")?.unwrap_or_default(),
                b"class" => {
                    let name = attr(e, "name")?.unwrap_or_default();
                    // nested classes appear as Outer$Inner
                    if name == wanted || name.replace('$', "/") == wanted {
                        let file = match attr(e, "sourcefilename")? {
                            Some(f) => f,
                            None => format!("{}.java", name.rsplit('/').next().unwrap_or(&name)),
                        };
                        focal_source = Some((package.clone(), file));
                    }
                }
                b"sourcefile" => {
                    let key = (package.clone(), attr(e, "name")?.unwrap_or_default());
                    sources.entry(key.clone()).or_default();
                    if matches!(event, Event::Start(_)) {
                        current_source = Some(key);
                    }
                }
                b"line" => {
                    if let Some(key) = &current_source {
                        let num = |n: &str| -> Result<u32, ReportError> {
                            attr(e, n)?
                                .unwrap_or_else(|| "0".into())
                                .parse()
                                .map_err(|_| ReportError::Xml(format!("bad `{n}` attribute on <line>")))
                        };
                        let nr = num("nr")?;
                        let counters = LineCounters {
                            mi: num("mi")?,
                            ci: num("ci")?,
                            mb: num("mb")?,
                            cb: num("cb")?,
                        };
                        sources.get_mut(key).expect("registered").insert(nr, counters);
                    }
                }
                _ => {}
            },
            Event::End(e) => {
                if e.name().as_ref() == b"sourcefile" {
                    current_source = None;
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !saw_report {
        return Err(ReportError::Xml("no <report> root element".into()));
    }
    let key = focal_source.ok_or_else(|| ReportError::FocalNotFound(focal.fully_qualified_class.clone()))?;
    let empty = BTreeMap::new();
    let lines = sources.get(&key).unwrap_or(&empty);

    let mut line_status = BTreeMap::new();
    let mut branch_status = BTreeMap::new();
    for nr in focal.line_span.0..=focal.line_span.1 {
        let status = match lines.get(&nr) {
            Some(c) if c.ci > 0 => LineStatus::Covered,
            Some(c) if c.mi > 0 => LineStatus::NotCovered,
            _ => LineStatus::NoInstruction,
        };
        line_status.insert(nr, status);
        if let Some(c) = lines.get(&nr) {
            if c.mb + c.cb > 0 {
                branch_status.insert(nr, (c.cb, c.mb + c.cb));
            }
        }
    }
    Ok(CoverageFacts::new(focal.clone(), line_status, branch_status))
}
