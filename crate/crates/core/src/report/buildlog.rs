use regex::Regex;

use crate::model::{Diagnostic, DiagnosticKind};

/// Regex catalog for one build tool's log format.
#[derive(Clone, Debug)]
pub struct LogPatterns {
    /// Log-level prefix stripped before matching, e.g. `[ERROR] `.
    pub level_prefix: Regex,
    /// Lines dropped outright.
    pub boilerplate: Vec<Regex>,
    /// Compiler error headers; must capture `file`, `line` and `msg`.
    pub compile_error: Vec<Regex>,
    /// Symbol extraction over the full compile message; must capture `name`.
    pub symbol: Vec<Regex>,
    /// Start of a test failure block; `kind` captures FAILURE or ERROR.
    pub failure_marker: Regex,
    /// Exception line inside a failure block; captures `exc` and optional `msg`.
    pub exception: Regex,
    /// Expected/actual pair inside an exception message.
    pub expected_actual: Vec<Regex>,
    /// Stack frame; captures `class`, `file`, `line`.
    pub frame: Regex,
    /// Stack frames from these class prefixes are never the failure location.
    pub library_frames: Vec<String>,
    pub success: Vec<Regex>,
}

impl LogPatterns {
    /// Maven with javac and Surefire (JUnit 4 or 5).
    pub fn maven() -> Self {
        let re = |p: &str| Regex::new(p).expect("valid regex");
        LogPatterns {
            level_prefix: re(r"^\[(?:ERROR|INFO|WARNING|WARN|DEBUG)\] ?"),
            boilerplate: vec![
                re(r"^\[(?:INFO|WARNING|WARN|DEBUG)\]"),
                re(r"^\[ERROR\]\s*(?:->|To see the full stack trace|Re-run Maven|For more information|Failed to execute goal|$|Help 1|After correcting|\[Help)"),
                re(r"^(?:Download(?:ing|ed)|Progress)\b"),
            ],
            compile_error: vec![
                re(r"^(?P<file>\S+\.java):\[(?P<line>\d+),(?P<col>\d+)\]\s+(?P<msg>.+)$"),
                re(r"^(?P<file>\S+\.java):(?P<line>\d+):\s*error:\s*(?P<msg>.+)$"),
            ],
            symbol: vec![
                re(r"symbol:\s+(?:method|variable|class|field)\s+(?P<name>[\w$]+)"),
                re(r"cannot find (?:method|symbol):?\s+(?:method\s+)?(?P<name>[\w$]+)"),
                re(r"The (?:method|field) (?P<name>[\w$]+)(?:\(.*\))? is undefined"),
            ],
            failure_marker: re(r"<<< (?P<kind>FAILURE|ERROR)!\s*$"),
            exception: re(r"^(?P<exc>[A-Za-z_$][\w$]*(?:\.[\w$]+)+)(?::\s?(?P<msg>.*))?$"),
            expected_actual: vec![
                re(r"expected:\s*<(?P<e>.*?)>\s*but\s+was:\s*<(?P<a>.*)>\s*$"),
                re(r"[Ee]xpected:?\s+(?P<e>.*?)\s+but\s+was:?\s+(?P<a>.*)$"),
            ],
            frame: re(r"^\s*at\s+(?P<class>[\w$.]+)\.[\w$<>]+\((?P<file>[\w$]+\.java):(?P<line>\d+)\)"),
            library_frames: ["org.junit.", "junit.", "org.opentest4j.", "org.hamcrest.", "org.assertj.", "java.", "javax.", "jdk.", "sun.", "org.apache.maven."]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            success: vec![re(r"BUILD SUCCESS"), re(r"Tests run: \d+, Failures: 0, Errors: 0")],
        }
    }
}

impl Default for LogPatterns {
    fn default() -> Self {
        Self::maven()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BuildLog {
    pub diagnostics: Vec<Diagnostic>,
    /// Nothing was recognized and no success marker was found.
    pub unrecognized: bool,
}

const ASSERTION_EXCEPTIONS: &[&str] = &["AssertionError", "ComparisonFailure", "AssertionFailedError", "MultipleFailuresError"];

fn strip_comparison_markers(s: &str) -> String {
    match (s.find('['), s.rfind(']')) {
        (Some(a), Some(b)) if a < b => format!("{}{}{}", &s[..a], &s[a + 1..b], &s[b + 1..]),
        _ => s.to_string(),
    }
}

/// Extracts compiler errors, assertion failures and runtime failures from a raw log.
pub fn parse_build_log(log: &str, patterns: &LogPatterns) -> BuildLog {
    let raw: Vec<&str> = log.lines().collect();
    let mut diagnostics: Vec<Diagnostic> = Vec::new();
    let mut i = 0;
    let success = patterns.success.iter().any(|r| r.is_match(log));

    let stripped = |line: &str| -> String { patterns.level_prefix.replace(line, "").into_owned() };
    let is_boilerplate = |line: &str| patterns.boilerplate.iter().any(|r| r.is_match(line));

    while i < raw.len() {
        let line = raw[i];
        let body = stripped(line);

        if let Some(caps) = patterns.compile_error.iter().find_map(|r| r.captures(body.trim_end())) {
            let mut message = caps["msg"].trim_end().to_string();
            let mut j = i + 1;
            while j < raw.len() {
                let cont = stripped(raw[j]);
                if cont.starts_with(char::is_whitespace) && !cont.trim().is_empty() && !is_boilerplate(raw[j]) {
                    message.push('\n');
                    message.push_str(cont.trim_end());
                    j += 1;
                } else {
                    break;
                }
            }
            let file = caps["file"].to_string();
            let line_no: u32 = caps["line"].parse().unwrap_or(0);
            let symbol = patterns
                .symbol
                .iter()
                .find_map(|r| r.captures(&message))
                .map(|c| c["name"].to_string());
            let dup = diagnostics.iter().any(|d| {
                d.kind == DiagnosticKind::CompileError
                    && d.file_path.as_deref() == Some(file.as_str())
                    && d.line == Some(line_no)
                    && d.message.lines().next() == message.lines().next()
            });
            if !dup {
                diagnostics.push(Diagnostic {
                    symbol,
                    file_path: Some(file),
                    line: Some(line_no),
                    ..Diagnostic::new(DiagnosticKind::CompileError, message)
                });
            }
            i = j;
            continue;
        }

        // "Tests run: ... <<< FAILURE!" summarizes a class; the failing
        // methods follow with their own markers
        let class_summary = body.trim_start().starts_with("Tests run:");
        if let Some(marker) = patterns.failure_marker.captures(&body).filter(|_| !class_summary) {
            let is_error = &marker["kind"] == "ERROR";
            // the exception line follows, possibly after blank lines
            let mut j = i + 1;
            while j < raw.len() && raw[j].trim().is_empty() {
                j += 1;
            }
            let exc_caps = raw.get(j).and_then(|l| patterns.exception.captures(l.trim()));
            let (exc, msg) = match &exc_caps {
                Some(c) => (
                    c["exc"].to_string(),
                    c.name("msg").map_or(String::new(), |m| m.as_str().to_string()),
                ),
                None => (String::new(), String::new()),
            };
            let mut message = raw.get(j).map_or(String::new(), |l| l.trim().to_string());
            let mut k = j + 1;
            // multi-line messages run until the first stack frame
            while k < raw.len() && !patterns.frame.is_match(raw[k]) && !raw[k].trim().is_empty() && !raw[k].starts_with('[') {
                message.push('\n');
                message.push_str(raw[k].trim_end());
                k += 1;
            }
            let mut location = None;
            while k < raw.len() {
                if let Some(f) = patterns.frame.captures(raw[k]) {
                    if location.is_none() && !patterns.library_frames.iter().any(|p| f["class"].starts_with(p.as_str())) {
                        location = Some((f["file"].to_string(), f["line"].parse::<u32>().unwrap_or(0)));
                    }
                    k += 1;
                } else if raw[k].trim_start().starts_with("...") || raw[k].trim_start().starts_with("Caused by") {
                    k += 1;
                } else {
                    break;
                }
            }
            let simple_exc = exc.rsplit('.').next().unwrap_or("");
            let assertion = !is_error || ASSERTION_EXCEPTIONS.contains(&simple_exc);
            let mut d = Diagnostic::new(
                if assertion { DiagnosticKind::AssertionFailure } else { DiagnosticKind::RuntimeFailure },
                if message.is_empty() { body.trim().to_string() } else { message },
            );
            if assertion {
                let flat = msg.clone();
                if let Some(c) = patterns.expected_actual.iter().find_map(|r| r.captures(&flat)) {
                    let (mut e, mut a) = (c["e"].to_string(), c["a"].to_string());
                    if simple_exc == "ComparisonFailure" {
                        e = strip_comparison_markers(&e);
                        a = strip_comparison_markers(&a);
                    }
                    d.expected = Some(e);
                    d.actual = Some(a);
                }
            }
            if let Some((file, line_no)) = location {
                d.file_path = Some(file);
                d.line = Some(line_no);
            }
            diagnostics.push(d);
            i = k.max(i + 1);
            continue;
        }
        i += 1;
    }

    let unrecognized = diagnostics.is_empty() && !success && !log.trim().is_empty();
    BuildLog { diagnostics, unrecognized }
}

#[cfg(test)]
mod tests {
    use super::*;

    const COMPILE_LOG: &str = "\
[INFO] Scanning for projects...
[INFO] --- maven-compiler-plugin:3.8.1:testCompile (default-testCompile) @ sniffy-core ---
[INFO] Compiling 1 source file to /work/target/test-classes
[INFO] -------------------------------------------------------------
[ERROR] COMPILATION ERROR :
[INFO] -------------------------------------------------------------
[ERROR] /work/src/test/java/io/sniffy/configuration/SniffyConfigurationTest.java:[21,28] cannot find symbol
  symbol:   method setInjectHtml(boolean)
  location: variable sniffyConfiguration of type io.sniffy.configuration.SniffyConfiguration
[INFO] 1 error
[INFO] -------------------------------------------------------------
[INFO] BUILD FAILURE
[ERROR] Failed to execute goal org.apache.maven.plugins:maven-compiler-plugin:3.8.1:testCompile (default-testCompile) on project sniffy-core: Compilation failure
[ERROR] /work/src/test/java/io/sniffy/configuration/SniffyConfigurationTest.java:[21,28] cannot find symbol
[ERROR]   symbol:   method setInjectHtml(boolean)
[ERROR]   location: variable sniffyConfiguration of type io.sniffy.configuration.SniffyConfiguration
[ERROR] -> [Help 1]
";

    const ASSERT_LOG: &str = "\
[INFO] Running org.wikidata.wdtk.rdf.PropertyRegisterTest
[ERROR] Tests run: 1, Failures: 1, Errors: 0, Skipped: 0, Time elapsed: 0.05 s <<< FAILURE! - in org.wikidata.wdtk.rdf.PropertyRegisterTest
[ERROR] testSetMissingPropertyTypeFromStringValue(org.wikidata.wdtk.rdf.PropertyRegisterTest)  Time elapsed: 0.011 s  <<< FAILURE!
java.lang.AssertionError: expected:<http://wikiba.se/ontology#String> but was:<http://www.wikidata.org/ontology#propertyTypeString>
\tat org.junit.Assert.fail(Assert.java:88)
\tat org.junit.Assert.assertEquals(Assert.java:118)
\tat org.wikidata.wdtk.rdf.PropertyRegisterTest.testSetMissingPropertyTypeFromStringValue(PropertyRegisterTest.java:30)

[INFO] Results:
[ERROR] Failures:
[ERROR]   PropertyRegisterTest.testSetMissingPropertyTypeFromStringValue:30 expected:<http://wikiba.se/ontology#String> but was:<http://www.wikidata.org/ontology#propertyTypeString>
[INFO] BUILD FAILURE
";

    #[test]
    fn compile_error_with_symbol_deduplicated() {
        let parsed = parse_build_log(COMPILE_LOG, &LogPatterns::maven());
        assert_eq!(parsed.diagnostics.len(), 1);
        let d = &parsed.diagnostics[0];
        assert_eq!(d.kind, DiagnosticKind::CompileError);
        assert_eq!(d.symbol.as_deref(), Some("setInjectHtml"));
        assert_eq!(d.line, Some(21));
        assert!(d.message.starts_with("cannot find symbol\n  symbol:   method setInjectHtml(boolean)"));
        assert_eq!(d.summary(), "cannot find method: setInjectHtml()");
        assert!(!parsed.unrecognized);
    }

    #[test]
    fn assertion_failure_expected_actual() {
        let parsed = parse_build_log(ASSERT_LOG, &LogPatterns::maven());
        // the suite-level "<<< FAILURE! - in" line has no exception line after it
        let asserts: Vec<_> = parsed.diagnostics.iter().filter(|d| d.expected.is_some()).collect();
        assert_eq!(asserts.len(), 1);
        let d = asserts[0];
        assert_eq!(d.kind, DiagnosticKind::AssertionFailure);
        assert_eq!(d.expected.as_deref(), Some("http://wikiba.se/ontology#String"));
        assert_eq!(d.actual.as_deref(), Some("http://www.wikidata.org/ontology#propertyTypeString"));
        assert_eq!(d.file_path.as_deref(), Some("PropertyRegisterTest.java"));
        assert_eq!(d.line, Some(30));
    }

    #[test]
    fn junit5_and_comparison_failure() {
        let log = "[ERROR] a.BTest.t  Time elapsed: 0.01 s  <<< FAILURE!\norg.opentest4j.AssertionFailedError: expected: <3> but was: <4>\n\tat a.BTest.t(BTest.java:9)\n";
        let d = &parse_build_log(log, &LogPatterns::maven()).diagnostics[0];
        assert_eq!((d.expected.as_deref(), d.actual.as_deref()), (Some("3"), Some("4")));
        let log = "[ERROR] t(a.BTest)  Time elapsed: 0.01 s  <<< FAILURE!\norg.junit.ComparisonFailure: expected:<http://[wikiba.se/ontology#String]> but was:<http://[www.wikidata.org/x]>\n\tat a.BTest.t(BTest.java:9)\n";
        let d = &parse_build_log(log, &LogPatterns::maven()).diagnostics[0];
        assert_eq!(d.expected.as_deref(), Some("http://wikiba.se/ontology#String"));
    }

    #[test]
    fn runtime_failure() {
        let log = "[ERROR] t(a.BTest)  Time elapsed: 0.01 s  <<< ERROR!\njava.lang.NullPointerException\n\tat a.B.run(B.java:3)\n\tat a.BTest.t(BTest.java:9)\n";
        let d = &parse_build_log(log, &LogPatterns::maven()).diagnostics[0];
        assert_eq!(d.kind, DiagnosticKind::RuntimeFailure);
        assert_eq!(d.line, Some(3));
    }

    #[test]
    fn success_and_unrecognized() {
        let ok = parse_build_log("[INFO] Tests run: 1, Failures: 0, Errors: 0, Skipped: 0\n[INFO] BUILD SUCCESS\n", &LogPatterns::maven());
        assert!(ok.diagnostics.is_empty() && !ok.unrecognized);
        let weird = parse_build_log("something odd happened\n", &LogPatterns::maven());
        assert!(weird.diagnostics.is_empty() && weird.unrecognized);
    }

    #[test]
    fn javac_plain_format() {
        let log = "Foo.java:12: error: cannot find symbol\n    symbol:   variable bar\n    location: class Foo\n";
        let d = &parse_build_log(log, &LogPatterns::maven()).diagnostics[0];
        assert_eq!(d.symbol.as_deref(), Some("bar"));
        assert_eq!(d.summary(), "cannot find variable: bar");
    }
}
