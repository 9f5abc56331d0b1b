use std::sync::OnceLock;

use regex::Regex;

use super::ReportError;
use crate::model::{DiffHunk, DiffLine, LineTag};

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@ ?(.*)$").unwrap())
}

fn clean_path(raw: &str) -> Option<String> {
    let path = raw.split('\t').next().unwrap_or(raw).trim();
    if path == "/dev/null" {
        return None;
    }
    let path = path.strip_prefix("a/").or_else(|| path.strip_prefix("b/")).unwrap_or(path);
    Some(path.to_string())
}

/// Parses a unified diff (git or POSIX flavor) into hunks with stable indices.
pub fn parse_unified_diff(text: &str) -> Result<Vec<DiffHunk>, ReportError> {
    let lines: Vec<&str> = text.split('\n').collect();
    // a trailing newline produces one empty final element
    let n = if text.ends_with('\n') { lines.len() - 1 } else { lines.len() };
    let mut hunks = Vec::new();
    let mut old_path: Option<String> = None;
    let mut new_path: Option<String> = None;
    let mut i = 0;

    while i < n {
        let line = lines[i];
        if let Some(rest) = line.strip_prefix("diff --git ") {
            let mut parts = rest.split_whitespace();
            old_path = parts.next().and_then(clean_path);
            new_path = parts.next().and_then(clean_path);
            i += 1;
            continue;
        }
        if let Some(rest) = line.strip_prefix("--- ") {
            old_path = clean_path(rest);
            i += 1;
            continue;
        }
        if let Some(rest) = line.strip_prefix("+++ ") {
            new_path = clean_path(rest);
            i += 1;
            continue;
        }
        if line.starts_with("@@") {
            let malformed = |reason: &str| ReportError::MalformedHunk {
                line: i + 1,
                reason: reason.to_string(),
            };
            let caps = header_re().captures(line).ok_or_else(|| malformed("unparsable header"))?;
            let num = |k: usize, default: u32| caps.get(k).map_or(Ok(default), |m| m.as_str().parse::<u32>());
            let old_range = (num(1, 0).map_err(|_| malformed("bad number"))?, num(2, 1).map_err(|_| malformed("bad number"))?);
            let new_range = (num(3, 0).map_err(|_| malformed("bad number"))?, num(4, 1).map_err(|_| malformed("bad number"))?);
            let file_path = new_path
                .clone()
                .or_else(|| old_path.clone())
                .ok_or_else(|| malformed("hunk without file header"))?;
            let (mut old_left, mut new_left) = (old_range.1, new_range.1);
            let mut body: Vec<DiffLine> = Vec::new();
            let mut j = i + 1;
            while j < n && (old_left > 0 || new_left > 0) {
                let l = lines[j];
                let (tag, rest) = match l.chars().next() {
                    Some(' ') => (LineTag::Context, &l[1..]),
                    Some('+') => (LineTag::Add, &l[1..]),
                    Some('-') => (LineTag::Del, &l[1..]),
                    Some('\\') => {
                        if let Some(last) = body.last_mut() {
                            last.no_newline = true;
                        }
                        j += 1;
                        continue;
                    }
                    _ => return Err(malformed("line counts exceed hunk body")),
                };
                match tag {
                    LineTag::Context if old_left > 0 && new_left > 0 => {
                        old_left -= 1;
                        new_left -= 1;
                    }
                    LineTag::Add if new_left > 0 => new_left -= 1,
                    LineTag::Del if old_left > 0 => old_left -= 1,
                    _ => return Err(malformed("line counts do not match hunk body")),
                }
                body.push(DiffLine {
                    tag,
                    text: rest.to_string(),
                    no_newline: false,
                });
                j += 1;
            }
            if old_left > 0 || new_left > 0 {
                return Err(malformed("hunk body ends before declared counts"));
            }
            if j < n && lines[j].starts_with('\\') {
                if let Some(last) = body.last_mut() {
                    last.no_newline = true;
                }
                j += 1;
            }
            // a body line right after a satisfied hunk means the header undercounted
            if j < n {
                let next = lines[j];
                let is_file_header = next.starts_with("--- ") && lines.get(j + 1).is_some_and(|l| l.starts_with("+++ "));
                if (next.starts_with(' ') || next.starts_with('+') || next.starts_with('-')) && !is_file_header {
                    return Err(malformed("more body lines than declared counts"));
                }
            }
            let section = caps.get(5).map_or("", |m| m.as_str()).to_string();
            hunks.push(DiffHunk {
                file_path,
                old_range,
                new_range,
                section,
                lines: body,
                index: hunks.len(),
            });
            i = j;
            continue;
        }
        i += 1;
    }
    Ok(hunks)
}
