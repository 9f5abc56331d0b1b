//! Lightweight Java source scanning: comment/literal masking, brace balance,
//! member declarations, imports and call sites. Not a parser; anything beyond
//! declarations is left to the compiler.

use std::sync::OnceLock;

use regex::Regex;

macro_rules! re {
    ($name:ident, $pat:expr) => {
        fn $name() -> &'static Regex {
            static RE: OnceLock<Regex> = OnceLock::new();
            RE.get_or_init(|| Regex::new($pat).expect("valid regex"))
        }
    };
}

re!(annotation_re, r"^\s*@[\w$.]+(\s*\([^)]*\))?");
re!(
    method_header_re,
    r"^\s*((?:(?:public|protected|private|static|final|abstract|synchronized|native|default|strictfp)\s+)*)(?:<[^>]*>\s*)?(?:([\w$.<>\[\]?,\s]+?)\s+)?([A-Za-z_$][\w$]*)\s*\(([^)]*)\)\s*(?:\[\s*\]\s*)*(?:throws\s+[\w$.,\s<>]+)?\s*$"
);
re!(
    field_header_re,
    r"^\s*((?:(?:public|protected|private|static|final|transient|volatile)\s+)*)([\w$.<>\[\]?,\s]+?)\s+([A-Za-z_$][\w$]*)\s*(?:\[\s*\]\s*)*$"
);
re!(type_decl_re, r"\b(class|interface|enum|record)\s+([A-Za-z_$][\w$]*)");
re!(package_re, r"(?m)^\s*package\s+([\w$.]+)\s*;");
re!(import_line_re, r"(?m)^[ \t]*import\s+(?:static\s+)?[\w$.]+(?:\.\*)?\s*;[ \t]*\r?$");
re!(
    import_decl_re,
    r"^import\s+(static\s+)?[A-Za-z_$][\w$]*(\.[A-Za-z_$][\w$]*)*(\.\*)?;$"
);
re!(call_re, r"([A-Za-z_$][\w$]*)\s*\(");

const KEYWORDS: &[&str] = &[
    "if", "for", "while", "switch", "catch", "synchronized", "return", "new", "else", "try", "do",
    "throw", "case", "assert", "super", "this",
];

/// Replaces comments and the contents of string/char literals with spaces.
/// Newlines and byte offsets are preserved.
pub fn mask(src: &str) -> String {
    #[derive(PartialEq)]
    enum St {
        Code,
        Line,
        Block,
        Str,
        Chr,
        Text,
    }
    let bytes = src.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut st = St::Code;
    let mut i = 0;
    let blank = |b: u8| if b == b'\n' || b == b'\r' { b } else if b.is_ascii() { b' ' } else { b };
    while i < bytes.len() {
        let b = bytes[i];
        let next = bytes.get(i + 1).copied();
        match st {
            St::Code => match (b, next) {
                (b'/', Some(b'/')) => {
                    st = St::Line;
                    out.extend_from_slice(b"  ");
                    i += 2;
                    continue;
                }
                (b'/', Some(b'*')) => {
                    st = St::Block;
                    out.extend_from_slice(b"  ");
                    i += 2;
                    continue;
                }
                (b'"', _) if bytes[i..].starts_with(b"\"\"\"") => {
                    st = St::Text;
                    out.extend_from_slice(b"\"\"\"");
                    i += 3;
                    continue;
                }
                (b'"', _) => {
                    st = St::Str;
                    out.push(b);
                }
                (b'\'', _) => {
                    st = St::Chr;
                    out.push(b);
                }
                _ => out.push(b),
            },
            St::Line => {
                if b == b'\n' {
                    st = St::Code;
                }
                out.push(blank(b));
            }
            St::Block => {
                if b == b'*' && next == Some(b'/') {
                    st = St::Code;
                    out.extend_from_slice(b"  ");
                    i += 2;
                    continue;
                }
                out.push(blank(b));
            }
            St::Str | St::Chr => {
                let quote = if st == St::Str { b'"' } else { b'\'' };
                if b == b'\\' && next.is_some() {
                    out.push(b' ');
                    out.push(blank(next.unwrap()));
                    i += 2;
                    continue;
                }
                if b == quote {
                    st = St::Code;
                    out.push(b);
                } else if b == b'\n' {
                    // unterminated literal; recover at end of line
                    st = St::Code;
                    out.push(b);
                } else {
                    out.push(blank(b));
                }
            }
            St::Text => {
                if bytes[i..].starts_with(b"\"\"\"") {
                    st = St::Code;
                    out.extend_from_slice(b"\"\"\"");
                    i += 3;
                    continue;
                }
                if b == b'\\' && next.is_some() {
                    out.push(b' ');
                    out.push(blank(next.unwrap()));
                    i += 2;
                    continue;
                }
                out.push(blank(b));
            }
        }
        i += 1;
    }
    // Only ASCII bytes were substituted, so UTF-8 boundaries are intact.
    String::from_utf8(out).expect("masking preserves utf-8")
}

/// Brace depth never goes negative and ends at zero.
pub fn is_balanced(text: &str) -> bool {
    let mut depth = 0i64;
    for b in mask(text).bytes() {
        match b {
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0
}

/// True when `text` is one brace-balanced block with nothing after it.
pub fn is_single_block(text: &str) -> bool {
    let masked = mask(text);
    let mut depth = 0i64;
    let mut closed_at = None;
    for (i, b) in masked.bytes().enumerate() {
        match b {
            b'{' => {
                if closed_at.is_some() {
                    return false;
                }
                depth += 1;
            }
            b'}' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
                if depth == 0 {
                    closed_at = Some(i);
                }
            }
            _ => {}
        }
    }
    match closed_at {
        Some(end) => depth == 0 && masked[end + 1..].trim().is_empty(),
        None => false,
    }
}

pub fn is_import_decl(s: &str) -> bool {
    import_decl_re().is_match(s.trim())
}

/// Accepts `a.b.C`, `import a.b.C` or `import a.b.C;` and returns the canonical
/// `import a.b.C;` form.
pub fn normalize_import(s: &str) -> Option<String> {
    let mut t = s.trim().trim_end_matches(';').trim().to_string();
    if !t.starts_with("import ") {
        t = format!("import {t}");
    }
    let t = format!("{};", t.split_whitespace().collect::<Vec<_>>().join(" "));
    is_import_decl(&t).then_some(t)
}

pub fn package_of(src: &str) -> Option<String> {
    package_re()
        .captures(&mask(src))
        .map(|c| c[1].to_string())
}

/// Byte ranges of top-level import lines (without the trailing newline).
pub fn import_lines(src: &str) -> Vec<std::ops::Range<usize>> {
    let masked = mask(src);
    import_line_re()
        .find_iter(&masked)
        .map(|m| m.range())
        .collect()
}

/// Maps byte offsets to 1-based line numbers.
pub struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    pub fn new(src: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(src.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    pub fn line_of(&self, offset: usize) -> u32 {
        match self.starts.binary_search(&offset) {
            Ok(i) => i as u32 + 1,
            Err(i) => i as u32,
        }
    }

    pub fn line_start(&self, line: u32) -> Option<usize> {
        self.starts.get(line.checked_sub(1)? as usize).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MethodDecl {
    pub name: String,
    /// Enclosing class, nested classes joined with `.`.
    pub class_name: String,
    pub param_types: Vec<String>,
    /// Offset of the first annotation or modifier.
    pub decl_start: usize,
    /// Offset just past any leading annotations.
    pub sig_start: usize,
    /// Exclusive end, just past the closing brace or `;`.
    pub end: usize,
    pub start_line: u32,
    pub end_line: u32,
    pub javadoc: Option<String>,
    /// Header with annotations stripped and whitespace collapsed.
    pub signature: String,
    pub has_body: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub class_name: String,
    pub type_name: String,
    pub decl_start: usize,
    pub end: usize,
    pub line: u32,
    pub javadoc: Option<String>,
    /// Declaration text as written, whitespace collapsed.
    pub definition: String,
}

#[derive(Clone, Debug, Default)]
pub struct JavaSource {
    pub package: Option<String>,
    pub classes: Vec<String>,
    pub methods: Vec<MethodDecl>,
    pub fields: Vec<FieldDecl>,
}

impl JavaSource {
    /// Scans a full compilation unit.
    pub fn parse(src: &str) -> Self {
        scan(src, false)
    }

    /// Scans a fragment of class-body members (a method, a field, ...).
    pub fn parse_members(src: &str) -> Self {
        scan(src, true)
    }

    pub fn methods_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a MethodDecl> + 'a {
        self.methods.iter().filter(move |m| m.name == name)
    }

    /// Dotted name of the top-level class.
    pub fn qualified_name(&self, class_name: &str) -> String {
        match &self.package {
            Some(p) if !p.is_empty() => format!("{p}.{class_name}"),
            _ => class_name.to_string(),
        }
    }
}

enum Frame {
    Class(String),
    Method(usize),
    /// An initializer block inside a field declaration; remembers the statement start.
    Init(usize),
    Other,
}

struct PendingMethod {
    name: String,
    class_name: String,
    param_types: Vec<String>,
    decl_start: usize,
    sig_start: usize,
    javadoc: Option<String>,
    signature: String,
}

fn scan(src: &str, in_class: bool) -> JavaSource {
    let masked = mask(src);
    let bytes = masked.as_bytes();
    let lines = LineIndex::new(src);
    let mut out = JavaSource {
        package: package_re().captures(&masked).map(|c| c[1].to_string()),
        ..Default::default()
    };
    let mut stack: Vec<Frame> = Vec::new();
    if in_class {
        stack.push(Frame::Class(String::new()));
    }
    let mut pending: Vec<PendingMethod> = Vec::new();
    let mut stmt_start = 0usize;
    let mut paren = 0i32;

    let class_path = |stack: &[Frame]| -> String {
        stack
            .iter()
            .filter_map(|f| match f {
                Frame::Class(n) if !n.is_empty() => Some(n.as_str()),
                _ => None,
            })
            .collect::<Vec<_>>()
            .join(".")
    };

    for i in 0..bytes.len() {
        let at_member_level = matches!(stack.last(), None | Some(Frame::Class(_)));
        let b = bytes[i];
        if at_member_level {
            match b {
                b'(' => paren += 1,
                b')' => paren -= 1,
                _ => {}
            }
            if paren > 0 {
                continue;
            }
        }
        match b {
            b'{' => {
                if !at_member_level {
                    stack.push(Frame::Other);
                    continue;
                }
                let header = &masked[stmt_start..i];
                let in_class_body = matches!(stack.last(), Some(Frame::Class(_)));
                if let Some(c) = type_decl_re().captures(header).filter(|_| !header.contains("new ")) {
                    let name = c[2].to_string();
                    stack.push(Frame::Class(name.clone()));
                    out.classes.push(name);
                    stmt_start = i + 1;
                } else if top_level_eq(header).is_some() {
                    stack.push(Frame::Init(stmt_start));
                } else if let Some(m) = in_class_body
                    .then(|| match_method(src, &masked, stmt_start, i, class_path(&stack)))
                    .flatten()
                {
                    pending.push(m);
                    stack.push(Frame::Method(pending.len() - 1));
                    stmt_start = i + 1;
                } else {
                    stack.push(Frame::Other);
                    stmt_start = i + 1;
                }
            }
            b'}' => {
                match stack.pop() {
                    Some(Frame::Method(idx)) => {
                        let p = &pending[idx];
                        out.methods.push(MethodDecl {
                            name: p.name.clone(),
                            class_name: p.class_name.clone(),
                            param_types: p.param_types.clone(),
                            decl_start: p.decl_start,
                            sig_start: p.sig_start,
                            end: i + 1,
                            start_line: lines.line_of(p.decl_start),
                            end_line: lines.line_of(i),
                            javadoc: p.javadoc.clone(),
                            signature: p.signature.clone(),
                            has_body: true,
                        });
                        stmt_start = i + 1;
                    }
                    Some(Frame::Init(start)) => {
                        if matches!(stack.last(), None | Some(Frame::Class(_))) {
                            stmt_start = start;
                        }
                    }
                    Some(_) => {
                        if matches!(stack.last(), None | Some(Frame::Class(_))) {
                            stmt_start = i + 1;
                        }
                    }
                    None => stmt_start = i + 1,
                }
            }
            b';' if at_member_level => {
                if matches!(stack.last(), Some(Frame::Class(_))) {
                    let header = &masked[stmt_start..i];
                    let before_eq = &header[..top_level_eq(header).unwrap_or(header.len())];
                    if before_eq.contains('(') {
                        if let Some(p) = match_method(src, &masked, stmt_start, i, class_path(&stack)) {
                            out.methods.push(MethodDecl {
                                name: p.name,
                                class_name: p.class_name,
                                param_types: p.param_types,
                                decl_start: p.decl_start,
                                sig_start: p.sig_start,
                                end: i + 1,
                                start_line: lines.line_of(p.decl_start),
                                end_line: lines.line_of(i),
                                javadoc: p.javadoc,
                                signature: p.signature,
                                has_body: false,
                            });
                        }
                    } else if let Some(f) = match_field(src, &masked, stmt_start, i, class_path(&stack), &lines) {
                        out.fields.push(f);
                    }
                }
                stmt_start = i + 1;
            }
            _ => {}
        }
    }
    out.methods.sort_by_key(|m| m.decl_start);
    out
}

fn top_level_eq(header: &str) -> Option<usize> {
    let (mut angle, mut paren) = (0i32, 0i32);
    for (i, b) in header.bytes().enumerate() {
        match b {
            b'<' => angle += 1,
            b'>' => angle -= 1,
            b'(' => paren += 1,
            b')' => paren -= 1,
            b'=' if angle <= 0 && paren <= 0 => return Some(i),
            _ => {}
        }
    }
    None
}

/// Splits leading annotations off a header. Returns the offset past them.
fn skip_annotations(header: &str) -> usize {
    let mut pos = 0;
    while let Some(m) = annotation_re().find(&header[pos..]) {
        // `@interface` declares a type, not an annotation
        if header[pos..].trim_start().starts_with("@interface") {
            break;
        }
        pos += m.end();
    }
    pos
}

fn first_non_ws(s: &str, from: usize, to: usize) -> usize {
    s[from..to]
        .find(|c: char| !c.is_whitespace())
        .map_or(to, |o| from + o)
}

fn javadoc_before(src: &str, from: usize, to: usize) -> Option<String> {
    let region = &src[from..to];
    let open = region.rfind("/**")?;
    let close = region[open..].find("*/")? + open;
    if !region[close + 2..].trim().is_empty() && !region[close + 2..].trim_start().starts_with('@') {
        return None;
    }
    let body = &region[open + 3..close];
    let text = body
        .lines()
        .map(|l| l.trim().trim_start_matches('*').trim())
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    (!text.is_empty()).then_some(text)
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn match_method(src: &str, masked: &str, stmt_start: usize, brace: usize, class_name: String) -> Option<PendingMethod> {
    let header = &masked[stmt_start..brace];
    let ann_end = skip_annotations(header);
    let caps = method_header_re().captures(&header[ann_end..])?;
    let name = caps.get(3)?.as_str();
    if KEYWORDS.contains(&name) {
        return None;
    }
    let ret = caps.get(2).map(|m| m.as_str().trim());
    if let Some(r) = ret {
        if r.split_whitespace().any(|w| KEYWORDS.contains(&w)) || r == "else" {
            return None;
        }
    } else {
        let simple = class_name.rsplit('.').next().unwrap_or("");
        if !simple.is_empty() && name != simple {
            return None;
        }
    }
    let decl_start = first_non_ws(masked, stmt_start, brace);
    let sig_start = first_non_ws(masked, stmt_start + ann_end, brace);
    let params = caps.get(4).map_or("", |m| m.as_str());
    Some(PendingMethod {
        name: name.to_string(),
        class_name,
        param_types: split_params(params),
        decl_start,
        sig_start,
        javadoc: javadoc_before(src, stmt_start, decl_start),
        signature: collapse_ws(&src[sig_start..brace]).trim_end_matches(';').trim().to_string(),
    })
}

fn match_field(
    src: &str,
    masked: &str,
    stmt_start: usize,
    semi: usize,
    class_name: String,
    lines: &LineIndex,
) -> Option<FieldDecl> {
    let header = &masked[stmt_start..semi];
    let ann_end = skip_annotations(header);
    let body = &header[ann_end..];
    let before_eq = &body[..top_level_eq(body).unwrap_or(body.len())];
    let caps = field_header_re().captures(before_eq)?;
    let type_name = collapse_ws(caps.get(2)?.as_str());
    if type_name.contains(',') && !type_name.contains('<') {
        return None;
    }
    let first_word = type_name.split_whitespace().next().unwrap_or("");
    if ["return", "package", "import", "throw", "break", "continue"].contains(&first_word) {
        return None;
    }
    let decl_start = first_non_ws(masked, stmt_start, semi);
    Some(FieldDecl {
        name: caps[3].to_string(),
        class_name,
        type_name,
        decl_start,
        end: semi + 1,
        line: lines.line_of(decl_start),
        javadoc: javadoc_before(src, stmt_start, decl_start),
        definition: collapse_ws(&src[first_non_ws(masked, stmt_start + ann_end, semi)..semi + 1]),
    })
}

fn split_params(params: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in params.chars() {
        match c {
            '<' => depth += 1,
            '>' => depth -= 1,
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    out.push(cur);
    out.into_iter()
        .filter_map(|p| {
            let p = p.trim();
            let p = &p[skip_annotations(p)..];
            let words: Vec<&str> = p.split_whitespace().filter(|w| *w != "final").collect();
            match words.len() {
                0 => None,
                1 => Some(words[0].to_string()),
                n => Some(words[..n - 1].join(" ")),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallSite {
    /// Identifier immediately before the `.`, if any.
    pub receiver: Option<String>,
    pub name: String,
    pub arg_count: usize,
    pub offset: usize,
}

/// Lexical call-site extraction: identifier followed by an argument list,
/// excluding keywords and constructor calls.
pub fn call_sites(src: &str) -> Vec<CallSite> {
    let masked = mask(src);
    let bytes = masked.as_bytes();
    let mut out = Vec::new();
    for caps in call_re().captures_iter(&masked) {
        let name_m = caps.get(1).unwrap();
        let name = name_m.as_str();
        if KEYWORDS.contains(&name) {
            continue;
        }
        let before = masked[..name_m.start()].trim_end();
        if before.ends_with("new") && before[..before.len() - 3].ends_with(|c: char| !c.is_alphanumeric() && c != '_') {
            continue;
        }
        if before == "new" {
            continue;
        }
        let receiver = before.strip_suffix('.').map(|r| {
            let r = r.trim_end();
            let start = r
                .rfind(|c: char| !(c.is_alphanumeric() || c == '_' || c == '$'))
                .map_or(0, |p| p + 1);
            r[start..].to_string()
        });
        let open = caps.get(0).unwrap().end() - 1;
        let mut depth = 0i32;
        let mut commas = 0;
        let mut non_empty = false;
        let mut angle_safe = true;
        for &b in &bytes[open..] {
            match b {
                b'(' | b'{' | b'[' => depth += 1,
                b')' | b'}' | b']' => {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
                b',' if depth == 1 => commas += 1,
                b if depth >= 1 && !b.is_ascii_whitespace() => non_empty = true,
                _ => {}
            }
            if depth < 0 {
                angle_safe = false;
                break;
            }
        }
        if !angle_safe {
            continue;
        }
        out.push(CallSite {
            receiver: receiver.filter(|r| !r.is_empty()),
            name: name.to_string(),
            arg_count: if non_empty { commas + 1 } else { 0 },
            offset: name_m.start(),
        });
    }
    out
}

/// Text of the member spanning `start..end`, with continuation lines dedented
/// by the indentation of its first line. Line count is preserved.
pub fn member_source(source: &str, start: usize, end: usize) -> String {
    let line_start = source[..start].rfind('\n').map_or(0, |p| p + 1);
    let indent = &source[line_start..start];
    let text = &source[start..end];
    if indent.trim().is_empty() {
        text.split('\n')
            .map(|l| l.strip_prefix(indent).unwrap_or(l))
            .collect::<Vec<_>>()
            .join("\n")
    } else {
        text.to_string()
    }
}

/// Name of the first method declared in a member fragment.
pub fn method_name_of(fragment: &str) -> Option<String> {
    JavaSource::parse_members(fragment)
        .methods
        .into_iter()
        .next()
        .map(|m| m.name)
}

/// Name declared by a field/variable declaration fragment.
pub fn variable_name_of(fragment: &str) -> Option<String> {
    let src = if fragment.trim_end().ends_with(';') {
        fragment.to_string()
    } else {
        format!("{};", fragment.trim_end())
    };
    JavaSource::parse_members(&src)
        .fields
        .into_iter()
        .next()
        .map(|f| f.name)
}
