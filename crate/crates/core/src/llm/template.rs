use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GatewayError;

/// One prompt per agent step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    InputFilter,
    TestUpdate,
    ErrorAnalyze,
    CoverageAnalyze,
    MutationAnalyze,
    RetrievalQuery,
    RetrievalFilter,
    ModuleSelect,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::InputFilter,
        TemplateId::TestUpdate,
        TemplateId::ErrorAnalyze,
        TemplateId::CoverageAnalyze,
        TemplateId::MutationAnalyze,
        TemplateId::RetrievalQuery,
        TemplateId::RetrievalFilter,
        TemplateId::ModuleSelect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::InputFilter => "input_filter",
            TemplateId::TestUpdate => "test_update",
            TemplateId::ErrorAnalyze => "error_analyze",
            TemplateId::CoverageAnalyze => "coverage_analyze",
            TemplateId::MutationAnalyze => "mutation_analyze",
            TemplateId::RetrievalQuery => "retrieval_query",
            TemplateId::RetrievalFilter => "retrieval_filter",
            TemplateId::ModuleSelect => "module_select",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Piece {
    Text(String),
    Var(String),
    /// Rendered only when the bound value is non-empty.
    Section(String, Vec<Piece>),
}

/// A prompt body with `{{name}}` placeholders and `{{#name}}...{{/name}}`
/// sections. Every name mentioned is required; a section is emitted only
/// when its value is non-empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    pub fn parse(id: TemplateId, body: &str) -> Result<Self, GatewayError> {
        let bad = |reason: String| GatewayError::BadTemplate { id, reason };
        let mut stack: Vec<(String, Vec<Piece>)> = vec![(String::new(), Vec::new())];
        let mut required = BTreeSet::new();
        let mut rest = body;
        while let Some(open) = rest.find("{{") {
            if open > 0 {
                stack.last_mut().unwrap().1.push(Piece::Text(rest[..open].to_string()));
            }
            let close = rest[open..]
                .find("}}")
                .ok_or_else(|| bad("unterminated `{{`".into()))?
                + open;
            let tag = rest[open + 2..close].trim();
            if let Some(name) = tag.strip_prefix('#') {
                required.insert(name.to_string());
                stack.push((name.to_string(), Vec::new()));
            } else if let Some(name) = tag.strip_prefix('/') {
                let (opened, pieces) = stack.pop().filter(|_| !stack.is_empty()).ok_or_else(|| bad(format!("stray {{{{/{name}}}}}")))?;
                if opened != name || stack.is_empty() {
                    return Err(bad(format!("section `{opened}` closed by `{name}`")));
                }
                stack.last_mut().unwrap().1.push(Piece::Section(opened, pieces));
            } else {
                if tag.is_empty() || !tag.chars().all(|c| c.is_alphanumeric() || c == '_') {
                    return Err(bad(format!("bad placeholder `{tag}`")));
                }
                required.insert(tag.to_string());
                stack.last_mut().unwrap().1.push(Piece::Var(tag.to_string()));
            }
            rest = &rest[close + 2..];
        }
        if !rest.is_empty() {
            stack.last_mut().unwrap().1.push(Piece::Text(rest.to_string()));
        }
        if stack.len() != 1 {
            return Err(bad(format!("section `{}` is never closed", stack.last().unwrap().0)));
        }
        Ok(PromptTemplate {
            id,
            body: body.to_string(),
            required_placeholders: required,
            pieces: stack.pop().unwrap().1,
        })
    }

    /// Pure substitution. Extra bindings are ignored.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, GatewayError> {
        if let Some(missing) = self.required_placeholders.iter().find(|k| !bindings.contains_key(*k)) {
            return Err(GatewayError::MissingPlaceholder {
                template: self.id,
                key: missing.clone(),
            });
        }
        let mut out = String::new();
        render_pieces(&self.pieces, bindings, &mut out);
        Ok(out)
    }
}

fn render_pieces(pieces: &[Piece], bindings: &BTreeMap<String, String>, out: &mut String) {
    for piece in pieces {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Var(k) => out.push_str(&bindings[k]),
            Piece::Section(k, inner) => {
                if !bindings[k].is_empty() {
                    render_pieces(inner, bindings, out);
                }
            }
        }
    }
}

/// All agent prompts, loaded from `<dir>/<template_id>.txt`.
#[derive(Clone, Debug)]
pub struct TemplateCatalog {
    templates: HashMap<TemplateId, PromptTemplate>,
}

impl TemplateCatalog {
    pub fn load_dir(dir: &Path) -> Result<Self, GatewayError> {
        let mut templates = HashMap::new();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{id}.txt"));
            let body = std::fs::read_to_string(&path).map_err(|e| GatewayError::Io {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            templates.insert(id, PromptTemplate::parse(id, &body)?);
        }
        Ok(TemplateCatalog { templates })
    }

    /// The template files shipped in this crate's `templates/` directory.
    pub fn bundled_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("templates")
    }

    pub fn bundled() -> Result<Self, GatewayError> {
        Self::load_dir(&Self::bundled_dir())
    }

    pub fn from_templates(templates: impl IntoIterator<Item = PromptTemplate>) -> Self {
        TemplateCatalog {
            templates: templates.into_iter().map(|t| (t.id, t)).collect(),
        }
    }

    pub fn get(&self, id: TemplateId) -> Result<&PromptTemplate, GatewayError> {
        self.templates.get(&id).ok_or(GatewayError::UnknownTemplate(id))
    }

    pub fn render(&self, id: TemplateId, bindings: &BTreeMap<String, String>) -> Result<String, GatewayError> {
        self.get(id)?.render(bindings)
    }
}
