use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::index::build_index_filtered;
use super::{query, Embedder, EmbeddingIndex, RetrievalError};
use crate::llm::{bindings, Gateway, TemplateId};
use crate::model::ResolvedSymbol;

/// A unit of embedding: a Maven module, or a top-level package of a
/// single-module project.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JavaModule {
    pub name: String,
    pub root: PathBuf,
    /// Repo-relative path of `root`, prefixed to indexed file paths.
    pub rel: String,
    /// Whether subdirectories belong to this module.
    pub recursive: bool,
}

fn rel_of(repo_root: &Path, p: &Path) -> String {
    p.strip_prefix(repo_root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

fn has_java(dir: &Path, recursive: bool) -> bool {
    WalkDir::new(dir)
        .max_depth(if recursive { usize::MAX } else { 1 })
        .into_iter()
        .filter_map(Result::ok)
        .any(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "java"))
}

/// Maven modules (directories with a `pom.xml` and `src/main/java`) when there
/// are several; otherwise the top-level packages of the single source root.
pub fn discover_modules(repo_root: &Path) -> Vec<JavaModule> {
    let mut maven: Vec<PathBuf> = WalkDir::new(repo_root)
        .max_depth(4)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || (e.file_name() != "target" && e.file_name() != "src" && !e.file_name().to_string_lossy().starts_with('.')))
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_dir() && e.path().join("pom.xml").is_file() && e.path().join("src/main/java").is_dir())
        .map(|e| e.path().to_path_buf())
        .collect();
    maven.sort();
    if maven.len() >= 2 {
        return maven
            .into_iter()
            .map(|dir| {
                let rel = rel_of(repo_root, &dir);
                JavaModule {
                    name: if rel.is_empty() { ".".into() } else { rel.clone() },
                    root: dir,
                    rel,
                    recursive: true,
                }
            })
            .collect();
    }
    let base = maven.pop().unwrap_or_else(|| repo_root.to_path_buf());
    let src_root = if base.join("src/main/java").is_dir() { base.join("src/main/java") } else { base };
    package_modules(repo_root, &src_root)
}

fn package_modules(repo_root: &Path, src_root: &Path) -> Vec<JavaModule> {
    let dirs: BTreeSet<PathBuf> = WalkDir::new(src_root)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "java"))
        .filter_map(|e| e.path().parent().map(Path::to_path_buf))
        .collect();
    let Some(first) = dirs.iter().next() else {
        return Vec::new();
    };
    let mut ancestor = first.clone();
    while !dirs.iter().all(|d| d.starts_with(&ancestor)) {
        if !ancestor.pop() {
            break;
        }
    }
    let dotted = |p: &Path| -> String {
        let rel = p.strip_prefix(src_root).unwrap_or(p).to_string_lossy().replace(['/', '\\'], ".");
        if rel.is_empty() {
            "(default)".into()
        } else {
            rel
        }
    };
    let mut out = Vec::new();
    if has_java(&ancestor, false) {
        out.push(JavaModule {
            name: dotted(&ancestor),
            root: ancestor.clone(),
            rel: rel_of(repo_root, &ancestor),
            recursive: false,
        });
    }
    let mut children: Vec<PathBuf> = std::fs::read_dir(&ancestor)
        .map(|rd| rd.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.is_dir()).collect())
        .unwrap_or_default();
    children.sort();
    for child in children.into_iter().filter(|c| has_java(c, true)) {
        out.push(JavaModule {
            name: dotted(&child),
            rel: rel_of(repo_root, &child),
            root: child,
            recursive: true,
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalBudget {
    pub max_iterations: u32,
    pub embedded_modules: BTreeSet<String>,
}

impl Default for RetrievalBudget {
    fn default() -> Self {
        RetrievalBudget {
            max_iterations: 3,
            embedded_modules: BTreeSet::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    /// The symbol as it appeared in the diagnostic.
    pub requested: String,
    pub symbol: ResolvedSymbol,
    /// True when a declaration with exactly the requested name was found.
    pub exact: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    pub resolved: Vec<Resolution>,
    pub unresolved: Vec<String>,
    pub iterations: u32,
}

/// Per-session symbol resolver. Embedded modules stay embedded across calls;
/// the iteration cap applies to each `resolve_symbols` call.
pub struct Retriever {
    pub modules: Vec<JavaModule>,
    embedder: Arc<dyn Embedder>,
    pub budget: RetrievalBudget,
    /// Candidates shown to the relevance filter per query.
    pub k: usize,
    indexes: Vec<(usize, EmbeddingIndex)>,
    cache_dir: Option<PathBuf>,
}

enum Step {
    Embed(usize),
    Rewrite,
}

impl Retriever {
    pub fn new(repo_root: &Path, embedder: Arc<dyn Embedder>, budget: RetrievalBudget) -> Self {
        Retriever {
            modules: discover_modules(repo_root),
            embedder,
            budget,
            k: 5,
            indexes: Vec::new(),
            cache_dir: None,
        }
    }

    /// Persist built indexes under `dir` and reuse them when the embedder matches.
    pub fn with_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn embedded(&self) -> Vec<&str> {
        self.indexes.iter().map(|(m, _)| self.modules[*m].name.as_str()).collect()
    }

    fn embed_module(&mut self, m: usize) -> Result<(), RetrievalError> {
        let module = &self.modules[m];
        let cache = self.cache_dir.as_ref().map(|d| {
            let safe: String = module.name.chars().map(|c| if c.is_alphanumeric() { c } else { '_' }).collect();
            d.join(format!("{safe}.{}.json", self.embedder.id().replace([':', '/'], "_")))
        });
        let index = match cache.as_ref().filter(|p| p.is_file()).map(|p| EmbeddingIndex::load(p)) {
            Some(Ok(idx)) if idx.embedder_id == self.embedder.id() => idx,
            _ => {
                let idx = build_index_filtered(&module.root, self.embedder.as_ref(), module.recursive)?;
                if let Some(p) = &cache {
                    if let Some(parent) = p.parent() {
                        let _ = std::fs::create_dir_all(parent);
                    }
                    idx.save(p)?;
                }
                idx
            }
        };
        log::info!("embedded module {} ({} entries)", module.name, index.entries.len());
        self.budget.embedded_modules.insert(module.name.clone());
        self.indexes.push((m, index));
        Ok(())
    }

    fn choose_step(&self, pending: &[String], gateway: &Gateway) -> Result<Step, RetrievalError> {
        let unembedded: Vec<usize> = (0..self.modules.len()).filter(|m| !self.indexes.iter().any(|(i, _)| i == m)).collect();
        if unembedded.is_empty() {
            return Ok(Step::Rewrite);
        }
        if self.indexes.is_empty() && unembedded.len() == 1 {
            return Ok(Step::Embed(unembedded[0]));
        }
        let modules = self.modules.iter().map(|m| format!("- {}", m.name)).collect::<Vec<_>>().join("\n");
        let reply = gateway.ask(
            TemplateId::ModuleSelect,
            &bindings([
                ("symbols", pending.iter().map(|s| format!("- {s}")).collect::<Vec<_>>().join("\n")),
                ("modules", modules),
                ("embedded", self.embedded().join(", ")),
            ]),
        )?;
        let answer = reply.trim().trim_matches(|c: char| c == '`' || c == '"' || c == '.' || c == '-').trim();
        let fallback = if self.indexes.is_empty() { Step::Embed(unembedded[0]) } else { Step::Rewrite };
        if answer.eq_ignore_ascii_case("REWRITE") {
            return Ok(fallback);
        }
        let named = self
            .modules
            .iter()
            .position(|m| m.name == answer)
            .or_else(|| self.modules.iter().position(|m| answer.lines().any(|l| l.trim().trim_start_matches("- ") == m.name)));
        Ok(match named {
            Some(m) if unembedded.contains(&m) => Step::Embed(m),
            _ => fallback,
        })
    }

    fn exact_match(&self, symbol: &str) -> Option<ResolvedSymbol> {
        self.indexes.iter().find_map(|(m, idx)| {
            idx.entries
                .iter()
                .find(|e| e.name == symbol)
                .map(|e| e.to_symbol(&self.modules[*m].rel))
        })
    }

    /// Tries to resolve each unknown symbol; see the module docs for the loop.
    pub fn resolve_symbols(&mut self, symbols: &[String], test_code: &str, gateway: &Gateway) -> Result<RetrievalOutcome, RetrievalError> {
        let mut pending: Vec<String> = Vec::new();
        for s in symbols {
            if !pending.contains(s) {
                pending.push(s.clone());
            }
        }
        let mut out = RetrievalOutcome::default();
        let mut previous: HashMap<String, String> = HashMap::new();
        while !pending.is_empty() && out.iterations < self.budget.max_iterations {
            if self.modules.is_empty() {
                break;
            }
            out.iterations += 1;
            if self.indexes.is_empty() || out.iterations > 1 {
                if let Step::Embed(m) = self.choose_step(&pending, gateway)? {
                    self.embed_module(m)?;
                }
            }
            for symbol in pending.clone() {
                if let Some(found) = self.exact_match(&symbol) {
                    out.resolved.push(Resolution {
                        requested: symbol.clone(),
                        symbol: found,
                        exact: true,
                    });
                    pending.retain(|s| s != &symbol);
                    continue;
                }
                let q = gateway
                    .ask(
                        TemplateId::RetrievalQuery,
                        &bindings([
                            ("symbol", symbol.clone()),
                            ("test_code", test_code.to_string()),
                            ("previous_query", previous.get(&symbol).cloned().unwrap_or_default()),
                        ]),
                    )?
                    .trim()
                    .to_string();
                let vector = self
                    .embedder
                    .embed(std::slice::from_ref(&q))?
                    .pop()
                    .ok_or_else(|| RetrievalError::Embedder("no vector returned".into()))?;
                let mut candidates: Vec<(usize, &super::IndexEntry, f64)> = Vec::new();
                for (m, idx) in &self.indexes {
                    for (e, score) in query(idx, &vector, self.k)? {
                        candidates.push((*m, e, score));
                    }
                }
                candidates.sort_by(|a, b| b.2.total_cmp(&a.2));
                candidates.truncate(self.k);
                if candidates.is_empty() {
                    previous.insert(symbol, q);
                    continue;
                }
                let listing = candidates
                    .iter()
                    .enumerate()
                    .map(|(i, (m, e, _))| format!("{}. {} | {} | {} | {}", i + 1, e.name, e.signature_or_definition, e.to_symbol(&self.modules[*m].rel).file_path, e.doc))
                    .collect::<Vec<_>>()
                    .join("\n");
                let reply = gateway.ask(
                    TemplateId::RetrievalFilter,
                    &bindings([("symbol", symbol.clone()), ("query", q.clone()), ("candidates", listing)]),
                )?;
                let pick = reply
                    .split(|c: char| !c.is_ascii_digit())
                    .find(|t| !t.is_empty())
                    .and_then(|t| t.parse::<usize>().ok())
                    .filter(|n| (1..=candidates.len()).contains(n));
                match pick {
                    Some(n) if !reply.trim().eq_ignore_ascii_case("none") => {
                        let (m, e, _) = candidates[n - 1];
                        out.resolved.push(Resolution {
                            requested: symbol.clone(),
                            symbol: e.to_symbol(&self.modules[m].rel),
                            exact: e.name == symbol,
                        });
                        pending.retain(|s| s != &symbol);
                    }
                    _ => {
                        previous.insert(symbol, q);
                    }
                }
            }
        }
        out.unresolved = pending;
        Ok(out)
    }
}
