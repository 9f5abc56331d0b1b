use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::{Embedder, RetrievalError};
use crate::java::JavaSource;
use crate::model::{ResolvedSymbol, SymbolKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub name: String,
    pub kind: SymbolKind,
    /// Javadoc text, or "name + signature" when undocumented.
    pub doc: String,
    pub signature_or_definition: String,
    /// Relative to the index's module root.
    pub file_path: String,
    pub import_path: String,
    pub vector: Vec<f32>,
}

impl IndexEntry {
    pub fn to_symbol(&self, path_prefix: &str) -> ResolvedSymbol {
        let file_path = if path_prefix.is_empty() {
            self.file_path.clone()
        } else {
            format!("{}/{}", path_prefix.trim_end_matches('/'), self.file_path)
        };
        ResolvedSymbol {
            name: self.name.clone(),
            kind: self.kind,
            signature_or_definition: self.signature_or_definition.clone(),
            file_path,
            import_path: self.import_path.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingIndex {
    pub module_root: PathBuf,
    pub entries: Vec<IndexEntry>,
    pub dimension: usize,
    pub embedder_id: String,
}

impl EmbeddingIndex {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let text = serde_json::to_string(self).expect("index serializes");
        std::fs::write(path, text).map_err(|e| RetrievalError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let io = |reason: String| RetrievalError::Io {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        let index: EmbeddingIndex = serde_json::from_str(&text).map_err(|e| io(e.to_string()))?;
        if let Some(bad) = index.entries.iter().find(|e| e.vector.len() != index.dimension) {
            return Err(io(format!("entry `{}` does not have dimension {}", bad.name, index.dimension)));
        }
        Ok(index)
    }
}

fn is_test_source(rel: &Path) -> bool {
    rel.components().any(|c| c.as_os_str() == "test")
}

/// Indexes every method and field declared in production `.java` files under
/// `module_root` (recursively, skipping `test` directories and build output).
pub fn build_index(module_root: &Path, embedder: &dyn Embedder) -> Result<EmbeddingIndex, RetrievalError> {
    build_index_filtered(module_root, embedder, true)
}

pub(crate) fn build_index_filtered(module_root: &Path, embedder: &dyn Embedder, recursive: bool) -> Result<EmbeddingIndex, RetrievalError> {
    if !module_root.is_dir() {
        return Err(RetrievalError::MissingModule(module_root.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = WalkDir::new(module_root)
        .max_depth(if recursive { usize::MAX } else { 1 })
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !(e.file_type().is_dir() && e.file_name() == "target"))
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "java"))
        .map(|e| e.path().to_path_buf())
        .filter(|p| !is_test_source(p.strip_prefix(module_root).unwrap_or(p)))
        .collect();
    files.sort();

    let mut entries = Vec::new();
    for file in files {
        let src = std::fs::read_to_string(&file).map_err(|e| RetrievalError::Io {
            path: file.clone(),
            reason: e.to_string(),
        })?;
        let rel = file.strip_prefix(module_root).unwrap_or(&file).to_string_lossy().replace('\\', "/");
        let parsed = JavaSource::parse(&src);
        for m in &parsed.methods {
            let doc = m.javadoc.clone().unwrap_or_else(|| format!("{} {}", m.name, m.signature));
            entries.push(IndexEntry {
                name: m.name.clone(),
                kind: SymbolKind::Method,
                doc,
                signature_or_definition: m.signature.clone(),
                file_path: rel.clone(),
                import_path: parsed.qualified_name(&m.class_name),
                vector: Vec::new(),
            });
        }
        for f in &parsed.fields {
            let doc = f.javadoc.clone().unwrap_or_else(|| format!("{} {}", f.name, f.definition));
            entries.push(IndexEntry {
                name: f.name.clone(),
                kind: SymbolKind::Field,
                doc,
                signature_or_definition: f.definition.clone(),
                file_path: rel.clone(),
                import_path: parsed.qualified_name(&f.class_name),
                vector: Vec::new(),
            });
        }
    }
    if entries.is_empty() {
        log::warn!("module {} has no indexable declarations", module_root.display());
    } else {
        let docs: Vec<String> = entries.iter().map(|e| e.doc.clone()).collect();
        let vectors = embedder.embed(&docs)?;
        for (entry, v) in entries.iter_mut().zip(vectors) {
            if v.len() != embedder.dimension() {
                return Err(RetrievalError::DimensionMismatch {
                    expected: embedder.dimension(),
                    got: v.len(),
                });
            }
            entry.vector = v;
        }
    }
    Ok(EmbeddingIndex {
        module_root: module_root.to_path_buf(),
        entries,
        dimension: embedder.dimension(),
        embedder_id: embedder.id(),
    })
}

/// `a·b / (|a||b|)`; 0 when either vector has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Top-`k` entries by cosine similarity, descending; ties keep insertion order.
pub fn query<'a>(index: &'a EmbeddingIndex, vector: &[f32], k: usize) -> Result<Vec<(&'a IndexEntry, f64)>, RetrievalError> {
    if vector.len() != index.dimension {
        return Err(RetrievalError::DimensionMismatch {
            expected: index.dimension,
            got: vector.len(),
        });
    }
    let mut scored: Vec<(&IndexEntry, f64)> = index.entries.iter().map(|e| (e, cosine(&e.vector, vector))).collect();
    // stable sort keeps insertion order among equal scores
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored.truncate(k);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::HashEmbedder;

    fn toy(vectors: &[[f32; 4]]) -> EmbeddingIndex {
        EmbeddingIndex {
            module_root: PathBuf::from("m"),
            entries: vectors
                .iter()
                .enumerate()
                .map(|(i, v)| IndexEntry {
                    name: format!("e{i}"),
                    kind: SymbolKind::Method,
                    doc: "d".into(),
                    signature_or_definition: String::new(),
                    file_path: "A.java".into(),
                    import_path: "a.A".into(),
                    vector: v.to_vec(),
                })
                .collect(),
            dimension: 4,
            embedder_id: "toy".into(),
        }
    }

    #[test]
    fn identity_orthogonal_zero() {
        let idx = toy(&[[1.0, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]]);
        let top = query(&idx, &[0.0, 2.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(top[0].0.name, "e1");
        assert_eq!(top[0].1, 1.0);
        assert_eq!(top[1].1, 0.0);
        assert_eq!(top[1].0.name, "e0", "ties keep insertion order");
        assert_eq!(top[2].1, 0.0);
        assert!(matches!(query(&idx, &[1.0], 1), Err(RetrievalError::DimensionMismatch { expected: 4, got: 1 })));
    }

    #[test]
    fn builds_from_sources_with_fallback_docs() {
        let dir = tempfile::tempdir().unwrap();
        let pkg = dir.path().join("src/main/java/io/demo");
        std::fs::create_dir_all(&pkg).unwrap();
        std::fs::create_dir_all(dir.path().join("src/test/java/io/demo")).unwrap();
        std::fs::write(
            pkg.join("Config.java"),
            "package io.demo;\n\npublic class Config {\n    private boolean html;\n\n    /** Enables HTML injection. */\n    public void setInjectHtmlEnabled(boolean v) { html = v; }\n}\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("src/test/java/io/demo/ConfigTest.java"), "class ConfigTest { void t() {} }").unwrap();
        let e = HashEmbedder::default();
        let idx = build_index(dir.path(), &e).unwrap();
        assert_eq!(idx.entries.len(), 2);
        let m = &idx.entries[0];
        assert_eq!((m.name.as_str(), m.doc.as_str(), m.import_path.as_str()), ("setInjectHtmlEnabled", "Enables HTML injection.", "io.demo.Config"));
        assert_eq!(m.file_path, "src/main/java/io/demo/Config.java");
        let f = &idx.entries[1];
        assert_eq!(f.kind, SymbolKind::Field);
        assert!(f.doc.starts_with("html "));

        let path = dir.path().join("index.json");
        idx.save(&path).unwrap();
        assert_eq!(EmbeddingIndex::load(&path).unwrap(), idx);
        assert_eq!(build_index(dir.path(), &e).unwrap(), idx, "build is reproducible");
        assert!(matches!(build_index(&dir.path().join("nope"), &e), Err(RetrievalError::MissingModule(_))));
    }
}
