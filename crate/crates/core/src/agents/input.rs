use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::java::{method_name_of, variable_name_of};
use crate::llm::{bindings, Gateway, TemplateId};
use crate::model::{DiffHunk, UpdateTask};
use crate::tokens::identifier_tokens;

/// Weights and cutoff for hunk ranking.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HunkRanking {
    pub k: usize,
    pub tfidf_weight: f64,
    pub repetition_weight: f64,
}

impl Default for HunkRanking {
    fn default() -> Self {
        HunkRanking {
            k: 10,
            tfidf_weight: 0.5,
            repetition_weight: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedHunk {
    pub hunk: DiffHunk,
    pub score: f64,
    pub tfidf: f64,
    pub repetition: usize,
}

/// Scores closer than this are ties.
const EPS: f64 = 1e-12;

fn term_counts(tokens: &[String]) -> HashMap<&str, f64> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0.0) += 1.0;
    }
    m
}

/// TF-IDF cosine between the test and each hunk's changed lines. The corpus
/// is the test plus every hunk; idf = ln((1+N)/(1+df)) + 1.
fn tfidf_similarities(test: &str, hunks: &[DiffHunk]) -> Vec<f64> {
    let docs: Vec<Vec<String>> = std::iter::once(identifier_tokens(test))
        .chain(hunks.iter().map(|h| identifier_tokens(&h.changed_lines().collect::<Vec<_>>().join("\n"))))
        .collect();
    let n = docs.len() as f64;
    let counts: Vec<HashMap<&str, f64>> = docs.iter().map(|d| term_counts(d)).collect();
    let mut df: HashMap<&str, f64> = HashMap::new();
    for c in &counts {
        for t in c.keys() {
            *df.entry(t).or_insert(0.0) += 1.0;
        }
    }
    let weigh = |c: &HashMap<&str, f64>| -> BTreeMap<String, f64> {
        c.iter()
            .map(|(t, tf)| (t.to_string(), tf * (((1.0 + n) / (1.0 + df[t])).ln() + 1.0)))
            .collect()
    };
    let test_vec = weigh(&counts[0]);
    counts[1..]
        .iter()
        .map(|c| {
            let v = weigh(c);
            let dot: f64 = v.iter().filter_map(|(t, w)| test_vec.get(t).map(|x| x * w)).sum();
            let na = test_vec.values().map(|x| x * x).sum::<f64>().sqrt();
            let nb = v.values().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot / (na * nb)
            }
        })
        .collect()
}

/// Number of hunks (itself included) whose changed-line token multiset equals this one's.
fn repetitions(hunks: &[DiffHunk]) -> Vec<usize> {
    let keys: Vec<Vec<String>> = hunks
        .iter()
        .map(|h| {
            let mut t = identifier_tokens(&h.changed_lines().collect::<Vec<_>>().join("\n"));
            t.sort();
            t
        })
        .collect();
    keys.iter().map(|k| keys.iter().filter(|o| *o == k).count()).collect()
}

fn min_max(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > EPS) {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Scores every hunk and returns the top `config.k`, best first. Ties go to
/// the lower hunk index.
pub fn rank_hunks_with(test_before: &str, hunks: &[DiffHunk], config: &HunkRanking) -> Vec<RankedHunk> {
    if hunks.is_empty() {
        return Vec::new();
    }
    let sims = tfidf_similarities(test_before, hunks);
    let reps = repetitions(hunks);
    let norm_sim = min_max(&sims);
    let norm_rep = min_max(&reps.iter().map(|r| *r as f64).collect::<Vec<_>>());
    let mut ranked: Vec<RankedHunk> = hunks
        .iter()
        .enumerate()
        .map(|(i, h)| RankedHunk {
            hunk: h.clone(),
            score: config.tfidf_weight * norm_sim[i] + config.repetition_weight * norm_rep[i],
            tfidf: sims[i],
            repetition: reps[i],
        })
        .collect();
    ranked.sort_by(|a, b| {
        if (a.score - b.score).abs() <= EPS {
            a.hunk.index.cmp(&b.hunk.index)
        } else {
            b.score.total_cmp(&a.score)
        }
    });
    ranked.truncate(config.k.max(1));
    ranked
}

/// Top-`k` hunks with the default equal weighting.
pub fn rank_hunks(test_before: &str, hunks: &[DiffHunk], k: usize) -> Vec<DiffHunk> {
    let config = HunkRanking { k, ..HunkRanking::default() };
    rank_hunks_with(test_before, hunks, &config).into_iter().map(|r| r.hunk).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilteredContext {
    pub kept_hunks: Vec<DiffHunk>,
    pub kept_non_test_methods: Vec<String>,
    pub kept_variables: Vec<String>,
}

impl FilteredContext {
    /// Everything the task offers, hunks as ranked.
    pub fn keep_all(task: &UpdateTask, ranked: &[DiffHunk]) -> Self {
        FilteredContext {
            kept_hunks: ranked.to_vec(),
            kept_non_test_methods: task.non_test_methods.clone(),
            kept_variables: task.class_variables.clone(),
        }
    }
}

#[derive(Deserialize)]
struct FilterReply {
    #[serde(default)]
    non_test_methods: Vec<String>,
    #[serde(default)]
    class_variables: Vec<String>,
}

fn parse_filter_reply(reply: &str) -> Option<FilterReply> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    if end < start {
        return None;
    }
    serde_json::from_str(&reply[start..=end]).ok()
}

pub(crate) fn focal_methods_text(task: &UpdateTask) -> String {
    if task.focal_changed() {
        format!("// after the change\n{}\n\n// before the change\n{}", task.focal_after.source, task.focal_before.source)
    } else {
        task.focal_after.source.clone()
    }
}

/// Asks the model which helpers and variables the update needs. Names the
/// reply invents are dropped; an unreadable reply keeps everything. When the
/// task has no helpers or variables there is nothing to filter and no prompt
/// is sent.
pub fn filter_context(task: &UpdateTask, ranked: &[DiffHunk], gateway: &Gateway) -> Result<FilteredContext, AgentError> {
    if task.non_test_methods.is_empty() && task.class_variables.is_empty() {
        return Ok(FilteredContext::keep_all(task, ranked));
    }
    let listing = |items: &[String]| -> String {
        if items.is_empty() {
            "(none)".to_string()
        } else {
            items.join("\n\n")
        }
    };
    let reply = gateway.ask(
        TemplateId::InputFilter,
        &bindings([
            ("test_before", task.test_before.clone()),
            ("focal_methods", focal_methods_text(task)),
            ("hunks", ranked.iter().map(DiffHunk::render).collect::<Vec<_>>().join("")),
            ("non_test_methods", listing(&task.non_test_methods)),
            ("class_variables", listing(&task.class_variables)),
        ]),
    )?;
    let Some(parsed) = parse_filter_reply(&reply) else {
        log::warn!("input filter reply unreadable; keeping full context");
        return Ok(FilteredContext::keep_all(task, ranked));
    };
    let kept_non_test_methods = task
        .non_test_methods
        .iter()
        .filter(|src| method_name_of(src).is_some_and(|n| parsed.non_test_methods.contains(&n)))
        .cloned()
        .collect();
    let kept_variables = task
        .class_variables
        .iter()
        .filter(|src| variable_name_of(src).is_some_and(|n| parsed.class_variables.contains(&n)))
        .cloned()
        .collect();
    Ok(FilteredContext {
        kept_hunks: ranked.to_vec(),
        kept_non_test_methods,
        kept_variables,
    })
}
