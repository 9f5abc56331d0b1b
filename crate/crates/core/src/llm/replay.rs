use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatConfig, GatewayError, PromptCall};

/// Matches any binding set for the record's template, in transcript order.
pub const WILDCARD_DIGEST: &str = "*";

/// One line of a transcript file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub template_id: String,
    pub binding_digest: String,
    pub response_text: String,
    /// Digest of the exact prompt bytes; only consulted in strict mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<String>,
}

/// Answers prompts from a recorded transcript.
///
/// Lookup order: exact (template, binding digest) queue, then the template's
/// wildcard queue. Entries sharing a key are served in file order, once each.
#[derive(Debug, Default)]
pub struct ReplayBackend {
    exact: Mutex<HashMap<(String, String), VecDeque<String>>>,
    by_prompt: Mutex<HashMap<(String, String), VecDeque<String>>>,
    wildcard: Mutex<HashMap<String, VecDeque<String>>>,
    strict: bool,
}

impl ReplayBackend {
    pub fn new(records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        let mut exact: HashMap<(String, String), VecDeque<String>> = HashMap::new();
        let mut by_prompt: HashMap<(String, String), VecDeque<String>> = HashMap::new();
        let mut wildcard: HashMap<String, VecDeque<String>> = HashMap::new();
        for r in records {
            if r.binding_digest == WILDCARD_DIGEST {
                wildcard.entry(r.template_id).or_default().push_back(r.response_text);
                continue;
            }
            if let Some(p) = &r.prompt_digest {
                by_prompt
                    .entry((r.template_id.clone(), p.clone()))
                    .or_default()
                    .push_back(r.response_text.clone());
            }
            exact.entry((r.template_id, r.binding_digest)).or_default().push_back(r.response_text);
        }
        ReplayBackend {
            exact: Mutex::new(exact),
            by_prompt: Mutex::new(by_prompt),
            wildcard: Mutex::new(wildcard),
            strict: false,
        }
    }

    /// Match on exact prompt bytes instead of binding digests.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    /// Scripted replies for a template, served in order regardless of bindings.
    pub fn scripted<'a>(replies: impl IntoIterator<Item = (super::TemplateId, &'a str)>) -> Self {
        Self::new(replies.into_iter().map(|(id, text)| TranscriptRecord {
            template_id: id.as_str().to_string(),
            binding_digest: WILDCARD_DIGEST.to_string(),
            response_text: text.to_string(),
            prompt_digest: None,
        }))
    }

    /// Entries not yet served.
    pub fn remaining(&self) -> usize {
        let exact = if self.strict { &self.by_prompt } else { &self.exact };
        exact.lock().unwrap().values().map(VecDeque::len).sum::<usize>()
            + self.wildcard.lock().unwrap().values().map(VecDeque::len).sum::<usize>()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, call: &PromptCall, _config: &ChatConfig) -> Result<String, GatewayError> {
        let template = call.template_id.as_str().to_string();
        let digest = if self.strict { call.prompt_digest() } else { call.binding_digest.clone() };
        let exact = if self.strict { &self.by_prompt } else { &self.exact };
        if let Some(reply) = exact
            .lock()
            .unwrap()
            .get_mut(&(template.clone(), digest.clone()))
            .and_then(VecDeque::pop_front)
        {
            return Ok(reply);
        }
        if let Some(reply) = self.wildcard.lock().unwrap().get_mut(&template).and_then(VecDeque::pop_front) {
            return Ok(reply);
        }
        Err(GatewayError::ReplayMiss { template, digest })
    }
}

/// Reads a newline-delimited transcript. Blank lines are skipped.
pub fn load_transcript(path: &Path) -> Result<ReplayBackend, GatewayError> {
    let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    parse_transcript(&text)
}

pub(crate) fn parse_transcript(text: &str) -> Result<ReplayBackend, GatewayError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord = serde_json::from_str(line).map_err(|e| GatewayError::MalformedTranscript {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if super::TemplateId::parse(&record.template_id).is_none() {
            return Err(GatewayError::MalformedTranscript {
                line: i + 1,
                reason: format!("unknown template id `{}`", record.template_id),
            });
        }
        records.push(record);
    }
    Ok(ReplayBackend::new(records))
}

/// Wraps a backend and records every exchange as transcript lines.
pub struct RecordingBackend<B> {
    inner: B,
    records: Mutex<Vec<TranscriptRecord>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            records: Mutex::new(Vec::new()),
        }
    }

    pub fn records(&self) -> Vec<TranscriptRecord> {
        self.records.lock().unwrap().clone()
    }

    pub fn write_transcript(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        for r in self.records.lock().unwrap().iter() {
            writeln!(f, "{}", serde_json::to_string(r).expect("record serializes"))?;
        }
        Ok(())
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, call: &PromptCall, config: &ChatConfig) -> Result<String, GatewayError> {
        let reply = self.inner.complete(call, config)?;
        self.records.lock().unwrap().push(TranscriptRecord {
            template_id: call.template_id.as_str().to_string(),
            binding_digest: call.binding_digest.clone(),
            response_text: reply.clone(),
            prompt_digest: Some(call.prompt_digest()),
        });
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::super::TemplateId;
    use super::*;

    fn call(id: TemplateId, digest: &str, prompt: &str) -> PromptCall {
        PromptCall {
            template_id: id,
            binding_digest: digest.into(),
            prompt: prompt.into(),
        }
    }

    fn rec(id: &str, digest: &str, text: &str) -> String {
        serde_json::to_string(&TranscriptRecord {
            template_id: id.into(),
            binding_digest: digest.into(),
            response_text: text.into(),
            prompt_digest: None,
        })
        .unwrap()
    }

    #[test]
    fn identity_and_miss() {
        let backend = parse_transcript(&rec("test_update", "d1", "OK")).unwrap();
        let cfg = ChatConfig::default();
        assert_eq!(backend.complete(&call(TemplateId::TestUpdate, "d1", "P"), &cfg).unwrap(), "OK");
        assert!(matches!(
            backend.complete(&call(TemplateId::TestUpdate, "d9", "P"), &cfg),
            Err(GatewayError::ReplayMiss { .. })
        ));
    }

    #[test]
    fn three_entries_three_prompts() {
        let text = [rec("test_update", "a", "1"), rec("error_analyze", "b", "2"), rec("test_update", "c", "3")].join("\n");
        let backend = parse_transcript(&text).unwrap();
        let cfg = ChatConfig::default();
        assert_eq!(backend.complete(&call(TemplateId::TestUpdate, "c", ""), &cfg).unwrap(), "3");
        assert_eq!(backend.complete(&call(TemplateId::ErrorAnalyze, "b", ""), &cfg).unwrap(), "2");
        assert_eq!(backend.complete(&call(TemplateId::TestUpdate, "a", ""), &cfg).unwrap(), "1");
        assert_eq!(backend.remaining(), 0);
    }

    #[test]
    fn duplicates_served_in_order_then_miss() {
        let text = [rec("test_update", "d", "first"), rec("test_update", "d", "second")].join("\n");
        let backend = parse_transcript(&text).unwrap();
        let cfg = ChatConfig::default();
        let c = call(TemplateId::TestUpdate, "d", "");
        assert_eq!(backend.complete(&c, &cfg).unwrap(), "first");
        assert_eq!(backend.complete(&c, &cfg).unwrap(), "second");
        assert!(backend.complete(&c, &cfg).is_err());
    }

    #[test]
    fn empty_transcript_always_misses() {
        let backend = parse_transcript("").unwrap();
        assert!(backend.complete(&call(TemplateId::InputFilter, "x", ""), &ChatConfig::default()).is_err());
    }

    #[test]
    fn malformed_line_is_reported() {
        let text = format!("{}\nnot json\n", rec("test_update", "a", "1"));
        match parse_transcript(&text) {
            Err(GatewayError::MalformedTranscript { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_transcript(&rec("nope", "a", "1")) {
            Err(GatewayError::MalformedTranscript { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn strict_mode_keys_on_prompt_bytes() {
        let c = call(TemplateId::TestUpdate, "bind", "exact prompt");
        let record = TranscriptRecord {
            template_id: "test_update".into(),
            binding_digest: "other".into(),
            response_text: "hit".into(),
            prompt_digest: Some(c.prompt_digest()),
        };
        let backend = ReplayBackend::new([record]).strict(true);
        assert_eq!(backend.complete(&c, &ChatConfig::default()).unwrap(), "hit");
        let changed = call(TemplateId::TestUpdate, "bind", "exact prompt!");
        assert!(backend.complete(&changed, &ChatConfig::default()).is_err());
    }

    #[test]
    fn recording_round_trips() {
        let inner = ReplayBackend::scripted([(TemplateId::TestUpdate, "R1")]);
        let rec = RecordingBackend::new(inner);
        let c = call(TemplateId::TestUpdate, "dg", "prompt");
        rec.complete(&c, &ChatConfig::default()).unwrap();
        let replay = ReplayBackend::new(rec.records());
        assert_eq!(replay.complete(&c, &ChatConfig::default()).unwrap(), "R1");
    }
}
