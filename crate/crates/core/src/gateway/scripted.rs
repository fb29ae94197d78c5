use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{AttemptError, CompletionBackend, CompletionRequest};

/// Canned responses keyed by request tag.
///
/// Lookup order for a request: the first entry whose `tag` equals the request
/// tag, then the first whose `tag_pattern` glob matches, then the first whose
/// `contains` substring occurs in the user text. Each (entry, concrete tag) pair
/// owns its own queue, so pattern entries stay deterministic under concurrency.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedBackendSpec {
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    /// `*` matches any run of characters, `?` exactly one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag_pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub responses: Vec<String>,
}

impl ScriptedBackendSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tag(mut self, tag: impl Into<String>, responses: Vec<String>) -> Self {
        self.entries.push(ScriptEntry { tag: Some(tag.into()), responses, ..Default::default() });
        self
    }

    pub fn pattern(mut self, pattern: impl Into<String>, responses: Vec<String>) -> Self {
        self.entries.push(ScriptEntry { tag_pattern: Some(pattern.into()), responses, ..Default::default() });
        self
    }

    pub fn contains(mut self, needle: impl Into<String>, responses: Vec<String>) -> Self {
        self.entries.push(ScriptEntry { contains: Some(needle.into()), responses, ..Default::default() });
        self
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn find(&self, req: &CompletionRequest) -> Option<usize> {
        let tag = &req.request_tag;
        let by = |pred: &dyn Fn(&ScriptEntry) -> bool| self.entries.iter().position(pred);
        by(&|e| e.tag.as_deref() == Some(tag.as_str()))
            .or_else(|| by(&|e| e.tag_pattern.as_deref().is_some_and(|p| glob_match(p, tag))))
            .or_else(|| by(&|e| e.contains.as_deref().is_some_and(|c| req.user_text.contains(c))))
    }
}

pub struct ScriptedBackend {
    spec: ScriptedBackendSpec,
    cursors: Mutex<HashMap<(usize, String), usize>>,
}

impl ScriptedBackend {
    pub fn new(spec: ScriptedBackendSpec) -> Self {
        Self { spec, cursors: Mutex::new(HashMap::new()) }
    }
}

impl CompletionBackend for ScriptedBackend {
    fn backend_id(&self) -> String {
        "scripted".into()
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, AttemptError> {
        let idx = self.spec.find(request).ok_or(AttemptError::Exhausted)?;
        let responses = &self.spec.entries[idx].responses;
        let mut cursors = self.cursors.lock().unwrap_or_else(|p| p.into_inner());
        let cursor = cursors.entry((idx, request.request_tag.clone())).or_insert(0);
        let text = responses.get(*cursor).ok_or(AttemptError::Exhausted)?.clone();
        *cursor += 1;
        Ok(text)
    }
}

/// Glob match over the whole string.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|c| *c == '*')
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Decoding, Gateway, GatewayError};

    fn req(tag: &str, text: &str) -> CompletionRequest {
        CompletionRequest::new(tag, text, Decoding::default())
    }

    #[test]
    fn first_canned_text_then_exhausted() {
        let gw = Gateway::scripted(ScriptedBackendSpec::new().tag("agent1/round1", vec!["A".into()]));
        let r = gw.complete(&req("agent1/round1", "x")).unwrap();
        assert_eq!((r.text.as_str(), r.attempt), ("A", 1));
        assert!(matches!(gw.complete(&req("agent1/round1", "x")), Err(GatewayError::ScriptedExhausted { .. })));
    }

    #[test]
    fn lookup_order_and_per_tag_queues() {
        let spec = ScriptedBackendSpec::new()
            .contains("needle", vec!["C".into()])
            .pattern("r/*/agent?", vec!["P1".into(), "P2".into()])
            .tag("r/s/agent1", vec!["T".into()]);
        let gw = Gateway::scripted(spec);
        assert_eq!(gw.complete(&req("r/s/agent1", "needle")).unwrap().text, "T");
        assert_eq!(gw.complete(&req("r/s/agent2", "needle")).unwrap().text, "P1");
        assert_eq!(gw.complete(&req("r/s/agent3", "x")).unwrap().text, "P1");
        assert_eq!(gw.complete(&req("r/s/agent2", "x")).unwrap().text, "P2");
        assert_eq!(gw.complete(&req("other", "has needle")).unwrap().text, "C");
        assert!(gw.complete(&req("unmatched", "x")).is_err());
    }

    #[test]
    fn glob() {
        assert!(glob_match("*", ""));
        assert!(glob_match("a*c", "abbbc"));
        assert!(glob_match("*/round?", "x/y/round3"));
        assert!(!glob_match("*/round?", "x/round10"));
        assert!(!glob_match("abc", "abcd"));
    }

    #[test]
    fn spec_parses_from_json() {
        let spec = ScriptedBackendSpec::from_json(
            r#"{"entries":[{"tag_pattern":"*/zero_shot","responses":["<label>1</label>"]}]}"#,
        )
        .unwrap();
        assert_eq!(spec.entries[0].tag_pattern.as_deref(), Some("*/zero_shot"));
    }
}
