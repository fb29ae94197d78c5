use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AttemptError, CompletionBackend, CompletionRequest, GatewayError};

/// Environment variable holding the bearer credential.
pub const API_KEY_ENV: &str = "FAITHDEBATE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Base URL without the trailing `/chat/completions`, e.g. `https://host/v1`.
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_timeout() -> u64 {
    120
}

/// Chat-completions client. Request body:
/// `{"model", "messages": [{"role":"system"}, {"role":"user"}], "temperature", "max_tokens"}`;
/// the text is read from `choices[0].message.content`.
pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig, api_key: String) -> Result<Self, GatewayError> {
        if api_key.trim().is_empty() {
            return Err(GatewayError::AuthError("empty API key".into()));
        }
        if config.base_url.trim().is_empty() || config.model.trim().is_empty() {
            return Err(GatewayError::Config("base_url and model are required".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_s.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, api_key, agent })
    }

    /// Reads the credential from [`API_KEY_ENV`]; a missing key is an auth error.
    pub fn from_env(config: HttpBackendConfig) -> Result<Self, GatewayError> {
        let key =
            std::env::var(API_KEY_ENV).map_err(|_| GatewayError::AuthError(format!("{API_KEY_ENV} is not set")))?;
        Self::new(config, key)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

pub(crate) fn request_body(model: &str, req: &CompletionRequest) -> Value {
    let mut messages = Vec::new();
    if !req.system_text.is_empty() {
        messages.push(json!({ "role": "system", "content": req.system_text }));
    }
    messages.push(json!({ "role": "user", "content": req.user_text }));
    json!({
        "model": model,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    })
}

pub(crate) fn extract_text(body: &Value) -> Option<String> {
    body.pointer("/choices/0/message/content").and_then(Value::as_str).map(str::to_string)
}

impl CompletionBackend for HttpBackend {
    fn backend_id(&self) -> String {
        format!("http:{}", self.config.model)
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, AttemptError> {
        let body = request_body(&self.config.model, request);
        let mut resp = self
            .agent
            .post(self.endpoint())
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| AttemptError::Transient(format!("transport: {e}")))?;
        let status = resp.status().as_u16();
        let text =
            resp.body_mut().read_to_string().map_err(|e| AttemptError::Transient(format!("reading body: {e}")))?;
        match status {
            200..=299 => {
                let value: Value = serde_json::from_str(&text)
                    .map_err(|e| AttemptError::Transient(format!("invalid JSON body: {e}")))?;
                extract_text(&value)
                    .ok_or_else(|| AttemptError::Transient("response has no choices[0].message.content".into()))
            }
            401 | 403 => Err(AttemptError::Auth(format!("HTTP {status}: {}", truncate(&text)))),
            429 | 500..=599 => Err(AttemptError::Transient(format!("HTTP {status}: {}", truncate(&text)))),
            _ => Err(AttemptError::Fatal(format!("HTTP {status}: {}", truncate(&text)))),
        }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Decoding;

    #[test]
    fn body_shape() {
        let mut req = CompletionRequest::new("t", "user", Decoding { temperature: 0.0, max_tokens: 16 });
        req.system_text = "sys".into();
        let body = request_body("m", &req);
        assert_eq!(body["model"], "m");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "user");
        assert_eq!(body["max_tokens"], 16);
    }

    #[test]
    fn text_extraction() {
        let v = json!({ "choices": [{ "message": { "content": "hi" } }] });
        assert_eq!(extract_text(&v).as_deref(), Some("hi"));
        assert_eq!(extract_text(&json!({ "choices": [] })), None);
    }

    #[test]
    fn empty_key_is_auth_error() {
        let cfg = HttpBackendConfig { base_url: "http://x".into(), model: "m".into(), timeout_s: 1 };
        assert!(matches!(HttpBackend::new(cfg, " ".into()), Err(GatewayError::AuthError(_))));
    }
}
