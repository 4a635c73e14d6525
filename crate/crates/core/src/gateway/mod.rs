//! Chat-completion transport over interchangeable backends.

mod http;
mod scripted;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use http::{post_json, HttpBackend};
pub(crate) use http::{build_client as http_client, credential, join_url};
pub use scripted::{read_script, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_secs: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, base_backoff_secs: 1.0 }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, doubling each time.
    pub fn backoff(&self, attempt: u32) -> std::time::Duration {
        let factor = 2f64.powi(attempt.saturating_sub(1).min(16) as i32);
        std::time::Duration::from_secs_f64((self.base_backoff_secs * factor).max(0.0))
    }
}

fn default_temperature() -> f64 {
    0.0
}
fn default_max_output_tokens() -> u32 {
    4096
}
fn default_timeout() -> f64 {
    120.0
}
fn default_prompt_limit() -> usize {
    400_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub backend: BackendKind,
    pub model_name: String,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub auth_env_var: Option<String>,
    #[serde(default)]
    pub script_path: Option<PathBuf>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: f64,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Upper bound on system plus user prompt length, in characters.
    #[serde(default = "default_prompt_limit")]
    pub max_prompt_chars: usize,
}

impl ModelSpec {
    pub fn scripted(path: impl Into<PathBuf>) -> Self {
        ModelSpec {
            backend: BackendKind::Scripted,
            model_name: "scripted".into(),
            endpoint_url: None,
            auth_env_var: None,
            script_path: Some(path.into()),
            temperature: default_temperature(),
            max_output_tokens: default_max_output_tokens(),
            request_timeout_secs: default_timeout(),
            retry: RetryPolicy::default(),
            max_prompt_chars: default_prompt_limit(),
        }
    }

    pub fn http(model_name: impl Into<String>, endpoint_url: impl Into<String>, auth_env_var: impl Into<String>) -> Self {
        ModelSpec {
            backend: BackendKind::Http,
            model_name: model_name.into(),
            endpoint_url: Some(endpoint_url.into()),
            auth_env_var: Some(auth_env_var.into()),
            script_path: None,
            ..ModelSpec::scripted("")
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |m: &str| Err(GatewayError::InvalidSpec(m.to_string()));
        match self.backend {
            BackendKind::Http => {
                if self.endpoint_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                    return invalid("http backend requires endpoint_url");
                }
                if self.auth_env_var.as_deref().is_none_or(|v| v.trim().is_empty()) {
                    return invalid("http backend requires auth_env_var");
                }
            }
            BackendKind::Scripted => {
                if self.script_path.as_ref().is_none_or(|p| p.as_os_str().is_empty()) {
                    return invalid("scripted backend requires script_path");
                }
            }
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return invalid("temperature must be >= 0");
        }
        if self.max_output_tokens == 0 {
            return invalid("max_output_tokens must be positive");
        }
        if self.retry.max_attempts == 0 {
            return invalid("retry.max_attempts must be >= 1");
        }
        if self.request_timeout_secs.is_nan() || self.request_timeout_secs <= 0.0 {
            return invalid("request_timeout_secs must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub total_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub key: String,
    pub system_text: String,
    pub user_text: String,
    /// Verbatim completion text.
    pub response_text: String,
    pub usage: Option<Usage>,
    pub latency_secs: f64,
    pub attempt_count: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("credential environment variable `{0}` is not set")]
    AuthMissing(String),
    #[error("backend failed after {attempts} attempt(s): {last_error}")]
    BackendExhausted { attempts: u32, last_error: String },
    #[error("backend rejected the request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("script has no entry for key `{0}`")]
    ScriptMiss(String),
    #[error("cannot load script {path}: {message}")]
    Script { path: PathBuf, message: String },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("prompt text is empty")]
    EmptyPrompt,
    #[error("prompt is {len} characters, over the limit of {limit}")]
    PromptTooLong { len: usize, limit: usize },
}

/// A chat backend. Implementations must be callable from several threads.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, key: &str, system_text: &str, user_text: &str) -> Result<ChatExchange, GatewayError>;

    /// Backend model identifier, for reports.
    fn model_name(&self) -> &str;
}

pub(crate) fn check_prompt(system_text: &str, user_text: &str, limit: usize) -> Result<(), GatewayError> {
    if system_text.trim().is_empty() || user_text.trim().is_empty() {
        return Err(GatewayError::EmptyPrompt);
    }
    let len = system_text.chars().count() + user_text.chars().count();
    if len > limit {
        return Err(GatewayError::PromptTooLong { len, limit });
    }
    Ok(())
}

/// Builds the backend described by `spec`.
pub fn connect(spec: &ModelSpec) -> Result<Arc<dyn ChatBackend>, GatewayError> {
    spec.validate()?;
    Ok(match spec.backend {
        BackendKind::Http => Arc::new(HttpBackend::new(spec.clone())?),
        BackendKind::Scripted => Arc::new(ScriptedBackend::load(spec)?),
    })
}

/// `<agent>/<task>@rev<revision>`.
pub fn script_key(agent: &str, task: &str, revision: u32) -> String {
    assert!(revision >= 1, "script revisions start at 1");
    format!("{agent}/{task}@rev{revision}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys() {
        assert_eq!(script_key("modeler", "process_view", 1), "modeler/process_view@rev1");
        assert_eq!(script_key("modeler", "process_view", 2), "modeler/process_view@rev2");
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::scripted("x.json").validate().is_ok());
        assert!(ModelSpec::scripted("").validate().is_err());
        let mut http = ModelSpec::http("m", "http://localhost:1", "KEY");
        assert!(http.validate().is_ok());
        http.auth_env_var = None;
        assert!(http.validate().is_err());
        let mut bad = ModelSpec::scripted("x");
        bad.temperature = -0.1;
        assert!(bad.validate().is_err());
        bad.temperature = f64::NAN;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn backoff_doubles() {
        let r = RetryPolicy { max_attempts: 5, base_backoff_secs: 0.5 };
        assert_eq!(r.backoff(1).as_secs_f64(), 0.5);
        assert_eq!(r.backoff(2).as_secs_f64(), 1.0);
        assert_eq!(r.backoff(3).as_secs_f64(), 2.0);
    }

    #[test]
    fn prompt_limits() {
        assert!(matches!(check_prompt("", "u", 10), Err(GatewayError::EmptyPrompt)));
        assert!(matches!(check_prompt("s", " \n", 10), Err(GatewayError::EmptyPrompt)));
        assert!(matches!(check_prompt("sss", "uuuuuuuu", 10), Err(GatewayError::PromptTooLong { len: 11, .. })));
        assert!(check_prompt("s", "u", 10).is_ok());
    }
}
