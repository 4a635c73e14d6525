use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{check_prompt, ChatBackend, ChatExchange, GatewayError, ModelSpec, RetryPolicy, Usage};

/// OpenAI-compatible chat-completion client.
#[derive(Debug)]
pub struct HttpBackend {
    spec: ModelSpec,
    client: Client,
}

impl HttpBackend {
    pub fn new(spec: ModelSpec) -> Result<Self, GatewayError> {
        spec.validate()?;
        let client = build_client(spec.request_timeout_secs)?;
        Ok(HttpBackend { spec, client })
    }
}

pub(crate) fn build_client(timeout_secs: f64) -> Result<Client, GatewayError> {
    Client::builder()
        .timeout(Duration::from_secs_f64(timeout_secs))
        .build()
        .map_err(|e| GatewayError::InvalidSpec(e.to_string()))
}

pub(crate) fn credential(var: &str) -> Result<String, GatewayError> {
    match std::env::var(var) {
        Ok(v) if !v.trim().is_empty() => Ok(v),
        _ => Err(GatewayError::AuthMissing(var.to_string())),
    }
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!("{}/{path}", base.trim_end_matches('/'))
}

/// POSTs `body` with bearer auth, retrying timeouts, 429 and 5xx with
/// exponential backoff. Returns the decoded body and the attempts used.
pub fn post_json(
    client: &Client,
    url: &str,
    token: &str,
    body: &Value,
    retry: &RetryPolicy,
) -> Result<(Value, u32), GatewayError> {
    let mut last_error = String::new();
    for attempt in 1..=retry.max_attempts {
        if attempt > 1 {
            std::thread::sleep(retry.backoff(attempt - 1));
        }
        match client.post(url).bearer_auth(token).json(body).send() {
            Ok(resp) => {
                let status = resp.status();
                if status.is_success() {
                    let value = resp.json::<Value>().map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
                    return Ok((value, attempt));
                }
                let text = resp.text().unwrap_or_default();
                if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                    last_error = format!("status {status}: {}", truncate(&text));
                    continue;
                }
                return Err(GatewayError::Rejected { status: status.as_u16(), body: truncate(&text) });
            }
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                last_error = e.to_string();
            }
            Err(e) => return Err(GatewayError::MalformedResponse(e.to_string())),
        }
    }
    Err(GatewayError::BackendExhausted { attempts: retry.max_attempts, last_error })
}

fn truncate(s: &str) -> String {
    s.chars().take(500).collect()
}

fn extract_completion(value: &Value) -> Result<(String, Option<Usage>), GatewayError> {
    let text = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::MalformedResponse("missing choices[0].message.content".into()))?;
    let usage = value.get("usage").map(|u| Usage {
        prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64),
        completion_tokens: u.get("completion_tokens").and_then(Value::as_u64),
        total_tokens: u.get("total_tokens").and_then(Value::as_u64),
    });
    Ok((text.to_string(), usage))
}

impl ChatBackend for HttpBackend {
    fn complete(&self, key: &str, system_text: &str, user_text: &str) -> Result<ChatExchange, GatewayError> {
        check_prompt(system_text, user_text, self.spec.max_prompt_chars)?;
        let var = self.spec.auth_env_var.as_deref().unwrap_or_default();
        let token = credential(var)?;
        let endpoint = self.spec.endpoint_url.as_deref().unwrap_or_default();
        let body = json!({
            "model": self.spec.model_name,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
            "temperature": self.spec.temperature,
            "max_tokens": self.spec.max_output_tokens,
        });
        let started = Instant::now();
        let (value, attempts) =
            post_json(&self.client, &join_url(endpoint, "chat/completions"), &token, &body, &self.spec.retry)?;
        let (response_text, usage) = extract_completion(&value)?;
        Ok(ChatExchange {
            key: key.to_string(),
            system_text: system_text.to_string(),
            user_text: user_text.to_string(),
            response_text,
            usage,
            latency_secs: started.elapsed().as_secs_f64(),
            attempt_count: attempts,
        })
    }

    fn model_name(&self) -> &str {
        &self.spec.model_name
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_extraction_keeps_text_verbatim() {
        let v = json!({"choices": [{"message": {"content": "  Functional Requirements:\n"}}], "usage": {"total_tokens": 9}});
        let (text, usage) = extract_completion(&v).unwrap();
        assert_eq!(text, "  Functional Requirements:\n");
        assert_eq!(usage.unwrap().total_tokens, Some(9));
        assert!(extract_completion(&json!({"choices": []})).is_err());
    }

    #[test]
    fn url_joining() {
        assert_eq!(join_url("http://h/v1/", "chat/completions"), "http://h/v1/chat/completions");
        assert_eq!(join_url("http://h/v1", "embeddings"), "http://h/v1/embeddings");
    }
}
