//! Blocking client for a chat-completions-compatible HTTP endpoint, exposed
//! both as a strategic selector and as a runtime decision source.

use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use worldline_core::contract::parse_forecast_response;
use worldline_core::selector::{
    RuntimeReply, RuntimeRequest, RuntimeSource, SelectorResult, StrategicRequest, StrategicSelector,
};
use worldline_core::ParserFallback;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Environment variable holding the base URL (`.../v1`) or the full
    /// `.../chat/completions` URL.
    pub url_env: String,
    pub key_env: String,
    pub model_env: String,
    /// Used when `model_env` is unset.
    pub model: String,
    pub temperature: f64,
    pub timeout_s: f64,
    /// Extra attempts after a transport failure. Parse failures never retry.
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            url_env: "STEINS_ENDPOINT_URL".to_owned(),
            key_env: "STEINS_ENDPOINT_KEY".to_owned(),
            model_env: "STEINS_MODEL".to_owned(),
            model: "gpt-4o-mini".to_owned(),
            temperature: 0.0,
            timeout_s: 30.0,
            max_retries: 2,
            backoff_ms: 250,
        }
    }
}

#[derive(Debug, Error)]
pub enum EndpointError {
    #[error("environment variable {0} is not set")]
    MissingEnv(String),
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("response has no choices[0].message.content")]
    NoContent,
    #[error("could not build HTTP client: {0}")]
    Client(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub content: String,
    pub latency_s: f64,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

pub struct EndpointClient {
    http: reqwest::blocking::Client,
    url: String,
    key: Option<String>,
    model: String,
    temperature: f64,
    max_retries: u32,
    backoff: Duration,
}

fn completions_url(base: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        base.to_owned()
    } else {
        format!("{base}/chat/completions")
    }
}

impl EndpointClient {
    pub fn new(url: &str, key: Option<String>, model: &str, cfg: &EndpointConfig) -> Result<Self, EndpointError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_s))
            .build()
            .map_err(|e| EndpointError::Client(e.to_string()))?;
        Ok(Self {
            http,
            url: completions_url(url),
            key,
            model: model.to_owned(),
            temperature: cfg.temperature,
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
        })
    }

    pub fn from_env(cfg: &EndpointConfig) -> Result<Self, EndpointError> {
        let url = std::env::var(&cfg.url_env).map_err(|_| EndpointError::MissingEnv(cfg.url_env.clone()))?;
        let key = std::env::var(&cfg.key_env).ok().filter(|k| !k.is_empty());
        let model = std::env::var(&cfg.model_env).unwrap_or_else(|_| cfg.model.clone());
        Self::new(&url, key, &model, cfg)
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    fn attempt(&self, body: &Value) -> Result<Value, EndpointError> {
        let mut req = self.http.post(&self.url).json(body);
        if let Some(key) = &self.key {
            req = req.bearer_auth(key);
        }
        let transport = |e: reqwest::Error| {
            if e.is_timeout() {
                EndpointError::Timeout
            } else {
                EndpointError::Transport(e.to_string())
            }
        };
        let resp = req.send().map_err(transport)?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(EndpointError::Status {
                status: status.as_u16(),
                body: body.chars().take(200).collect(),
            });
        }
        let text = resp.text().map_err(transport)?;
        serde_json::from_str(&text).map_err(|_| EndpointError::NoContent)
    }

    /// One chat completion. Only timeouts and transport failures are retried.
    pub fn chat(&self, system: &str, user: &str) -> Result<ChatReply, EndpointError> {
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.temperature,
        });
        let start = Instant::now();
        let mut attempt = 0;
        let value = loop {
            match self.attempt(&body) {
                Ok(v) => break v,
                Err(e @ (EndpointError::Timeout | EndpointError::Transport(_))) if attempt < self.max_retries => {
                    attempt += 1;
                    log::warn!("endpoint attempt {attempt} failed ({e}); retrying");
                    thread::sleep(self.backoff * attempt);
                }
                Err(e) => return Err(e),
            }
        };
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or(EndpointError::NoContent)?
            .to_owned();
        Ok(ChatReply {
            content,
            latency_s: start.elapsed().as_secs_f64(),
            prompt_tokens: value.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
            completion_tokens: value.pointer("/usage/completion_tokens").and_then(Value::as_u64),
        })
    }
}

pub struct EndpointSelector {
    client: EndpointClient,
    id: String,
}

impl EndpointSelector {
    pub fn new(client: EndpointClient) -> Self {
        let id = format!("endpoint:{}", client.model());
        Self { client, id }
    }
}

impl StrategicSelector for EndpointSelector {
    fn id(&self) -> &str {
        &self.id
    }

    fn select(&mut self, req: &StrategicRequest<'_>) -> SelectorResult {
        let start = Instant::now();
        match self.client.chat(&req.prompt.system, &req.prompt.user) {
            Ok(reply) => SelectorResult {
                outcome: parse_forecast_response(&reply.content, &req.ctx),
                latency_s: Some(reply.latency_s),
                prompt_tokens: reply.prompt_tokens,
                completion_tokens: reply.completion_tokens,
                raw_response: reply.content,
            },
            Err(e) => {
                log::warn!("strategic endpoint unavailable: {e}");
                SelectorResult {
                    outcome: Err(ParserFallback::Unavailable(e.to_string())),
                    latency_s: Some(start.elapsed().as_secs_f64()),
                    prompt_tokens: None,
                    completion_tokens: None,
                    raw_response: String::new(),
                }
            }
        }
    }
}

pub struct EndpointRuntime {
    client: EndpointClient,
    id: String,
}

impl EndpointRuntime {
    pub fn new(client: EndpointClient) -> Self {
        let id = format!("endpoint:{}", client.model());
        Self { client, id }
    }
}

impl RuntimeSource for EndpointRuntime {
    fn id(&self) -> &str {
        &self.id
    }

    fn propose(&mut self, req: &RuntimeRequest<'_>) -> RuntimeReply {
        let start = Instant::now();
        match self.client.chat(&req.prompt.system, &req.prompt.user) {
            Ok(reply) => RuntimeReply {
                text: Some(reply.content),
                latency_s: Some(reply.latency_s),
                prompt_tokens: reply.prompt_tokens,
                completion_tokens: reply.completion_tokens,
                unavailable: None,
            },
            Err(e) => {
                log::warn!("runtime endpoint unavailable: {e}");
                RuntimeReply {
                    latency_s: Some(start.elapsed().as_secs_f64()),
                    unavailable: Some(e.to_string()),
                    ..RuntimeReply::default()
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_normalisation() {
        assert_eq!(completions_url("http://h/v1"), "http://h/v1/chat/completions");
        assert_eq!(completions_url("http://h/v1/"), "http://h/v1/chat/completions");
        assert_eq!(completions_url("http://h/v1/chat/completions"), "http://h/v1/chat/completions");
    }

    #[test]
    fn missing_env_is_reported() {
        let cfg = EndpointConfig {
            url_env: "WORLDLINE_TEST_SURELY_UNSET_URL".into(),
            ..EndpointConfig::default()
        };
        assert!(matches!(EndpointClient::from_env(&cfg), Err(EndpointError::MissingEnv(_))));
    }
}
