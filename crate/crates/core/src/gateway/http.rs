use std::thread;
use std::time::Duration;

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatProvider, ModelRequest, ProviderReply};
use crate::error::{Error, Result};

pub const API_KEY_VAR: &str = "VERIFACT_API_KEY";
pub const ENDPOINT_VAR: &str = "VERIFACT_ENDPOINT";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";

/// Capped exponential backoff. Attempt `k` (0-based) waits
/// `min(initial * 2^k, max)`, or the server's Retry-After if that is shorter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub initial_backoff: Duration,
    #[serde(with = "millis")]
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.min(31));
        self.initial_backoff
            .saturating_mul(factor)
            .min(self.max_backoff)
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for HttpSettings {
    fn default() -> Self {
        HttpSettings {
            endpoint: None,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }
}

/// OpenAI-compatible chat-completions and embeddings client.
pub struct HttpProvider {
    endpoint: String,
    api_key: String,
    client: Client,
    retry: RetryPolicy,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("endpoint", &self.endpoint)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Done(Value),
    Retry(String, Option<Duration>),
}

impl HttpProvider {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: impl Into<String>,
        settings: &HttpSettings,
    ) -> Result<Self> {
        let client = Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| Error::config(format!("http client: {e}")))?;
        Ok(HttpProvider {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            client,
            retry: settings.retry,
        })
    }

    /// Credential from `VERIFACT_API_KEY`; endpoint from `VERIFACT_ENDPOINT`,
    /// then `settings.endpoint`, then the OpenAI default.
    pub fn from_env(settings: &HttpSettings) -> Result<Self> {
        let key = std::env::var(API_KEY_VAR)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| Error::config(format!("{API_KEY_VAR} is not set")))?;
        let endpoint = std::env::var(ENDPOINT_VAR)
            .ok()
            .filter(|e| !e.trim().is_empty())
            .or_else(|| settings.endpoint.clone())
            .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string());
        Self::new(endpoint, key, settings)
    }

    fn attempt(&self, url: &str, body: &Value) -> Result<Attempt> {
        let resp: Response = match self
            .client
            .post(url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
        {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retry(e.to_string(), None)),
        };
        let status = resp.status();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            let wait = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Ok(Attempt::Retry(format!("HTTP {status}"), wait));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Error::Provider(format!("HTTP {status}: {}", text.trim())));
        }
        match resp.json::<Value>() {
            Ok(v) => Ok(Attempt::Done(v)),
            Err(e) => Ok(Attempt::Retry(format!("reading body: {e}"), None)),
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}/{path}", self.endpoint);
        let mut last = String::new();
        for attempt in 0..=self.retry.max_retries {
            match self.attempt(&url, body)? {
                Attempt::Done(v) => return Ok(v),
                Attempt::Retry(why, hint) => {
                    last = why;
                    if attempt == self.retry.max_retries {
                        break;
                    }
                    let wait = self.retry.backoff(attempt);
                    let wait = hint.map_or(wait, |h| h.min(wait));
                    log::warn!("{url}: {last}; retry {} in {:?}", attempt + 1, wait);
                    thread::sleep(wait);
                }
            }
        }
        Err(Error::Transport(format!(
            "{url}: giving up after {} attempts: {last}",
            self.retry.max_retries + 1
        )))
    }
}

fn usage(v: &Value, field: &str) -> u64 {
    v.pointer(&format!("/usage/{field}"))
        .and_then(Value::as_u64)
        .unwrap_or(0)
}

impl ChatProvider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &ModelRequest) -> Result<ProviderReply> {
        let body = json!({
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt.text}],
            "temperature": request.temperature,
        });
        let v = self.post("chat/completions", &body)?;
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .unwrap_or("");
        if text.trim().is_empty() {
            return Err(Error::Provider(format!(
                "empty completion for model {}",
                request.model_id
            )));
        }
        Ok(ProviderReply {
            text: text.to_string(),
            input_tokens: usage(&v, "prompt_tokens"),
            output_tokens: usage(&v, "completion_tokens"),
        })
    }

    fn embed(&self, text: &str, model_id: &str) -> Result<Vec<f64>> {
        let v = self.post("embeddings", &json!({"model": model_id, "input": text}))?;
        let values = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Provider("embedding response has no data[0].embedding".into()))?;
        values
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| Error::Provider("non-numeric embedding entry".into()))
            })
            .collect()
    }
}
