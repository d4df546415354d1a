//! HTTP-backed inference for real-model runs.
//!
//! Configuration comes from the environment — `DPM_REMOTE_URL`,
//! `DPM_REMOTE_KEY`, `DPM_REMOTE_MODEL` — and a missing variable is a
//! configuration error raised before any network traffic. Requests are sent
//! at temperature 0 with the run seed; the completion budget is derived from
//! the character budget at roughly three characters per token. Transport,
//! auth, and rate-limit failures surface as retriable errors carrying
//! backoff metadata; an oversized prompt is reported as a context-window
//! error rather than retried.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{Backend, BackendDescriptor, BackendError, BackendRequest, BackendResponse, CallCounter};

pub const URL_VAR: &str = "DPM_REMOTE_URL";
pub const KEY_VAR: &str = "DPM_REMOTE_KEY";
pub const MODEL_VAR: &str = "DPM_REMOTE_MODEL";

/// Ceiling on simultaneous outstanding HTTP requests.
const DEFAULT_MAX_IN_FLIGHT: usize = 4;

pub struct RemoteBackend {
    url: String,
    key: String,
    model: String,
    client: reqwest::blocking::Client,
    calls: CallCounter,
    gate: RequestGate,
}

impl RemoteBackend {
    pub fn from_env() -> Result<Self, BackendError> {
        let var = |name: &'static str| {
            std::env::var(name).map_err(|_| BackendError::MissingConfig(name))
        };
        Ok(RemoteBackend {
            url: var(URL_VAR)?,
            key: var(KEY_VAR)?,
            model: var(MODEL_VAR)?,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .map_err(|e| BackendError::Retriable {
                    reason: format!("http client construction failed: {e}"),
                    backoff_ms: 1000,
                })?,
            calls: CallCounter::default(),
            gate: RequestGate::new(DEFAULT_MAX_IN_FLIGHT),
        })
    }

    pub fn model(&self) -> &str {
        &self.model
    }
}

/// Completion token allowance for a character budget: one token covers about
/// three characters, rounded up.
pub fn max_tokens_for_budget(char_budget: usize) -> usize {
    char_budget.div_ceil(3)
}

impl Backend for RemoteBackend {
    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let _slot = self.gate.acquire();
        let started = Instant::now();
        let body = json!({
            "model": self.model,
            "max_tokens": max_tokens_for_budget(req.char_budget),
            "temperature": 0,
            "seed": req.seed,
            "messages": [{"role": "user", "content": req.prompt}],
        });
        let response = self
            .client
            .post(&self.url)
            .header("x-api-key", &self.key)
            .header("authorization", format!("Bearer {}", self.key))
            .header("content-type", "application/json")
            .json(&body)
            .send()
            .map_err(|e| BackendError::Retriable {
                reason: format!("transport failure: {e}"),
                backoff_ms: 1000,
            })?;

        let status = response.status();
        let payload: Value = match response.json() {
            Ok(v) => v,
            Err(e) if status.is_success() => {
                return Err(BackendError::Protocol(format!("non-JSON response: {e}")))
            }
            Err(_) => Value::Null,
        };

        if !status.is_success() {
            let message = payload
                .pointer("/error/message")
                .and_then(Value::as_str)
                .unwrap_or("")
                .to_string();
            let lowered = message.to_lowercase();
            if status.as_u16() == 400
                && (lowered.contains("context") || lowered.contains("too long") || lowered.contains("maximum"))
            {
                return Err(BackendError::ContextWindow {
                    prompt_chars: req.prompt.chars().count(),
                });
            }
            let backoff_ms = match status.as_u16() {
                429 => 2000,
                401 | 403 => 5000,
                _ => 1000,
            };
            return Err(BackendError::Retriable {
                reason: format!("status {status}: {message}"),
                backoff_ms,
            });
        }

        let text = extract_text(&payload)
            .ok_or_else(|| BackendError::Protocol("no completion text in response".to_string()))?;
        Ok(BackendResponse {
            input_chars: req.prompt.chars().count(),
            output_chars: text.chars().count(),
            text,
            latency: started.elapsed(),
            call_id: self.calls.next(),
        })
    }

    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: format!("remote:{}", self.model),
            deterministic: false,
            drift_epsilon: 0.0,
        }
    }
}

/// Pulls completion text out of the common response shapes.
fn extract_text(payload: &Value) -> Option<String> {
    if let Some(text) = payload.pointer("/content/0/text").and_then(Value::as_str) {
        return Some(text.to_string());
    }
    if let Some(text) = payload
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
    {
        return Some(text.to_string());
    }
    payload
        .get("completion")
        .or_else(|| payload.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
}

/// Counting gate bounding in-flight requests.
struct RequestGate {
    state: Mutex<usize>,
    signal: Condvar,
    limit: usize,
}

struct GateSlot<'a>(&'a RequestGate);

impl RequestGate {
    fn new(limit: usize) -> Self {
        RequestGate {
            state: Mutex::new(0),
            signal: Condvar::new(),
            limit,
        }
    }

    fn acquire(&self) -> GateSlot<'_> {
        let mut in_flight = self.state.lock().unwrap();
        while *in_flight >= self.limit {
            in_flight = self.signal.wait(in_flight).unwrap();
        }
        *in_flight += 1;
        GateSlot(self)
    }
}

impl Drop for GateSlot<'_> {
    fn drop(&mut self) {
        let mut in_flight = self.0.state.lock().unwrap();
        *in_flight -= 1;
        self.0.signal.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_credentials_fail_before_any_network_use() {
        // The test environment has no remote configuration set.
        std::env::remove_var(URL_VAR);
        std::env::remove_var(KEY_VAR);
        std::env::remove_var(MODEL_VAR);
        assert!(matches!(
            RemoteBackend::from_env(),
            Err(BackendError::MissingConfig(URL_VAR))
        ));
    }

    #[test]
    fn token_allowance_is_ceiling_of_thirds() {
        assert_eq!(max_tokens_for_budget(1338), 446);
        assert_eq!(max_tokens_for_budget(1000), 334);
        assert_eq!(max_tokens_for_budget(1), 1);
        assert_eq!(max_tokens_for_budget(3), 1);
        assert_eq!(max_tokens_for_budget(4), 2);
    }

    #[test]
    fn response_text_extraction_handles_common_shapes() {
        let anthropic = serde_json::json!({"content": [{"type": "text", "text": "hello"}]});
        let openai = serde_json::json!({"choices": [{"message": {"content": "hi"}}]});
        let bare = serde_json::json!({"completion": "yo"});
        assert_eq!(extract_text(&anthropic).unwrap(), "hello");
        assert_eq!(extract_text(&openai).unwrap(), "hi");
        assert_eq!(extract_text(&bare).unwrap(), "yo");
        assert!(extract_text(&serde_json::json!({"other": 1})).is_none());
    }

    #[test]
    fn request_gate_bounds_concurrency() {
        let gate = RequestGate::new(2);
        let a = gate.acquire();
        let b = gate.acquire();
        assert_eq!(*gate.state.lock().unwrap(), 2);
        drop(a);
        let c = gate.acquire();
        assert_eq!(*gate.state.lock().unwrap(), 2);
        drop(b);
        drop(c);
        assert_eq!(*gate.state.lock().unwrap(), 0);
    }
}
