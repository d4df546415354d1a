//! Inference backends.
//!
//! A backend answers one prompt with one text completion. Three
//! implementations share the trait:
//!
//! | backend      | purpose                                                |
//! |--------------|--------------------------------------------------------|
//! | `extractive` | deterministic rule-based stand-in; the test oracle     |
//! | `noisy`      | wraps another backend, injecting seeded one-token drift|
//! | `remote`     | real model behind an HTTP endpoint                     |
//!
//! Backends are cheap to construct and every run (and every replay within a
//! study) owns a fresh instance, so call ids are a per-run namespace:
//! monotonically increasing from 1, assigned under `&self` via an atomic so
//! concurrent callers within a run stay linearizable.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::prompt::FramingError;

pub mod extractive;
pub mod noisy;
pub mod remote;

pub use extractive::ExtractiveBackend;
pub use noisy::NoisyBackend;
pub use remote::RemoteBackend;

/// Which pipeline stage issued a call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Projection,
    Consolidation,
    Decision,
}

/// One completion request.
#[derive(Debug, Clone)]
pub struct BackendRequest {
    pub role: Role,
    pub prompt: String,
    /// Character budget the response must respect.
    pub char_budget: usize,
    /// Run seed, forwarded to backends that accept one.
    pub seed: u64,
    /// Identity the caller expects to be answering; recorded for audit.
    pub model_tag: String,
}

/// One completion.
#[derive(Debug, Clone)]
pub struct BackendResponse {
    pub text: String,
    pub input_chars: usize,
    pub output_chars: usize,
    pub latency: Duration,
    /// 1-based, unique and increasing within the issuing backend instance.
    pub call_id: u64,
}

/// Static facts about a backend, recorded in run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub deterministic: bool,
    /// Probability of per-call drift injection; 0.0 when deterministic.
    pub drift_epsilon: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("prompt framing error: {0}")]
    Framing(#[from] FramingError),
    #[error("invalid backend parameter: {0}")]
    InvalidParameter(String),
    #[error("missing configuration: environment variable {0} is not set")]
    MissingConfig(&'static str),
    #[error("retriable backend failure ({reason}); suggested backoff {backoff_ms} ms")]
    Retriable { reason: String, backoff_ms: u64 },
    #[error("prompt of {prompt_chars} characters exceeds the remote context window")]
    ContextWindow { prompt_chars: usize },
    #[error("malformed remote response: {0}")]
    Protocol(String),
}

/// A completion provider. Implementations must be safe for concurrent calls;
/// all per-call state is derived from the request plus an atomic call id.
pub trait Backend: Send + Sync {
    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError>;
    fn descriptor(&self) -> BackendDescriptor;
    /// How many calls this instance has actually perturbed; 0 unless the
    /// backend injects drift.
    fn perturbed_calls(&self) -> u64 {
        0
    }
}

/// Shared call-id counter; starts at 1 for the first call.
#[derive(Debug, Default)]
pub(crate) struct CallCounter(AtomicU64);

impl CallCounter {
    pub(crate) fn next(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst) + 1
    }
}

/// Parsed form of a `--backend` selector.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Extractive,
    /// Extractive wrapped in seeded drift with the given epsilon.
    Noisy { epsilon: f64 },
    Remote,
}

impl BackendSpec {
    /// Parses `extractive`, `noisy:<epsilon>`, or `remote`.
    pub fn parse(s: &str) -> Result<Self, BackendError> {
        if s == "extractive" {
            return Ok(BackendSpec::Extractive);
        }
        if s == "remote" {
            return Ok(BackendSpec::Remote);
        }
        if let Some(eps) = s.strip_prefix("noisy:") {
            let epsilon: f64 = eps.parse().map_err(|_| {
                BackendError::InvalidParameter(format!("cannot parse epsilon from {eps:?}"))
            })?;
            noisy::validate_epsilon(epsilon)?;
            return Ok(BackendSpec::Noisy { epsilon });
        }
        Err(BackendError::InvalidParameter(format!(
            "unknown backend selector {s:?}; expected extractive, noisy:<epsilon>, or remote"
        )))
    }

    /// Builds a fresh backend instance. `rng_seed` keys drift injection;
    /// replay studies derive one seed per replay so drift streams are
    /// independent and reproducible.
    pub fn instantiate(&self, rng_seed: u64) -> Result<Box<dyn Backend>, BackendError> {
        match self {
            BackendSpec::Extractive => Ok(Box::new(ExtractiveBackend::new())),
            BackendSpec::Noisy { epsilon } => Ok(Box::new(NoisyBackend::new(
                ExtractiveBackend::new(),
                *epsilon,
                rng_seed,
            )?)),
            BackendSpec::Remote => Ok(Box::new(RemoteBackend::from_env()?)),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, BackendSpec::Extractive)
    }
}

impl std::fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendSpec::Extractive => write!(f, "extractive"),
            BackendSpec::Noisy { epsilon } => write!(f, "noisy:{epsilon}"),
            BackendSpec::Remote => write!(f, "remote"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_parsing() {
        assert_eq!(BackendSpec::parse("extractive").unwrap(), BackendSpec::Extractive);
        assert_eq!(
            BackendSpec::parse("noisy:0.05").unwrap(),
            BackendSpec::Noisy { epsilon: 0.05 }
        );
        assert_eq!(BackendSpec::parse("remote").unwrap(), BackendSpec::Remote);
        assert!(BackendSpec::parse("noisy:1.5").is_err());
        assert!(BackendSpec::parse("divination").is_err());
    }

    #[test]
    fn call_counter_is_one_based_and_monotonic() {
        let counter = CallCounter::default();
        assert_eq!(counter.next(), 1);
        assert_eq!(counter.next(), 2);
        assert_eq!(counter.next(), 3);
    }
}
