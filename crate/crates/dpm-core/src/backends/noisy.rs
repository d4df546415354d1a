//! Seeded drift injection around another backend.
//!
//! Models the small nondeterminism real inference stacks exhibit even at
//! temperature zero: with probability `epsilon`, one whitespace-delimited
//! token of the inner backend's output is replaced by a tagged variant.
//! Whether a given call is perturbed, and which token, is a pure function of
//! `(rng_seed, call_id)`, so a run is exactly reproducible under the same
//! seed while distinct seeds give independent drift streams.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Backend, BackendDescriptor, BackendError, BackendRequest, BackendResponse};

/// Suffix appended to the substituted token.
pub const DRIFT_TAG: &str = "~drift";

pub(crate) fn validate_epsilon(epsilon: f64) -> Result<(), BackendError> {
    if !(0.0..=1.0).contains(&epsilon) || epsilon.is_nan() {
        return Err(BackendError::InvalidParameter(format!(
            "epsilon must lie in [0, 1], got {epsilon}"
        )));
    }
    Ok(())
}

pub struct NoisyBackend<B> {
    inner: B,
    epsilon: f64,
    rng_seed: u64,
    perturbed: AtomicU64,
}

impl<B: Backend> NoisyBackend<B> {
    pub fn new(inner: B, epsilon: f64, rng_seed: u64) -> Result<Self, BackendError> {
        validate_epsilon(epsilon)?;
        Ok(NoisyBackend {
            inner,
            epsilon,
            rng_seed,
            perturbed: AtomicU64::new(0),
        })
    }

    /// RNG keyed by (seed, call id): platform-independent and stable.
    fn call_rng(&self, call_id: u64) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.rng_seed.to_le_bytes());
        hasher.update(call_id.to_le_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

impl<B: Backend> Backend for NoisyBackend<B> {
    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let mut resp = self.inner.complete(req)?;
        let mut rng = self.call_rng(resp.call_id);
        if rng.gen::<f64>() < self.epsilon {
            if let Some(text) = perturb_one_token(&resp.text, &mut rng) {
                resp.text = text;
                resp.output_chars = resp.text.chars().count();
                self.perturbed.fetch_add(1, Ordering::SeqCst);
            }
        }
        Ok(resp)
    }

    fn descriptor(&self) -> BackendDescriptor {
        let inner = self.inner.descriptor();
        BackendDescriptor {
            name: format!("noisy(eps={})+{}", self.epsilon, inner.name),
            deterministic: false,
            drift_epsilon: self.epsilon,
        }
    }

    fn perturbed_calls(&self) -> u64 {
        self.perturbed.load(Ordering::SeqCst)
    }
}

/// Replaces one pseudo-randomly chosen whitespace-delimited token with a
/// tagged variant, preserving all whitespace exactly. Returns None for
/// token-free text.
fn perturb_one_token(text: &str, rng: &mut ChaCha8Rng) -> Option<String> {
    // Byte offsets where each whitespace-delimited token ends.
    let mut token_ends: Vec<usize> = Vec::new();
    let mut in_token = false;
    for (idx, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if in_token {
                token_ends.push(idx);
                in_token = false;
            }
        } else {
            in_token = true;
        }
    }
    if in_token {
        token_ends.push(text.len());
    }
    if token_ends.is_empty() {
        return None;
    }
    let end = token_ends[rng.gen_range(0..token_ends.len())];
    let mut out = String::with_capacity(text.len() + DRIFT_TAG.len());
    out.push_str(&text[..end]);
    out.push_str(DRIFT_TAG);
    out.push_str(&text[end..]);
    Some(out)
}
