//! Paired comparison statistics for per-case metric deltas.
//!
//! The workhorse is a two-sided sign-flip permutation test on the mean
//! paired delta. At the evaluation's scale (ten cases) the full 2^n flip
//! space is enumerable, so p-values are exact counts — no Monte Carlo noise
//! in the headline numbers. Larger samples fall back to seeded sampling with
//! add-one smoothing. Effect sizes use the arcsine-difference transform for
//! proportions, and uncertainty is a seeded paired percentile bootstrap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Resample count used by the CLI and experiments when none is given.
pub const DEFAULT_RESAMPLES: u32 = 10_000;

/// Largest n for which the permutation test enumerates all 2^n sign flips.
pub const EXHAUSTIVE_LIMIT: usize = 12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("paired sample lengths differ: {a} ids vs {b} values")]
    LengthMismatch { a: usize, b: usize },
    #[error("paired tests need at least two pairs, got {n}")]
    TooFew { n: usize },
    #[error("duplicate case id in paired sample: {id}")]
    DuplicateCaseId { id: String },
    #[error("non-finite value in paired sample for case {id}")]
    NonFinite { id: String },
    #[error("proportion out of range for effect size: {value}")]
    OutOfRange { value: f64 },
}

/// Per-case paired observations (condition A vs condition B), keyed by case
/// so misaligned inputs are caught at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    case_ids: Vec<String>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PairedSample {
    pub fn new(case_ids: Vec<String>, a: Vec<f64>, b: Vec<f64>) -> Result<Self, StatsError> {
        if case_ids.len() != a.len() || a.len() != b.len() {
            return Err(StatsError::LengthMismatch {
                a: case_ids.len(),
                b: a.len().max(b.len()),
            });
        }
        if case_ids.len() < 2 {
            return Err(StatsError::TooFew { n: case_ids.len() });
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, id) in case_ids.iter().enumerate() {
            if !seen.insert(id.as_str()) {
                return Err(StatsError::DuplicateCaseId { id: id.clone() });
            }
            if !a[i].is_finite() || !b[i].is_finite() {
                return Err(StatsError::NonFinite { id: id.clone() });
            }
        }
        Ok(Self { case_ids, a, b })
    }

    pub fn n(&self) -> usize {
        self.case_ids.len()
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(x, y)| x - y).collect()
    }

    pub fn mean_a(&self) -> f64 {
        mean(&self.a)
    }

    pub fn mean_b(&self) -> f64 {
        mean(&self.b)
    }

    pub fn mean_delta(&self) -> f64 {
        self.mean_a() - self.mean_b()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn stream_rng(label: &[u8], seed: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(label);
    hasher.update(seed.to_le_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Two-sided sign-flip permutation p-value for the mean paired delta.
///
/// For n ≤ [`EXHAUSTIVE_LIMIT`] every sign pattern is enumerated and the
/// p-value is the exact fraction of patterns at least as extreme as the
/// observed mean (a relative epsilon absorbs float jitter on exact ties).
/// Larger samples use `resamples` random flips with add-one smoothing, so
/// the reported p can never be zero.
pub fn paired_permutation(sample: &PairedSample, resamples: u32, seed: u64) -> f64 {
    let deltas = sample.deltas();
    let n = deltas.len();
    let observed = mean(&deltas).abs();
    let threshold = observed - observed.abs() * 1e-12;
    if n <= EXHAUSTIVE_LIMIT {
        let total = 1u64 << n;
        let mut at_least = 0u64;
        for pattern in 0..total {
            let sum: f64 = deltas
                .iter()
                .enumerate()
                .map(|(i, d)| if pattern >> i & 1 == 1 { -d } else { *d })
                .sum();
            if (sum / n as f64).abs() >= threshold {
                at_least += 1;
            }
        }
        at_least as f64 / total as f64
    } else {
        let mut rng = stream_rng(b"paired-permutation", seed);
        let mut at_least = 0u64;
        for _ in 0..resamples {
            let sum: f64 = deltas
                .iter()
                .map(|d| if rng.gen::<bool>() { -d } else { *d })
                .sum();
            if (sum / n as f64).abs() >= threshold {
                at_least += 1;
            }
        }
        (1 + at_least) as f64 / (resamples as u64 + 1) as f64
    }
}

/// Cohen's h effect size for two proportions: the difference of their
/// arcsine-square-root transforms.
pub fn cohens_h(p1: f64, p2: f64) -> Result<f64, StatsError> {
    for p in [p1, p2] {
        if !(0.0..=1.0).contains(&p) {
            return Err(StatsError::OutOfRange { value: p });
        }
    }
    Ok(2.0 * p1.sqrt().asin() - 2.0 * p2.sqrt().asin())
}

/// Seeded paired percentile bootstrap for the mean delta: cases are
/// resampled with replacement, and the 2.5th/97.5th percentiles of the
/// resampled means (linear interpolation) bound the interval.
pub fn paired_bootstrap_ci(sample: &PairedSample, resamples: u32, seed: u64) -> (f64, f64) {
    let deltas = sample.deltas();
    let n = deltas.len();
    let mut rng = stream_rng(b"paired-bootstrap", seed);
    let mut means = Vec::with_capacity(resamples as usize);
    for _ in 0..resamples {
        let sum: f64 = (0..n).map(|_| deltas[rng.gen_range(0..n)]).sum();
        means.push(sum / n as f64);
    }
    means.sort_by(|x, y| x.partial_cmp(y).expect("finite means"));
    (percentile(&means, 0.025), percentile(&means, 0.975))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Everything a results table row needs about one paired comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedStatsResult {
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_delta: f64,
    pub p_value: f64,
    pub cohens_h: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    /// Sign patterns actually evaluated: 2^n on the exhaustive path,
    /// otherwise the requested resample count.
    pub resamples: u64,
    pub seed: u64,
}

/// Runs the full paired analysis. Means must be proportions (the metrics
/// here all live in the unit interval) so the effect size is well-defined.
pub fn paired_stats(
    sample: &PairedSample,
    resamples: u32,
    seed: u64,
) -> Result<PairedStatsResult, StatsError> {
    let mean_a = sample.mean_a();
    let mean_b = sample.mean_b();
    let h = cohens_h(mean_a, mean_b)?;
    let p_value = paired_permutation(sample, resamples, seed);
    let (ci_low, ci_high) = paired_bootstrap_ci(sample, resamples, seed);
    let used = if sample.n() <= EXHAUSTIVE_LIMIT {
        1u64 << sample.n()
    } else {
        resamples as u64
    };
    Ok(PairedStatsResult {
        mean_a,
        mean_b,
        mean_delta: sample.mean_delta(),
        p_value,
        cohens_h: h,
        ci_low,
        ci_high,
        n: sample.n(),
        resamples: used,
        seed,
    })
}
