//! Replay studies: rebuild the decision-time memory surface repeatedly from
//! the same event log and measure how much it moves.
//!
//! A replay is surface-only — the projection or consolidation chain runs
//! again, the decision call does not. Each replay gets a freshly
//! instantiated backend (seeded from `base_seed + replay_index`) so no
//! state can leak between replays: under a deterministic backend every
//! surface must be byte-identical, and under a drifting one the divergence
//! rate is governed by how many calls the condition re-executes.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audit::{AuditLedger, CaptureMode};
use crate::backends::BackendSpec;
use crate::casegen::CaseBundle;
use crate::hashing::sha256_hex;
use crate::projection::{project, Budget};
use crate::summ::run_trajectory;
use crate::Condition;

/// Surfaces are compared on this many leading characters; divergence later
/// than that still shows up in the hash, but the edit metric stays cheap.
pub const PREFIX_CHARS: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("replay studies need at least two replays, got {n}")]
    InsufficientReplays { n: u32 },
    #[error("backend could not be instantiated: {0}")]
    Backend(#[from] crate::backends::BackendError),
    #[error("reports are not comparable: {left} vs {right}")]
    NotComparable { left: String, right: String },
    #[error("csv write failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Content hash of a memory surface.
pub fn surface_hash(surface: &str) -> String {
    sha256_hex(surface)
}

/// Levenshtein distance between the first [`PREFIX_CHARS`] characters of
/// each string, normalized by the longer prefix length. Two empty prefixes
/// are identical, hence zero.
pub fn normalized_prefix_edit_distance(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().take(PREFIX_CHARS).collect();
    let b: Vec<char> = b.chars().take(PREFIX_CHARS).collect();
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let subst = prev[j] + usize::from(ca != cb);
            cur[j + 1] = subst.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] as f64 / a.len().max(b.len()) as f64
}

/// One replay's observable outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub hash: String,
    pub chars: usize,
    pub call_count: u64,
}

/// Aggregate stability measurements for one (case, condition, budget) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub case_id: String,
    pub condition: Condition,
    pub budget_label: String,
    pub backend: String,
    pub base_seed: u64,
    pub n_replays: u32,
    pub unique_hashes: usize,
    /// Mean normalized prefix edit distance over all unordered replay pairs.
    pub mean_edit: f64,
    pub max_edit: f64,
    pub mean_chars: f64,
    pub mean_perturbed_calls: f64,
    /// Set when some replays failed; the completed ones are still reported.
    pub partial: bool,
    pub per_replay: Vec<ReplayRecord>,
}

/// Runs `n_replays` independent surface rebuilds and aggregates their
/// stability statistics. Backend failures mark the report partial rather
/// than discarding the completed replays.
pub fn replay_study(
    bundle: &CaseBundle,
    condition: Condition,
    budget: Budget,
    spec: &BackendSpec,
    n_replays: u32,
    base_seed: u64,
) -> Result<ReplayReport, ReplayError> {
    if n_replays < 2 {
        return Err(ReplayError::InsufficientReplays { n: n_replays });
    }
    let mut surfaces: Vec<String> = Vec::new();
    let mut records: Vec<ReplayRecord> = Vec::new();
    let mut perturbed_total = 0u64;
    let mut partial = false;

    for r in 0..n_replays {
        let seed = base_seed + r as u64;
        let backend = spec.instantiate(seed)?;
        let run_id = format!("{}__{}__replay{r}", bundle.case_id, condition.as_str());
        let mut ledger = AuditLedger::new(&run_id, CaptureMode::DigestOnly);
        let outcome = match condition {
            Condition::Dpm => {
                let mut log = bundle.log.clone();
                log.seal();
                project(&log, &bundle.task, budget, backend.as_ref(), &mut ledger, seed)
                    .map(|p| p.surface)
                    .map_err(|_| ())
            }
            Condition::Summ => {
                run_trajectory(&bundle.log, budget, backend.as_ref(), &mut ledger, seed, false)
                    .map(|t| t.final_summary.text)
                    .map_err(|_| ())
            }
        };
        ledger.close();
        match outcome {
            Ok(surface) => {
                let calls = ledger
                    .surface_count(&run_id)
                    .map(|c| c.total as u64)
                    .unwrap_or_default();
                records.push(ReplayRecord {
                    hash: surface_hash(&surface),
                    chars: surface.chars().count(),
                    call_count: calls,
                });
                perturbed_total += backend.perturbed_calls();
                surfaces.push(surface);
            }
            Err(()) => partial = true,
        }
    }

    let completed = surfaces.len();
    let unique: BTreeSet<&str> = records.iter().map(|r| r.hash.as_str()).collect();
    let mut edit_sum = 0.0;
    let mut edit_max: f64 = 0.0;
    let mut pairs = 0u64;
    for i in 0..completed {
        for j in i + 1..completed {
            let d = normalized_prefix_edit_distance(&surfaces[i], &surfaces[j]);
            edit_sum += d;
            edit_max = edit_max.max(d);
            pairs += 1;
        }
    }
    Ok(ReplayReport {
        case_id: bundle.case_id.clone(),
        condition,
        budget_label: budget.label.as_str().to_string(),
        backend: spec.to_string(),
        base_seed,
        n_replays,
        unique_hashes: unique.len(),
        mean_edit: if pairs > 0 { edit_sum / pairs as f64 } else { 0.0 },
        max_edit: edit_max,
        mean_chars: if completed > 0 {
            records.iter().map(|r| r.chars).sum::<usize>() as f64 / completed as f64
        } else {
            0.0
        },
        mean_perturbed_calls: if completed > 0 {
            perturbed_total as f64 / completed as f64
        } else {
            0.0
        },
        partial: partial || completed < n_replays as usize,
        per_replay: records,
    })
}

/// Fraction of completed replays whose surface differs from a reference
/// hash — the drift rate against a deterministic baseline.
pub fn drift_fraction(report: &ReplayReport, reference_hash: &str) -> f64 {
    if report.per_replay.is_empty() {
        return 0.0;
    }
    let drifted = report
        .per_replay
        .iter()
        .filter(|r| r.hash != reference_hash)
        .count();
    drifted as f64 / report.per_replay.len() as f64
}

/// Guards cross-condition comparisons: reports must come from the same
/// backend configuration and budget to be read side by side.
pub fn assert_comparable(left: &ReplayReport, right: &ReplayReport) -> Result<(), ReplayError> {
    if left.backend != right.backend || left.budget_label != right.budget_label {
        return Err(ReplayError::NotComparable {
            left: format!("{} at {}", left.backend, left.budget_label),
            right: format!("{} at {}", right.backend, right.budget_label),
        });
    }
    Ok(())
}

/// Writes reports as the replay-stability results table.
pub fn write_replay_csv(reports: &[ReplayReport], path: &Path) -> Result<(), ReplayError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "case",
        "condition",
        "n",
        "unique_hashes",
        "mean_edit",
        "max_edit",
        "mean_chars",
    ])?;
    for report in reports {
        writer.write_record([
            report.case_id.as_str(),
            report.condition.as_str(),
            &report.n_replays.to_string(),
            &report.unique_hashes.to_string(),
            &format!("{:.4}", report.mean_edit),
            &format!("{:.4}", report.max_edit),
            &format!("{:.1}", report.mean_chars),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
