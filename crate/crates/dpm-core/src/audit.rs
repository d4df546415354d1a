//! Tamper-evident audit ledgers.
//!
//! Every backend call in a run appends exactly one record to that run's
//! ledger — enforced structurally: pipeline stages issue calls only through
//! [`call_with_audit`]. Records hold digests of the exact prompt and
//! completion bytes; full payload capture is an explicit opt-in because the
//! consolidation baseline re-sends its entire summary every step and full
//! capture makes that cost visible (and large).
//!
//! Exports are JSONL with a trailing manifest line carrying a rolling digest
//! chained over every record line, so modifying, dropping, or reordering any
//! single record invalidates the archive.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::backends::{Backend, BackendError, BackendRequest, BackendResponse, Role};
use crate::hashing::sha256_hex;

/// Seed value of the rolling digest chain.
const ROLLING_DIGEST_INIT: &str = "dpm-audit-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureMode {
    /// Record digests and sizes only (default).
    DigestOnly,
    /// Additionally retain the full prompt and completion payloads.
    Full,
}

/// One backend call, as the ledger remembers it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub run_id: String,
    pub call_id: u64,
    pub role: Role,
    pub backend: String,
    pub model_tag: String,
    pub input_digest: String,
    pub output_digest: String,
    pub input_chars: usize,
    pub output_chars: usize,
    pub latency_us: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_text: Option<String>,
}

/// Per-role and total call counts for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub projection: usize,
    pub consolidation: usize,
    pub decision: usize,
    pub total: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("ledger for run {0} is closed; no further records are accepted")]
    Closed(String),
    #[error("call id {found} does not advance the ledger (last was {last})")]
    NonMonotonicCallId { last: u64, found: u64 },
    #[error("unknown run id {requested:?}; this ledger records run {actual:?}")]
    UnknownRun { requested: String, actual: String },
    #[error("export line {line} fails verification: {reason}")]
    TamperDetected { line: usize, reason: String },
    #[error("export has no trailing manifest line")]
    MissingManifest,
    #[error("malformed export line {line}: {reason}")]
    MalformedExport { line: usize, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Append-only per-run call ledger.
#[derive(Debug, Clone)]
pub struct AuditLedger {
    run_id: String,
    capture: CaptureMode,
    records: Vec<AuditRecord>,
    closed: bool,
}

impl AuditLedger {
    pub fn new(run_id: impl Into<String>, capture: CaptureMode) -> Self {
        AuditLedger {
            run_id: run_id.into(),
            capture,
            records: Vec::new(),
            closed: false,
        }
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn capture_mode(&self) -> CaptureMode {
        self.capture
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends the record of one request/response exchange.
    pub fn record_call(
        &mut self,
        req: &BackendRequest,
        resp: &BackendResponse,
        backend_name: &str,
    ) -> Result<(), AuditError> {
        if self.closed {
            return Err(AuditError::Closed(self.run_id.clone()));
        }
        if let Some(last) = self.records.last() {
            if resp.call_id <= last.call_id {
                return Err(AuditError::NonMonotonicCallId {
                    last: last.call_id,
                    found: resp.call_id,
                });
            }
        }
        let full = self.capture == CaptureMode::Full;
        self.records.push(AuditRecord {
            run_id: self.run_id.clone(),
            call_id: resp.call_id,
            role: req.role,
            backend: backend_name.to_string(),
            model_tag: req.model_tag.clone(),
            input_digest: sha256_hex(&req.prompt),
            output_digest: sha256_hex(&resp.text),
            input_chars: resp.input_chars,
            output_chars: resp.output_chars,
            latency_us: resp.latency.as_micros() as u64,
            timestamp: Utc::now(),
            input_text: full.then(|| req.prompt.clone()),
            output_text: full.then(|| resp.text.clone()),
        });
        Ok(())
    }

    /// Closes the ledger; subsequent writes are rejected.
    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Call counts by role for the named run.
    pub fn surface_count(&self, run_id: &str) -> Result<CallCounts, AuditError> {
        self.check_run(run_id)?;
        let count = |role: Role| self.records.iter().filter(|r| r.role == role).count();
        Ok(CallCounts {
            projection: count(Role::Projection),
            consolidation: count(Role::Consolidation),
            decision: count(Role::Decision),
            total: self.records.len(),
        })
    }

    /// Total persisted payload bytes. Digest-only ledgers persist no
    /// payloads, so their footprint is zero by definition.
    pub fn storage_footprint(&self, run_id: &str) -> Result<u64, AuditError> {
        self.check_run(run_id)?;
        Ok(self
            .records
            .iter()
            .map(|r| {
                r.input_text.as_ref().map_or(0, |t| t.len() as u64)
                    + r.output_text.as_ref().map_or(0, |t| t.len() as u64)
            })
            .sum())
    }

    fn check_run(&self, run_id: &str) -> Result<(), AuditError> {
        if run_id != self.run_id {
            return Err(AuditError::UnknownRun {
                requested: run_id.to_string(),
                actual: self.run_id.clone(),
            });
        }
        Ok(())
    }

    /// Serialized export lines: one JSON record per line plus the trailing
    /// manifest carrying the rolling digest.
    pub fn export_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = self
            .records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes"))
            .collect();
        let rolling = rolling_digest(&lines);
        let manifest = ExportManifest {
            run_id: self.run_id.clone(),
            records: self.records.len(),
            rolling_digest: rolling,
        };
        lines.push(serde_json::to_string(&manifest).expect("manifest serializes"));
        lines
    }

    /// Writes the export archive to `path`.
    pub fn export(&self, path: &Path) -> Result<(), AuditError> {
        let io_err = |source| AuditError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = Vec::new();
        for line in self.export_lines() {
            writeln!(out, "{line}").map_err(io_err)?;
        }
        fs::write(path, out).map_err(io_err)
    }
}

/// Trailing line of an export archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub run_id: String,
    pub records: usize,
    pub rolling_digest: String,
}

/// Digest chained over record lines: any single-line change, drop, or
/// reorder changes the result.
fn rolling_digest(lines: &[String]) -> String {
    let mut rolling = sha256_hex(ROLLING_DIGEST_INIT);
    for line in lines {
        rolling = sha256_hex(&format!("{rolling}{}", sha256_hex(line)));
    }
    rolling
}

/// Re-reads an export archive, reverifying the rolling digest and record
/// count. Returns the parsed records and manifest on success.
pub fn verify_export(path: &Path) -> Result<(Vec<AuditRecord>, ExportManifest), AuditError> {
    let text = fs::read_to_string(path).map_err(|source| AuditError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let lines: Vec<&str> = text.lines().collect();
    let (manifest_line, record_lines) = lines.split_last().ok_or(AuditError::MissingManifest)?;
    let manifest: ExportManifest =
        serde_json::from_str(manifest_line).map_err(|_| AuditError::MissingManifest)?;

    let owned: Vec<String> = record_lines.iter().map(|s| s.to_string()).collect();
    let recomputed = rolling_digest(&owned);
    if recomputed != manifest.rolling_digest {
        return Err(AuditError::TamperDetected {
            line: record_lines.len() + 1,
            reason: "rolling digest mismatch".to_string(),
        });
    }
    if manifest.records != record_lines.len() {
        return Err(AuditError::TamperDetected {
            line: record_lines.len() + 1,
            reason: format!(
                "manifest declares {} records, archive holds {}",
                manifest.records,
                record_lines.len()
            ),
        });
    }
    let mut records = Vec::with_capacity(record_lines.len());
    for (idx, line) in record_lines.iter().enumerate() {
        let record: AuditRecord =
            serde_json::from_str(line).map_err(|e| AuditError::MalformedExport {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        records.push(record);
    }
    Ok((records, manifest))
}

#[derive(Debug, thiserror::Error)]
pub enum CallError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

/// The one gateway for issuing backend calls: completes the request and
/// appends exactly one ledger record for it.
pub fn call_with_audit(
    backend: &dyn Backend,
    ledger: &mut AuditLedger,
    req: &BackendRequest,
) -> Result<BackendResponse, CallError> {
    let resp = backend.complete(req)?;
    ledger.record_call(req, &resp, &backend.descriptor().name)?;
    Ok(resp)
}
