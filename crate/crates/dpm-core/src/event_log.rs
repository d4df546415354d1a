//! Append-only event logs.
//!
//! A log is the immutable record of one case for one tenant. Events are only
//! ever appended; nothing rewrites or deletes history. Each event carries a
//! SHA-256 digest of its content, and the log exposes a chain digest (SHA-256
//! over the concatenated per-event digests in sequence order) so that any
//! reordering, edit, or truncation of the stored file is detectable.
//! Timestamps are recorded for audit display but deliberately excluded from
//! the chain digest: re-serializing a log must never change its identity.
//!
//! Persistence is JSONL, one event per line, conventionally named
//! `<tenant>__<case>.events.jsonl`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::hashing::sha256_hex;

/// What produced an event. All kinds are treated uniformly by projection and
/// consolidation; the distinction exists for audit display and generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    DocumentChunk,
    ToolOutput,
    UserMessage,
    Inference,
}

/// One immutable entry in a case history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    /// 1-based position in the log; contiguous by construction.
    pub seq: u64,
    #[serde(rename = "tenant")]
    pub tenant_id: String,
    #[serde(rename = "case")]
    pub case_id: String,
    pub kind: EventKind,
    #[serde(rename = "ts")]
    pub timestamp: DateTime<Utc>,
    /// UTF-8 payload; non-empty by construction.
    pub content: String,
    /// SHA-256 of `content`, lowercase hex.
    #[serde(rename = "sha256")]
    pub content_digest: String,
}

#[derive(Debug, thiserror::Error)]
pub enum EventLogError {
    #[error("cannot append an event with empty content")]
    EmptyContent,
    #[error("log for {tenant}/{case} is sealed; no further appends are accepted")]
    Sealed { tenant: String, case: String },
    #[error("event {seq}: stored digest {stored} does not match recomputed digest {actual}")]
    DigestMismatch {
        seq: u64,
        stored: String,
        actual: String,
    },
    #[error("line {line}: malformed event record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: expected seq {expected}, found {found}")]
    NonContiguousSeq {
        line: usize,
        expected: u64,
        found: u64,
    },
    #[error("line {line}: event belongs to {found_tenant}/{found_case}, log is {tenant}/{case}")]
    ForeignEvent {
        line: usize,
        tenant: String,
        case: String,
        found_tenant: String,
        found_case: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// An append-only, hash-chained sequence of events for one tenant and case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventLog {
    tenant_id: String,
    case_id: String,
    events: Vec<Event>,
    sealed: bool,
}

impl EventLog {
    pub fn new(tenant_id: impl Into<String>, case_id: impl Into<String>) -> Self {
        EventLog {
            tenant_id: tenant_id.into(),
            case_id: case_id.into(),
            events: Vec::new(),
            sealed: false,
        }
    }

    pub fn tenant_id(&self) -> &str {
        &self.tenant_id
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    /// Appends one event with the current wall-clock timestamp.
    pub fn append(&mut self, kind: EventKind, content: &str) -> Result<u64, EventLogError> {
        self.append_at(kind, content, Utc::now())
    }

    /// Appends one event with an explicit timestamp. Generators use this so
    /// that regeneration from a seed is byte-identical.
    pub fn append_at(
        &mut self,
        kind: EventKind,
        content: &str,
        timestamp: DateTime<Utc>,
    ) -> Result<u64, EventLogError> {
        if self.sealed {
            return Err(EventLogError::Sealed {
                tenant: self.tenant_id.clone(),
                case: self.case_id.clone(),
            });
        }
        if content.is_empty() {
            return Err(EventLogError::EmptyContent);
        }
        let seq = self.events.len() as u64 + 1;
        self.events.push(Event {
            seq,
            tenant_id: self.tenant_id.clone(),
            case_id: self.case_id.clone(),
            kind,
            timestamp,
            content: content.to_string(),
            content_digest: sha256_hex(content),
        });
        Ok(seq)
    }

    /// Marks the log closed for writes. Sealing happens at decision time;
    /// a sealed log still serves reads and hashes.
    pub fn seal(&mut self) {
        self.sealed = true;
    }

    /// SHA-256 over the concatenation of all per-event content digests in
    /// sequence order. Empty log hashes to the digest of the empty string.
    /// Timestamps do not participate, so storage round-trips preserve it.
    pub fn chain_digest(&self) -> String {
        let mut joined = String::with_capacity(self.events.len() * 64);
        for event in &self.events {
            joined.push_str(&event.content_digest);
        }
        sha256_hex(&joined)
    }

    /// Total content size in characters across all events.
    pub fn total_chars(&self) -> usize {
        self.events.iter().map(|e| e.content.chars().count()).sum()
    }

    /// Conventional file name for a stored log.
    pub fn default_filename(tenant_id: &str, case_id: &str) -> String {
        format!("{tenant_id}__{case_id}.events.jsonl")
    }

    /// Writes the log as JSONL, one event per line. Timestamps serialize as
    /// RFC 3339 with second precision.
    pub fn store(&self, path: &Path) -> Result<(), EventLogError> {
        let io_err = |source| EventLogError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = Vec::new();
        for event in &self.events {
            let mut value = serde_json::to_value(event).expect("event serializes");
            // Normalize the timestamp rendering so stored bytes are stable.
            value["ts"] = serde_json::Value::String(
                event.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            );
            writeln!(out, "{value}").map_err(io_err)?;
        }
        fs::write(path, out).map_err(io_err)
    }

    /// Reads a JSONL log back, re-verifying every content digest and the
    /// sequence numbering. Errors name the offending line. An empty file
    /// loads as an empty log whose identity comes from the file name
    /// convention `<tenant>__<case>.events.jsonl`.
    pub fn load(path: &Path) -> Result<EventLog, EventLogError> {
        let io_err = |source| EventLogError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = fs::File::open(path).map_err(io_err)?;
        let reader = BufReader::new(file);

        let mut log: Option<EventLog> = None;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let event: Event =
                serde_json::from_str(&line).map_err(|e| EventLogError::MalformedLine {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            let actual = sha256_hex(&event.content);
            if actual != event.content_digest {
                return Err(EventLogError::DigestMismatch {
                    seq: event.seq,
                    stored: event.content_digest,
                    actual,
                });
            }
            let log = log.get_or_insert_with(|| {
                EventLog::new(event.tenant_id.clone(), event.case_id.clone())
            });
            if event.tenant_id != log.tenant_id || event.case_id != log.case_id {
                return Err(EventLogError::ForeignEvent {
                    line: line_no,
                    tenant: log.tenant_id.clone(),
                    case: log.case_id.clone(),
                    found_tenant: event.tenant_id,
                    found_case: event.case_id,
                });
            }
            let expected = log.events.len() as u64 + 1;
            if event.seq != expected {
                return Err(EventLogError::NonContiguousSeq {
                    line: line_no,
                    expected,
                    found: event.seq,
                });
            }
            log.events.push(event);
        }

        Ok(log.unwrap_or_else(|| {
            let (tenant, case) = identity_from_filename(path).unwrap_or_default();
            EventLog::new(tenant, case)
        }))
    }
}

/// Parses `<tenant>__<case>.events.jsonl` back into its identity parts.
fn identity_from_filename(path: &Path) -> Option<(String, String)> {
    let name = path.file_name()?.to_str()?;
    let stem = name.strip_suffix(".events.jsonl")?;
    let (tenant, case) = stem.split_once("__")?;
    Some((tenant.to_string(), case.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::EMPTY_SHA256;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn ts(seconds: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_766_000_000 + seconds, 0).unwrap()
    }

    #[test]
    fn first_append_gets_seq_one_and_content_digest() {
        let mut log = EventLog::new("acme", "case-1");
        let seq = log.append(EventKind::DocumentChunk, "hello").unwrap();
        assert_eq!(seq, 1);
        let event = &log.events()[0];
        assert_eq!(event.content_digest, sha256_hex("hello"));
    }

    #[test]
    fn identical_content_twice_distinct_seq_same_digest() {
        let mut log = EventLog::new("acme", "case-1");
        let a = log.append(EventKind::ToolOutput, "same bytes").unwrap();
        let b = log.append(EventKind::ToolOutput, "same bytes").unwrap();
        assert_eq!((a, b), (1, 2));
        assert_eq!(log.events()[0].content_digest, log.events()[1].content_digest);
    }

    #[test]
    fn empty_content_is_rejected() {
        let mut log = EventLog::new("acme", "case-1");
        assert!(matches!(
            log.append(EventKind::UserMessage, ""),
            Err(EventLogError::EmptyContent)
        ));
    }

    #[test]
    fn sealed_log_rejects_appends_but_still_reads() {
        let mut log = EventLog::new("acme", "case-1");
        log.append(EventKind::DocumentChunk, "before seal").unwrap();
        log.seal();
        assert!(matches!(
            log.append(EventKind::DocumentChunk, "after seal"),
            Err(EventLogError::Sealed { .. })
        ));
        assert_eq!(log.len(), 1);
        assert_eq!(log.chain_digest(), log.chain_digest());
    }

    #[test]
    fn empty_log_chain_digest_is_empty_string_digest() {
        let log = EventLog::new("acme", "case-1");
        assert_eq!(log.chain_digest(), EMPTY_SHA256);
    }

    #[test]
    fn chain_digest_ignores_timestamps() {
        let mut a = EventLog::new("acme", "case-1");
        let mut b = EventLog::new("acme", "case-1");
        a.append_at(EventKind::DocumentChunk, "x", ts(0)).unwrap();
        b.append_at(EventKind::DocumentChunk, "x", ts(3600)).unwrap();
        assert_eq!(a.chain_digest(), b.chain_digest());
    }

    #[test]
    fn store_load_round_trip_preserves_chain_digest() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = EventLog::new("acme", "case-7");
        for i in 0..40 {
            log.append_at(
                EventKind::DocumentChunk,
                &format!("event body {i} with payload text"),
                ts(i),
            )
            .unwrap();
        }
        let path = dir
            .path()
            .join(EventLog::default_filename(log.tenant_id(), log.case_id()));
        log.store(&path).unwrap();
        let reloaded = EventLog::load(&path).unwrap();
        assert_eq!(reloaded.chain_digest(), log.chain_digest());
        assert_eq!(reloaded.events(), log.events());
        // A second store of the reloaded log is byte-identical.
        let path2 = dir.path().join("copy.events.jsonl");
        reloaded.store(&path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn tampered_event_content_fails_integrity_check() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = EventLog::new("acme", "case-9");
        log.append_at(EventKind::DocumentChunk, "original amount $500", ts(0))
            .unwrap();
        let path = dir.path().join("t.events.jsonl");
        log.store(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap().replace("$500", "$900");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            EventLog::load(&path),
            Err(EventLogError::DigestMismatch { seq: 1, .. })
        ));
    }

    #[test]
    fn malformed_line_error_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = EventLog::new("acme", "case-9");
        log.append_at(EventKind::DocumentChunk, "fine", ts(0)).unwrap();
        let path = dir.path().join("m.events.jsonl");
        log.store(&path).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{not json\n");
        fs::write(&path, text).unwrap();
        match EventLog::load(&path) {
            Err(EventLogError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed-line error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_loads_as_empty_log_with_filename_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("acme__case-11.events.jsonl");
        fs::write(&path, "").unwrap();
        let log = EventLog::load(&path).unwrap();
        assert!(log.is_empty());
        assert_eq!(log.tenant_id(), "acme");
        assert_eq!(log.case_id(), "case-11");
        assert_eq!(log.chain_digest(), EMPTY_SHA256);
    }

    #[test]
    fn reordered_lines_fail_sequence_check() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = EventLog::new("acme", "case-2");
        log.append_at(EventKind::DocumentChunk, "first", ts(0)).unwrap();
        log.append_at(EventKind::DocumentChunk, "second", ts(1)).unwrap();
        let path = dir.path().join("r.events.jsonl");
        log.store(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(0, 1);
        fs::write(&path, lines.join("\n")).unwrap();
        assert!(matches!(
            EventLog::load(&path),
            Err(EventLogError::NonContiguousSeq { line: 1, .. })
        ));
    }

    proptest! {
        /// Appending never disturbs existing events: any earlier prefix stays
        /// byte-identical, seq numbers stay contiguous, and the chain digest
        /// of the prefix is unchanged.
        #[test]
        fn appends_preserve_prefix(contents in proptest::collection::vec("[a-z0-9 ]{1,40}", 1..24)) {
            let mut log = EventLog::new("acme", "prop-case");
            let mut prefix_digests: Vec<String> = Vec::new();
            for (i, content) in contents.iter().enumerate() {
                let before: Vec<Event> = log.events().to_vec();
                prefix_digests.push(log.chain_digest());
                let seq = log.append_at(EventKind::DocumentChunk, content, ts(i as i64)).unwrap();
                prop_assert_eq!(seq as usize, i + 1);
                prop_assert_eq!(&log.events()[..i], &before[..]);
            }
            // Recomputing any prefix digest from scratch agrees with what was
            // observed while the log grew.
            for (i, expected) in prefix_digests.iter().enumerate() {
                let mut replayed = EventLog::new("acme", "prop-case");
                for (j, content) in contents[..i].iter().enumerate() {
                    replayed.append_at(EventKind::DocumentChunk, content, ts(j as i64)).unwrap();
                }
                prop_assert_eq!(&replayed.chain_digest(), expected);
            }
        }
    }
}
