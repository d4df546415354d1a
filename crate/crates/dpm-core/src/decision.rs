//! The decision stage: one backend call that turns a memory surface into an
//! APPROVE/DENY label with a rationale.
//!
//! Both pipelines end here with the same prompt shape, so label accuracy
//! differences between them trace back to the memory surface alone.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::audit::{call_with_audit, AuditLedger, CallError};
use crate::backends::{Backend, BackendRequest, Role};
use crate::projection::TaskSpec;
use crate::prompt::render_decision_prompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecisionLabel {
    #[serde(rename = "APPROVE")]
    Approve,
    #[serde(rename = "DENY")]
    Deny,
}

impl DecisionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionLabel::Approve => "APPROVE",
            DecisionLabel::Deny => "DENY",
        }
    }

    pub fn parse(text: &str) -> Option<DecisionLabel> {
        match text {
            "APPROVE" => Some(DecisionLabel::Approve),
            "DENY" => Some(DecisionLabel::Deny),
            _ => None,
        }
    }
}

impl fmt::Display for DecisionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DecisionError {
    #[error(transparent)]
    Call(#[from] CallError),
    #[error("decision output does not start with an APPROVE/DENY line: {first_line:?}")]
    MalformedLabel { first_line: String },
}

/// Parsed outcome of one decision call.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionOutput {
    pub label: DecisionLabel,
    /// Everything after the label line, typically a RATIONALE paragraph.
    pub rationale: String,
    /// The backend's raw completion.
    pub raw: String,
}

/// Runs the decision call over a memory surface.
///
/// The first output line must be exactly `APPROVE` or `DENY`; anything else
/// is a format error (label parsing tolerates trailing whitespace only).
pub fn decide(
    surface: &str,
    task: &TaskSpec,
    backend: &dyn Backend,
    ledger: &mut AuditLedger,
    seed: u64,
) -> Result<DecisionOutput, DecisionError> {
    let prompt = render_decision_prompt(
        &task.question,
        task.domain.as_str(),
        &task.provisions_universe,
        surface,
    );
    let request = BackendRequest {
        role: Role::Decision,
        prompt,
        // The decision reply is a label plus a short rationale; it is never
        // the bounded artifact, so give it fixed slack.
        char_budget: 2_000,
        seed,
        model_tag: backend.descriptor().name,
    };
    let resp = call_with_audit(backend, ledger, &request)?;
    parse_decision_text(&resp.text)
}

fn parse_decision_text(text: &str) -> Result<DecisionOutput, DecisionError> {
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("").trim_end();
    let label = DecisionLabel::parse(first).ok_or_else(|| DecisionError::MalformedLabel {
        first_line: first.to_string(),
    })?;
    let rationale = lines.collect::<Vec<_>>().join("\n");
    Ok(DecisionOutput {
        label,
        rationale,
        raw: text.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::CaptureMode;
    use crate::backends::ExtractiveBackend;
    use crate::projection::Domain;
    use crate::view::{ComplianceEntry, Entry, MemoryView};

    fn task() -> TaskSpec {
        TaskSpec {
            domain: Domain::ClaimsAdjudication,
            question: "Should the claim be paid?".to_string(),
            provisions_universe: vec!["CL-110".to_string()],
        }
    }

    fn surface(disqualified: bool) -> String {
        let mut facts = vec![Entry {
            text: "Claim filed for $9,400.00 in storm damage.".to_string(),
            citations: vec![3],
        }];
        if disqualified {
            facts.push(Entry {
                text: "DISQUALIFIER: policy lapsed before the loss date.".to_string(),
                citations: vec![11],
            });
        }
        MemoryView {
            facts,
            reasoning: vec![Entry {
                text: "ASSESSMENT: documentation is complete.".to_string(),
                citations: vec![5],
            }],
            compliance: vec![ComplianceEntry {
                provision_id: "CL-110".to_string(),
                text: "timely filing satisfied.".to_string(),
                citations: vec![2],
            }],
        }
        .render()
    }

    #[test]
    fn clean_surface_approves_with_cited_rationale() {
        let backend = ExtractiveBackend::new();
        let mut ledger = AuditLedger::new("r", CaptureMode::DigestOnly);
        let out = decide(&surface(false), &task(), &backend, &mut ledger, 5).unwrap();
        assert_eq!(out.label, DecisionLabel::Approve);
        assert!(out.rationale.contains("RATIONALE:"));
        assert_eq!(ledger.len(), 1);
        assert_eq!(ledger.surface_count("r").unwrap().decision, 1);
    }

    #[test]
    fn disqualifier_on_surface_denies() {
        let backend = ExtractiveBackend::new();
        let mut ledger = AuditLedger::new("r", CaptureMode::DigestOnly);
        let out = decide(&surface(true), &task(), &backend, &mut ledger, 5).unwrap();
        assert_eq!(out.label, DecisionLabel::Deny);
        assert!(out.rationale.contains("policy lapsed"));
    }

    #[test]
    fn malformed_label_line_is_an_error() {
        let err = parse_decision_text("MAYBE\nRATIONALE: unsure.").unwrap_err();
        assert!(matches!(
            err,
            DecisionError::MalformedLabel { first_line } if first_line == "MAYBE"
        ));
    }

    #[test]
    fn label_round_trips_through_serde() {
        let json = serde_json::to_string(&DecisionLabel::Approve).unwrap();
        assert_eq!(json, "\"APPROVE\"");
        let back: DecisionLabel = serde_json::from_str("\"DENY\"").unwrap();
        assert_eq!(back, DecisionLabel::Deny);
    }
}
