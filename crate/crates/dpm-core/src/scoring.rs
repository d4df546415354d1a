//! Decision-support fidelity metrics, scored against a case's ground truth.
//!
//! Three of the four metrics are recall fractions over required items; the
//! fourth is binary decision accuracy. Anchor recovery demands verbatim
//! (whitespace-normalized) presence anywhere in the surface, while reasoning
//! and compliance coverage are scoped to their sections and matched
//! case-insensitively — a rationale that mentions "Debt Service Coverage"
//! counts, but an amount with digits transposed never does.

use serde::{Deserialize, Serialize};

use crate::casegen::CaseGroundTruth;
use crate::decision::DecisionLabel;
use crate::view::section_texts;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("score is undefined: required {what} list is empty")]
    Undefined { what: &'static str },
}

/// Collapses every whitespace run to a single space and trims the ends, so
/// line wrapping cannot break a verbatim match.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn recall<T: AsRef<str>>(
    haystack: &str,
    required: &[T],
    what: &'static str,
    case_insensitive: bool,
) -> Result<f64, ScoreError> {
    if required.is_empty() {
        return Err(ScoreError::Undefined { what });
    }
    let hay = if case_insensitive {
        normalize_ws(haystack).to_lowercase()
    } else {
        normalize_ws(haystack)
    };
    let hits = required
        .iter()
        .filter(|item| {
            let needle = if case_insensitive {
                normalize_ws(item.as_ref()).to_lowercase()
            } else {
                normalize_ws(item.as_ref())
            };
            hay.contains(&needle)
        })
        .count();
    Ok(hits as f64 / required.len() as f64)
}

/// Fact recovery: the fraction of required anchors present verbatim
/// (whitespace-normalized) anywhere in the memory surface.
pub fn score_frp(surface: &str, required_anchors: &[String]) -> Result<f64, ScoreError> {
    recall(surface, required_anchors, "anchor", false)
}

/// Reasoning coverage: the fraction of required key phrases mentioned in the
/// surface's REASONING section, matched case-insensitively.
pub fn score_rcs(surface: &str, required_keys: &[String]) -> Result<f64, ScoreError> {
    let (_, reasoning, _) = section_texts(surface);
    recall(&reasoning, required_keys, "reasoning key", true)
}

/// Compliance retention: the fraction of required provision identifiers
/// cited in the COMPLIANCE NOTES section, matched case-insensitively.
pub fn score_crr(surface: &str, required_provisions: &[String]) -> Result<f64, ScoreError> {
    let (_, _, compliance) = section_texts(surface);
    recall(&compliance, required_provisions, "provision", true)
}

/// Decision accuracy: one when the emitted label matches ground truth.
pub fn score_eda(decided: DecisionLabel, truth: DecisionLabel) -> f64 {
    if decided == truth {
        1.0
    } else {
        0.0
    }
}

/// All four metrics for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub frp: f64,
    pub rcs: f64,
    pub eda: f64,
    pub crr: f64,
}

/// Scores a finished run: the decision-time surface plus the emitted label,
/// against the case's ground truth.
pub fn score_run(
    surface: &str,
    decided: DecisionLabel,
    truth: &CaseGroundTruth,
) -> Result<ScoreVector, ScoreError> {
    Ok(ScoreVector {
        frp: score_frp(surface, &truth.required_anchors)?,
        rcs: score_rcs(surface, &truth.required_reasoning_keys)?,
        eda: score_eda(decided, truth.label),
        crr: score_crr(surface, &truth.required_provisions)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::view::{ComplianceEntry, Entry, MemoryView};
    use proptest::prelude::*;

    fn anchors(n: usize) -> Vec<String> {
        // Equal-length identifiers can only match by being equal, so the
        // set is substring-free by construction.
        (0..n).map(|i| format!("REF-{}", 100_200 + i * 7)).collect()
    }

    #[test]
    fn partial_recovery_counts_only_verbatim_anchors() {
        // Fifteen required anchors; the surface carries seven, one of which
        // is paraphrased (digits grouped differently) and must not count.
        let required: Vec<String> = (0..15).map(|i| format!("APP-{:06}", 100_100 + i)).collect();
        let mut facts: Vec<Entry> = required[..6]
            .iter()
            .map(|a| Entry::new(&format!("Reference number {a}."), vec![1]))
            .collect();
        facts.push(Entry::new("Reference number APP 100106.", vec![2]));
        let view = MemoryView {
            facts,
            ..Default::default()
        };
        let frp = score_frp(&view.render(), &required).unwrap();
        assert!((frp - 0.4).abs() < 1e-12, "got {frp}");
    }

    #[test]
    fn whitespace_differences_do_not_defeat_recovery() {
        let required = vec!["income stability review".to_string()];
        let surface = "FACTS\n- income   stability\n  review [3]\nREASONING\n- UNKNOWN\nCOMPLIANCE NOTES\n- UNKNOWN";
        assert_eq!(score_frp(surface, &required).unwrap(), 1.0);
    }

    #[test]
    fn reasoning_coverage_is_scoped_to_its_section() {
        let view = MemoryView {
            facts: vec![Entry::new("collateral adequacy noted", vec![1])],
            reasoning: vec![Entry::new("ASSESSMENT: Income Stability holds", vec![2])],
            ..Default::default()
        };
        let keys = vec!["income stability".to_string(), "collateral adequacy".to_string()];
        // Only the key inside REASONING counts; the one in FACTS does not.
        assert_eq!(score_rcs(&view.render(), &keys).unwrap(), 0.5);
    }

    #[test]
    fn compliance_retention_matches_ids_case_insensitively() {
        let view = MemoryView {
            compliance: vec![ComplianceEntry {
                provision_id: "lq-201".to_string(),
                text: "income verification is mandatory".to_string(),
                citations: vec![4],
            }],
            ..Default::default()
        };
        let provisions = vec!["LQ-201".to_string(), "LQ-304".to_string()];
        assert_eq!(score_crr(&view.render(), &provisions).unwrap(), 0.5);
    }

    #[test]
    fn empty_required_lists_are_undefined_not_perfect() {
        assert_eq!(
            score_frp("anything", &[]),
            Err(ScoreError::Undefined { what: "anchor" })
        );
        assert_eq!(
            score_rcs("FACTS\nREASONING\nCOMPLIANCE NOTES", &[]),
            Err(ScoreError::Undefined { what: "reasoning key" })
        );
        assert_eq!(
            score_crr("FACTS\nREASONING\nCOMPLIANCE NOTES", &[]),
            Err(ScoreError::Undefined { what: "provision" })
        );
    }

    #[test]
    fn decision_accuracy_is_binary() {
        assert_eq!(score_eda(DecisionLabel::Deny, DecisionLabel::Deny), 1.0);
        assert_eq!(score_eda(DecisionLabel::Approve, DecisionLabel::Deny), 0.0);
    }

    proptest! {
        #[test]
        fn scores_stay_in_unit_interval(present in 0usize..=8, total in 1usize..=8) {
            let required = anchors(total);
            let surface = required[..present.min(total)].join(" and ");
            let frp = score_frp(&surface, &required).unwrap();
            prop_assert!((0.0..=1.0).contains(&frp));
            prop_assert!((frp - present.min(total) as f64 / total as f64).abs() < 1e-12);
        }

        #[test]
        fn adding_surface_text_never_lowers_recovery(present in 0usize..=6, extra in "[a-z ]{0,40}") {
            let required = anchors(6);
            let base = required[..present].join(" ");
            let grown = format!("{base} {extra}");
            let before = score_frp(&base, &required).unwrap();
            let after = score_frp(&grown, &required).unwrap();
            prop_assert!(after >= before);
        }
    }
}
