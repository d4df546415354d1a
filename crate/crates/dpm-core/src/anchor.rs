//! Anchor grammar and line classification.
//!
//! An "anchor" is a token that must survive memory compression verbatim:
//! currency amounts, ISO dates, structured identifiers, and percentages.
//! The grammar lives here, in one place, because three parties must agree on
//! it exactly: the case generator that plants anchors, the extractive backend
//! that harvests them, and the calibration checks that predict what survives
//! a given budget.
//!
//! Classification is line-oriented. A line of event content is exactly one of:
//! a disqualifier (starts with `DISQUALIFIER:`), a compliance note (starts
//! with `PROVISION <id>:`), an assessment (starts with `ASSESSMENT:`), an
//! anchor-bearing fact line (contains at least one anchor), or distractor
//! prose. Precedence follows that order, so a disqualifier line is never
//! double-counted as a plain fact even though it contains an anchor.

use once_cell::sync::Lazy;
use regex::Regex;

/// Currency amounts like `$412,500` or `$1,204,750.25`.
pub static CURRENCY: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\$\d{1,3}(?:,\d{3})*(?:\.\d{2})?").unwrap());

/// ISO calendar dates like `2025-11-14`.
pub static ISO_DATE: Lazy<Regex> = Lazy::new(|| Regex::new(r"\b\d{4}-\d{2}-\d{2}\b").unwrap());

/// Structured identifiers like `CRD-58812`.
pub static IDENTIFIER: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\b[A-Z]{2,4}-\d{3,6}\b").unwrap());

/// Percentage / limit figures like `43%` or `12.5%`.
pub static PERCENT: Lazy<Regex> = Lazy::new(|| Regex::new(r"\b\d{1,3}(?:\.\d{1,2})?%").unwrap());

/// Leading marker for a provision line: `PROVISION <id>: <clause>`.
static PROVISION_LINE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^PROVISION\s+(\S+?):?\s").unwrap());

pub const DISQUALIFIER_MARK: &str = "DISQUALIFIER:";
pub const ASSESSMENT_MARK: &str = "ASSESSMENT:";

/// All anchor tokens in a piece of text, in match order, without overlap
/// between classes (a date never matches the identifier pattern and vice
/// versa, so a simple concatenation of scans is stable).
pub fn scan_anchors(text: &str) -> Vec<String> {
    let mut found = Vec::new();
    for re in [&*CURRENCY, &*ISO_DATE, &*IDENTIFIER, &*PERCENT] {
        for m in re.find_iter(text) {
            found.push(m.as_str().to_string());
        }
    }
    found
}

/// What a single content line means to the extraction rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LineClass {
    /// `DISQUALIFIER: ...` — a fact that forces denial; highest keep priority.
    Disqualifier,
    /// `PROVISION <id>: ...` — a compliance note naming a provision.
    Provision { provision_id: String },
    /// `ASSESSMENT: ...` — a reasoning step.
    Assessment,
    /// Prose containing at least one anchor token.
    AnchorFact { anchors: Vec<String> },
    /// Everything else.
    Distractor,
}

/// Classifies one trimmed line of event content.
pub fn classify_line(line: &str) -> LineClass {
    if line.starts_with(DISQUALIFIER_MARK) {
        return LineClass::Disqualifier;
    }
    if let Some(caps) = PROVISION_LINE.captures(line) {
        return LineClass::Provision {
            provision_id: caps[1].to_string(),
        };
    }
    if line.starts_with(ASSESSMENT_MARK) {
        return LineClass::Assessment;
    }
    let anchors = scan_anchors(line);
    if !anchors.is_empty() {
        return LineClass::AnchorFact { anchors };
    }
    LineClass::Distractor
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn currency_matches_with_commas_and_cents() {
        let found = scan_anchors("escrow of $1,204,750.25 plus $980 fee");
        assert_eq!(found, vec!["$1,204,750.25", "$980"]);
    }

    #[test]
    fn anchor_classes_do_not_overlap() {
        // An identifier is not a date; a date is not an identifier; a percent
        // is not currency.
        assert_eq!(scan_anchors("CRD-58812"), vec!["CRD-58812"]);
        assert_eq!(scan_anchors("2025-11-14"), vec!["2025-11-14"]);
        assert_eq!(scan_anchors("43%"), vec!["43%"]);
        assert_eq!(scan_anchors("ratio held at 43% on 2025-11-14").len(), 2);
    }

    #[test]
    fn classification_precedence() {
        assert_eq!(
            classify_line("DISQUALIFIER: CRD-58812 bureau alert."),
            LineClass::Disqualifier
        );
        assert_eq!(
            classify_line("PROVISION ECOA-1002: adverse action notice required."),
            LineClass::Provision {
                provision_id: "ECOA-1002".to_string()
            }
        );
        assert_eq!(
            classify_line("ASSESSMENT: repayment capacity within ceiling."),
            LineClass::Assessment
        );
        assert_eq!(
            classify_line("Recorded $412,500 in the file."),
            LineClass::AnchorFact {
                anchors: vec!["$412,500".to_string()]
            }
        );
        assert_eq!(
            classify_line("The processor filed routine correspondence."),
            LineClass::Distractor
        );
    }

    #[test]
    fn provision_id_is_captured_without_trailing_colon() {
        match classify_line("PROVISION FCRA-615: reinvestigation window applies.") {
            LineClass::Provision { provision_id } => assert_eq!(provision_id, "FCRA-615"),
            other => panic!("unexpected class {other:?}"),
        }
    }
}
