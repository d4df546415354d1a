//! Memory views: the structured, budgeted surface handed to a decision.
//!
//! A view has three sections in fixed order — FACTS, REASONING, COMPLIANCE
//! NOTES — each a list of entries with `[seq]` citations back into the event
//! log. The rendered text form is the unit of account everywhere: budgets
//! are enforced on it, replay hashes are taken over it, and scoring reads it.
//!
//! Render and parse are inverses on canonical text. A section with no
//! entries renders as the single placeholder line `- UNKNOWN`, which parse
//! maps back to an empty section.

use serde::{Deserialize, Serialize};

pub const FACTS_HEADER: &str = "FACTS";
pub const REASONING_HEADER: &str = "REASONING";
pub const COMPLIANCE_HEADER: &str = "COMPLIANCE NOTES";
pub const UNKNOWN_ENTRY: &str = "UNKNOWN";
/// Appended as a final line when a surface had to be hard-trimmed.
pub const TRIMMED_SENTINEL: &str = "[TRIMMED]";

/// One cited line in FACTS or REASONING.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub text: String,
    /// Event sequence numbers backing this entry.
    pub citations: Vec<u64>,
}

impl Entry {
    pub fn new(text: impl Into<String>, citations: Vec<u64>) -> Self {
        Entry {
            text: text.into(),
            citations,
        }
    }
}

/// One cited compliance note, tagged with the provision it addresses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceEntry {
    pub provision_id: String,
    pub text: String,
    pub citations: Vec<u64>,
}

/// A three-section memory view.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryView {
    pub facts: Vec<Entry>,
    pub reasoning: Vec<Entry>,
    pub compliance: Vec<ComplianceEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum ViewFormatError {
    #[error("missing section header {0:?}")]
    MissingSection(&'static str),
    #[error("section headers out of order: {0}")]
    SectionOrder(String),
    #[error("unexpected text before the FACTS header")]
    Preamble,
}

impl MemoryView {
    pub fn is_empty(&self) -> bool {
        self.facts.is_empty() && self.reasoning.is_empty() && self.compliance.is_empty()
    }

    /// Canonical text form. Entries render as `- text [c1] [c2]`; compliance
    /// entries carry their provision tag as `- (PROV-ID) text [c]`. Empty
    /// sections render the `- UNKNOWN` placeholder. No trailing newline.
    pub fn render(&self) -> String {
        let mut lines: Vec<String> = Vec::new();
        lines.push(FACTS_HEADER.to_string());
        if self.facts.is_empty() {
            lines.push(format!("- {UNKNOWN_ENTRY}"));
        }
        for e in &self.facts {
            lines.push(render_entry(&e.text, &e.citations));
        }
        lines.push(REASONING_HEADER.to_string());
        if self.reasoning.is_empty() {
            lines.push(format!("- {UNKNOWN_ENTRY}"));
        }
        for e in &self.reasoning {
            lines.push(render_entry(&e.text, &e.citations));
        }
        lines.push(COMPLIANCE_HEADER.to_string());
        if self.compliance.is_empty() {
            lines.push(format!("- {UNKNOWN_ENTRY}"));
        }
        for e in &self.compliance {
            let tagged = format!("({}) {}", e.provision_id, e.text);
            lines.push(render_entry(&tagged, &e.citations));
        }
        lines.join("\n")
    }

    /// Rendered length in characters; what budgets are charged against.
    pub fn rendered_chars(&self) -> usize {
        self.render().chars().count()
    }
}

fn render_entry(text: &str, citations: &[u64]) -> String {
    let mut line = format!("- {text}");
    for c in citations {
        line.push_str(&format!(" [{c}]"));
    }
    line
}

/// Splits `- text [c1] [c2]` into text and citations. Lenient about the
/// leading bullet so that slightly mangled lines still parse as entries.
fn parse_entry_line(line: &str) -> (String, Vec<u64>) {
    let mut body = line.strip_prefix("- ").unwrap_or(line).to_string();
    let mut citations: Vec<u64> = Vec::new();
    loop {
        let trimmed = body.trim_end();
        if !trimmed.ends_with(']') {
            break;
        }
        let Some(open) = trimmed.rfind('[') else { break };
        let inner = &trimmed[open + 1..trimmed.len() - 1];
        let Ok(seq) = inner.parse::<u64>() else { break };
        citations.push(seq);
        body = trimmed[..open].trim_end().to_string();
    }
    citations.reverse();
    (body, citations)
}

/// Splits `(PROV-ID) text` into provision id and text; id is empty when the
/// tag is absent.
fn split_provision_tag(text: &str) -> (String, String) {
    if let Some(rest) = text.strip_prefix('(') {
        if let Some(close) = rest.find(')') {
            let id = &rest[..close];
            if !id.is_empty() && !id.contains(' ') {
                return (id.to_string(), rest[close + 1..].trim_start().to_string());
            }
        }
    }
    (String::new(), text.to_string())
}

/// Strict parse of a rendered view. Enforces headers present, in order, with
/// nothing before FACTS; within sections it accepts any non-header line as an
/// entry. `- UNKNOWN` placeholder lines map back to empty sections.
pub fn parse_view(text: &str) -> Result<MemoryView, ViewFormatError> {
    let lines: Vec<&str> = text.lines().collect();
    let pos = |header: &str| lines.iter().position(|l| *l == header);
    let f = pos(FACTS_HEADER).ok_or(ViewFormatError::MissingSection(FACTS_HEADER))?;
    let r = pos(REASONING_HEADER).ok_or(ViewFormatError::MissingSection(REASONING_HEADER))?;
    let c = pos(COMPLIANCE_HEADER).ok_or(ViewFormatError::MissingSection(COMPLIANCE_HEADER))?;
    if !(f < r && r < c) {
        return Err(ViewFormatError::SectionOrder(format!(
            "FACTS at line {}, REASONING at line {}, COMPLIANCE NOTES at line {}",
            f + 1,
            r + 1,
            c + 1
        )));
    }
    if lines[..f].iter().any(|l| !l.trim().is_empty()) {
        return Err(ViewFormatError::Preamble);
    }

    let mut view = MemoryView::default();
    let entry_lines = |range: &[&str]| -> Vec<(String, Vec<u64>)> {
        range
            .iter()
            .filter(|l| !l.trim().is_empty() && **l != TRIMMED_SENTINEL)
            .map(|l| parse_entry_line(l))
            .filter(|(text, cits)| !(text == UNKNOWN_ENTRY && cits.is_empty()))
            .collect()
    };
    for (text, citations) in entry_lines(&lines[f + 1..r]) {
        view.facts.push(Entry { text, citations });
    }
    for (text, citations) in entry_lines(&lines[r + 1..c]) {
        view.reasoning.push(Entry { text, citations });
    }
    for (text, citations) in entry_lines(&lines[c + 1..]) {
        let (provision_id, body) = split_provision_tag(&text);
        view.compliance.push(ComplianceEntry {
            provision_id,
            text: body,
            citations,
        });
    }
    Ok(view)
}

/// Total parse used where structure may have drifted (running summaries fed
/// back through consolidation). Lines before any header land in FACTS;
/// unrecognized headers are just entries.
pub fn parse_view_lenient(text: &str) -> MemoryView {
    #[derive(PartialEq)]
    enum Sec {
        F,
        R,
        C,
    }
    let mut sec = Sec::F;
    let mut view = MemoryView::default();
    for line in text.lines() {
        match line {
            FACTS_HEADER => sec = Sec::F,
            REASONING_HEADER => sec = Sec::R,
            COMPLIANCE_HEADER => sec = Sec::C,
            _ => {
                if line.trim().is_empty() || line == TRIMMED_SENTINEL {
                    continue;
                }
                let (text, citations) = parse_entry_line(line);
                if text == UNKNOWN_ENTRY && citations.is_empty() {
                    continue;
                }
                match sec {
                    Sec::F => view.facts.push(Entry { text, citations }),
                    Sec::R => view.reasoning.push(Entry { text, citations }),
                    Sec::C => {
                        let (provision_id, body) = split_provision_tag(&text);
                        view.compliance.push(ComplianceEntry {
                            provision_id,
                            text: body,
                            citations,
                        });
                    }
                }
            }
        }
    }
    view
}

/// The three section bodies of a rendered surface, for section-scoped
/// scoring. Tolerant of malformed text: missing sections come back empty.
pub fn section_texts(surface: &str) -> (String, String, String) {
    let view = match parse_view(surface) {
        Ok(v) => v,
        Err(_) => parse_view_lenient(surface),
    };
    let join = |entries: &[Entry]| {
        entries
            .iter()
            .map(|e| e.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    };
    let compliance = view
        .compliance
        .iter()
        .map(|e| format!("({}) {}", e.provision_id, e.text))
        .collect::<Vec<_>>()
        .join("\n");
    (join(&view.facts), join(&view.reasoning), compliance)
}
