//! Rule-based deterministic backend.
//!
//! This backend makes the whole workbench testable without a model in the
//! loop: it implements each role as a fixed extraction procedure over the
//! prompt, so every behavior downstream of it has a computable expected
//! value. Replays against it must be byte-identical.
//!
//! Role behaviors:
//!
//! * **projection** — classify every event line (see [`crate::anchor`]),
//!   keep disqualifiers, anchor facts, assessments, and provision notes with
//!   `[seq]` citations, and fit the rendered view to the character budget by
//!   dropping whole entries lowest-priority-first (compliance, then
//!   reasoning, then plain facts, then disqualifiers).
//! * **consolidation** — parse the prior summary leniently, append the new
//!   event's extracted entries plus a clipped gist of its lead line, and fit
//!   the budget by dropping whole entries from the rendered tail. The gist
//!   carryover is what makes incremental summaries pay for distractors; the
//!   tail rule is what makes consolidation order-sensitive.
//! * **decision** — `DENY` iff the surface contains an entry flagged
//!   `DISQUALIFIER:`, else `APPROVE`, plus a rationale citing anchors.

use std::time::Instant;

use crate::anchor::{classify_line, scan_anchors, LineClass, DISQUALIFIER_MARK};
use crate::prompt;
use crate::view::{ComplianceEntry, Entry, MemoryView};

use super::{Backend, BackendDescriptor, BackendError, BackendRequest, BackendResponse, CallCounter, Role};

/// Gist lines carried into a running summary are clipped to this many
/// characters (at a word boundary) — the fixed "compression" the stand-in
/// summarizer applies to prose it cannot rank.
pub const GIST_CLIP_CHARS: usize = 24;

pub const EXTRACTIVE_MODEL_TAG: &str = "extractive-v1";

#[derive(Debug, Default)]
pub struct ExtractiveBackend {
    calls: CallCounter,
}

impl ExtractiveBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Backend for ExtractiveBackend {
    fn complete(&self, req: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let started = Instant::now();
        let text = match req.role {
            Role::Projection => project_text(&req.prompt, req.char_budget)?,
            Role::Consolidation => consolidate_text(&req.prompt)?,
            Role::Decision => decide_text(&req.prompt)?,
        };
        Ok(BackendResponse {
            input_chars: req.prompt.chars().count(),
            output_chars: text.chars().count(),
            text,
            latency: started.elapsed(),
            call_id: self.calls.next(),
        })
    }

    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: EXTRACTIVE_MODEL_TAG.to_string(),
            deterministic: true,
            drift_epsilon: 0.0,
        }
    }
}

/// Entry keep-priority for projection truncation; higher survives longer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Priority {
    Compliance = 0,
    Reasoning = 1,
    Fact = 2,
    Disqualifier = 3,
}

/// A classified event line bound for the view.
struct Extracted {
    priority: Priority,
    entry: Entry,
    provision_id: Option<String>,
}

/// Classifies one event's content into view entries, in line order.
/// `with_gist` additionally carries a clipped copy of the lead line when that
/// line is distractor prose (consolidation behavior).
fn extract_event_entries(seq: u64, content: &str, with_gist: bool) -> Vec<Extracted> {
    let mut out = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match classify_line(line) {
            LineClass::Disqualifier => out.push(Extracted {
                priority: Priority::Disqualifier,
                entry: Entry::new(line, vec![seq]),
                provision_id: None,
            }),
            LineClass::Provision { provision_id } => out.push(Extracted {
                priority: Priority::Compliance,
                entry: Entry::new(line, vec![seq]),
                provision_id: Some(provision_id),
            }),
            LineClass::Assessment => out.push(Extracted {
                priority: Priority::Reasoning,
                entry: Entry::new(line, vec![seq]),
                provision_id: None,
            }),
            LineClass::AnchorFact { .. } => out.push(Extracted {
                priority: Priority::Fact,
                entry: Entry::new(line, vec![seq]),
                provision_id: None,
            }),
            LineClass::Distractor => {
                if with_gist && idx == 0 {
                    out.push(Extracted {
                        priority: Priority::Fact,
                        entry: Entry::new(clip_gist(line), vec![seq]),
                        provision_id: None,
                    });
                }
            }
        }
    }
    out
}

/// First `GIST_CLIP_CHARS` characters of a line, backed off to a word
/// boundary when one exists.
fn clip_gist(line: &str) -> String {
    if line.chars().count() <= GIST_CLIP_CHARS {
        return line.to_string();
    }
    let clipped: String = line.chars().take(GIST_CLIP_CHARS).collect();
    match clipped.rfind(' ') {
        Some(pos) if pos > 0 => clipped[..pos].to_string(),
        _ => clipped,
    }
}

/// View assembly shared by projection and consolidation: entries tagged with
/// priority, fitted to a budget by a caller-chosen drop rule.
struct Assembly {
    facts: Vec<(Entry, Priority)>,
    reasoning: Vec<Entry>,
    compliance: Vec<ComplianceEntry>,
}

impl Assembly {
    fn new() -> Self {
        Assembly {
            facts: Vec::new(),
            reasoning: Vec::new(),
            compliance: Vec::new(),
        }
    }

    fn push(&mut self, item: Extracted) {
        match item.priority {
            Priority::Reasoning => self.reasoning.push(item.entry),
            Priority::Compliance => self.compliance.push(ComplianceEntry {
                provision_id: item.provision_id.unwrap_or_default(),
                text: item.entry.text,
                citations: item.entry.citations,
            }),
            _ => self.facts.push((item.entry, item.priority)),
        }
    }

    fn view(&self) -> MemoryView {
        MemoryView {
            facts: self.facts.iter().map(|(e, _)| e.clone()).collect(),
            reasoning: self.reasoning.clone(),
            compliance: self.compliance.clone(),
        }
    }

    /// Drops the entry with the lowest keep-priority, newest first within a
    /// priority class. Returns false when nothing is left to drop.
    fn drop_lowest_priority(&mut self) -> bool {
        if self.compliance.pop().is_some() {
            return true;
        }
        if self.reasoning.pop().is_some() {
            return true;
        }
        // Plain facts before disqualifiers, newest first.
        if let Some(pos) = self
            .facts
            .iter()
            .rposition(|(_, p)| *p == Priority::Fact)
        {
            self.facts.remove(pos);
            return true;
        }
        self.facts.pop().is_some()
    }

    /// Drops the last entry in render order (compliance tail, then reasoning
    /// tail, then facts tail). Returns false when empty.
    fn drop_render_tail(&mut self) -> bool {
        self.compliance.pop().is_some()
            || self.reasoning.pop().is_some()
            || self.facts.pop().is_some()
    }

    /// Shrinks until the rendered view fits `budget` characters, using the
    /// given drop rule.
    fn fit(&mut self, budget: usize, drop: fn(&mut Assembly) -> bool) -> MemoryView {
        loop {
            let view = self.view();
            if view.rendered_chars() <= budget || !drop(self) {
                return view;
            }
        }
    }
}

fn project_text(prompt: &str, char_budget: usize) -> Result<String, BackendError> {
    let events = prompt::parse_projection_events(prompt)?;
    let mut assembly = Assembly::new();
    for (seq, content) in &events {
        for item in extract_event_entries(*seq, content, false) {
            assembly.push(item);
        }
    }
    let view = assembly.fit(char_budget, Assembly::drop_lowest_priority);
    Ok(view.render())
}

fn consolidate_text(prompt: &str) -> Result<String, BackendError> {
    let budget = prompt::parse_budget_line(prompt)?;
    let (prior, (seq, content)) = prompt::parse_consolidation_parts(prompt)?;
    let prior_view = crate::view::parse_view_lenient(&prior);

    let mut assembly = Assembly::new();
    for entry in prior_view.facts {
        assembly.facts.push((entry, Priority::Fact));
    }
    assembly.reasoning = prior_view.reasoning;
    assembly.compliance = prior_view.compliance;
    for item in extract_event_entries(seq, &content, true) {
        assembly.push(item);
    }
    let view = assembly.fit(budget, Assembly::drop_render_tail);
    Ok(view.render())
}

fn decide_text(prompt: &str) -> Result<String, BackendError> {
    let surface = prompt::parse_decision_surface(prompt)?;
    let view = crate::view::parse_view_lenient(&surface);

    let mut disqualifiers: Vec<&Entry> = Vec::new();
    let mut anchored: Vec<String> = Vec::new();
    for entry in view
        .facts
        .iter()
        .chain(view.reasoning.iter())
    {
        if entry.text.contains(DISQUALIFIER_MARK) {
            disqualifiers.push(entry);
            continue;
        }
        for anchor in scan_anchors(&entry.text) {
            anchored.push(cite(&anchor, &entry.citations));
        }
    }

    let text = if disqualifiers.is_empty() {
        let mut cited = anchored;
        cited.truncate(12);
        let basis = if cited.is_empty() {
            "no disqualifying entries on the surface".to_string()
        } else {
            cited.join("; ")
        };
        format!("APPROVE\nRATIONALE: {basis}")
    } else {
        let cited: Vec<String> = disqualifiers
            .iter()
            .take(12)
            .map(|e| cite(&e.text, &e.citations))
            .collect();
        format!("DENY\nRATIONALE: {}", cited.join("; "))
    };
    Ok(text)
}

fn cite(text: &str, citations: &[u64]) -> String {
    let mut out = text.to_string();
    for c in citations {
        out.push_str(&format!(" [{c}]"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::{EventKind, EventLog};
    use crate::prompt::{render_consolidation_prompt, render_decision_prompt, render_projection_prompt};
    use chrono::TimeZone;

    fn log_from(contents: &[&str]) -> EventLog {
        let mut log = EventLog::new("t", "c");
        let ts = chrono::Utc.timestamp_opt(1_766_000_000, 0).unwrap();
        for c in contents {
            log.append_at(EventKind::DocumentChunk, c, ts).unwrap();
        }
        log
    }

    fn projection_request(log: &EventLog, budget: usize) -> BackendRequest {
        BackendRequest {
            role: Role::Projection,
            prompt: render_projection_prompt("qualify?", "loan_qualification", &[], budget, log.events()),
            char_budget: budget,
            seed: 20260420,
            model_tag: EXTRACTIVE_MODEL_TAG.to_string(),
        }
    }

    #[test]
    fn projection_extracts_currency_anchors_with_citations() {
        // Independently derived expectation: events 1 and 3 carry the only
        // anchors, so the view must hold exactly those two lines, cited.
        let log = log_from(&[
            "Wired $412,500 to escrow per instruction.",
            "Routine correspondence with the branch office.",
            "Recorded payoff figure $98,200 from servicer.",
        ]);
        let backend = ExtractiveBackend::new();
        let resp = backend.complete(&projection_request(&log, 10_000)).unwrap();
        assert!(resp.text.contains("- Wired $412,500 to escrow per instruction. [1]"));
        assert!(resp.text.contains("- Recorded payoff figure $98,200 from servicer. [3]"));
        assert!(!resp.text.contains("Routine correspondence"));
        assert_eq!(resp.output_chars, resp.text.chars().count());
    }

    #[test]
    fn identical_requests_yield_byte_identical_responses() {
        let log = log_from(&["Recorded $1,000 fee.", "DISQUALIFIER: CRD-58812 alert."]);
        let backend = ExtractiveBackend::new();
        let req = projection_request(&log, 10_000);
        let a = backend.complete(&req).unwrap();
        let b = backend.complete(&req).unwrap();
        assert_eq!(a.text, b.text);
        // Distinct call ids even for identical requests.
        assert_eq!((a.call_id, b.call_id), (1, 2));
    }

    #[test]
    fn projection_drops_lowest_priority_first_under_tight_budgets() {
        let log = log_from(&[
            "Recorded $412,500 principal.",
            "ASSESSMENT: obligations within ceiling.",
            "PROVISION ECOA-1002: adverse action notice required.",
            "DISQUALIFIER: CRD-58812 bureau alert.",
        ]);
        let backend = ExtractiveBackend::new();
        let full = backend.complete(&projection_request(&log, 10_000)).unwrap().text;
        assert!(full.contains("ECOA-1002") && full.contains("ASSESSMENT"));

        // Shrinking budgets peel off compliance first, then reasoning, then
        // plain facts; the disqualifier is the last fact standing.
        let no_compliance = backend.complete(&projection_request(&log, 180)).unwrap().text;
        assert!(!no_compliance.contains("ECOA-1002"));
        assert!(no_compliance.contains("ASSESSMENT"));
        assert!(no_compliance.contains("$412,500"));

        let facts_only = backend.complete(&projection_request(&log, 140)).unwrap().text;
        assert!(!facts_only.contains("ASSESSMENT"));
        assert!(facts_only.contains("$412,500"));
        assert!(facts_only.contains("DISQUALIFIER"));

        let disqualifier_only = backend.complete(&projection_request(&log, 120)).unwrap().text;
        assert!(!disqualifier_only.contains("$412,500"));
        assert!(disqualifier_only.contains("DISQUALIFIER: CRD-58812 bureau alert. [4]"));
        assert!(disqualifier_only.chars().count() <= 120);
    }

    #[test]
    fn projection_of_no_events_is_all_unknown() {
        let log = log_from(&[]);
        let backend = ExtractiveBackend::new();
        let resp = backend.complete(&projection_request(&log, 1000)).unwrap();
        assert_eq!(
            resp.text,
            "FACTS\n- UNKNOWN\nREASONING\n- UNKNOWN\nCOMPLIANCE NOTES\n- UNKNOWN"
        );
    }

    #[test]
    fn consolidation_appends_then_truncates_the_rendered_tail() {
        // Derived by hand. Prior summary holds three facts; the new event
        // adds a gist plus one anchor line. At a budget that fits only the
        // prior entries plus the gist, the newest entry (the anchor line, at
        // the render tail) is dropped.
        let prior = "FACTS\n- alpha note [1]\n- beta note [2]\n- gamma note [3]\nREASONING\n- UNKNOWN\nCOMPLIANCE NOTES\n- UNKNOWN";
        let mut log = log_from(&["routine desk memo about filing cadence.\nRecorded $77,100 supplement."]);
        log.seal();
        let event = &log.events()[0];
        let backend = ExtractiveBackend::new();

        let fits_all = render_consolidation_prompt(prior, 400, event);
        let resp = backend
            .complete(&BackendRequest {
                role: Role::Consolidation,
                prompt: fits_all,
                char_budget: 400,
                seed: 0,
                model_tag: EXTRACTIVE_MODEL_TAG.to_string(),
            })
            .unwrap();
        assert_eq!(
            resp.text,
            "FACTS\n- alpha note [1]\n- beta note [2]\n- gamma note [3]\n- routine desk memo about [1]\n- Recorded $77,100 supplement. [1]\nREASONING\n- UNKNOWN\nCOMPLIANCE NOTES\n- UNKNOWN"
        );

        let binding = render_consolidation_prompt(prior, 135, event);
        let resp = backend
            .complete(&BackendRequest {
                role: Role::Consolidation,
                prompt: binding,
                char_budget: 135,
                seed: 0,
                model_tag: EXTRACTIVE_MODEL_TAG.to_string(),
            })
            .unwrap();
        assert_eq!(
            resp.text,
            "FACTS\n- alpha note [1]\n- beta note [2]\n- gamma note [3]\n- routine desk memo about [1]\nREASONING\n- UNKNOWN\nCOMPLIANCE NOTES\n- UNKNOWN"
        );
    }

    #[test]
    fn gist_clipping_is_word_bounded() {
        assert_eq!(clip_gist("short line"), "short line");
        assert_eq!(
            clip_gist("routine desk memo about filing cadence"),
            "routine desk memo about"
        );
        assert_eq!(clip_gist("abcdefghijklmnopqrstuvwxyz"), "abcdefghijklmnopqrstuvwx");
    }

    #[test]
    fn decision_approves_without_disqualifiers_and_denies_with() {
        let backend = ExtractiveBackend::new();
        let approve_surface =
            "FACTS\n- Recorded $412,500 principal. [1]\nREASONING\n- UNKNOWN\nCOMPLIANCE NOTES\n- UNKNOWN";
        let req = |surface: &str| BackendRequest {
            role: Role::Decision,
            prompt: render_decision_prompt("qualify?", "loan_qualification", &[], surface),
            char_budget: 1000,
            seed: 0,
            model_tag: EXTRACTIVE_MODEL_TAG.to_string(),
        };
        let resp = backend.complete(&req(approve_surface)).unwrap();
        assert!(resp.text.starts_with("APPROVE\nRATIONALE: "));
        assert!(resp.text.contains("$412,500 [1]"));

        let deny_surface = "FACTS\n- Recorded $412,500 principal. [1]\n- DISQUALIFIER: CRD-58812 alert. [7]\nREASONING\n- UNKNOWN\nCOMPLIANCE NOTES\n- UNKNOWN";
        let resp = backend.complete(&req(deny_surface)).unwrap();
        assert!(resp.text.starts_with("DENY\nRATIONALE: "));
        assert!(resp.text.contains("DISQUALIFIER: CRD-58812 alert. [7]"));
    }

    #[test]
    fn unparseable_prompt_framing_is_an_error() {
        let backend = ExtractiveBackend::new();
        let req = BackendRequest {
            role: Role::Consolidation,
            prompt: "free-form text with no framing".to_string(),
            char_budget: 1000,
            seed: 0,
            model_tag: EXTRACTIVE_MODEL_TAG.to_string(),
        };
        assert!(matches!(
            backend.complete(&req),
            Err(BackendError::Framing(_))
        ));
    }
}
