//! Prompt templates and their framing protocol.
//!
//! Templates are versioned text assets: each run manifest records their
//! SHA-256 so a replay can assert it is re-issuing byte-identical prompts.
//! The framing is also a parsing contract — the extractive backend reads the
//! embedded task, events, summary, and surface back out of the prompt text —
//! so the fill and parse halves live side by side here.
//!
//! Event content may span multiple lines; events are framed as `[seq] ` at
//! the start of an event with continuation lines following, and the EVENTS
//! block is last in the prompt so nothing needs escaping.

use once_cell::sync::Lazy;
use regex::Regex;

use crate::event_log::Event;
use crate::hashing::sha256_hex;

pub const PROJECTION_TEMPLATE: &str = "\
SYSTEM: Produce a decision-ready memory view over the event log below for the stated task. \
Preserve every dollar amount, date, identifier, and percentage verbatim. Cite the event index \
for each claim. Do not paraphrase anchors. Emit UNKNOWN when a required field is not derivable. \
Output exactly three sections in fixed order: FACTS, REASONING, COMPLIANCE NOTES.
TASK: {question}
DOMAIN: {domain}
PROVISIONS: {provisions}
BUDGET: {budget} characters.
EVENTS:
{events}";

pub const CONSOLIDATION_TEMPLATE: &str = "\
SYSTEM: Maintain a running decision summary over an event stream. Retain prior entries, fold in \
the new event, and stay within the budget. Keep anchors verbatim. Output the same three-section \
format as the prior summary.
BUDGET: {budget} characters.
PRIOR SUMMARY:
<<<SUMMARY
{prior}
SUMMARY>>>
NEW EVENT:
{event}";

pub const DECISION_TEMPLATE: &str = "\
SYSTEM: Issue the final decision for the task below using only the memory surface provided. \
Answer APPROVE or DENY on the first line, then one line starting with RATIONALE: citing the \
anchors relied on.
TASK: {question}
DOMAIN: {domain}
PROVISIONS: {provisions}
MEMORY:
<<<MEMORY
{surface}
MEMORY>>>";

/// Appended once when a backend's output failed to parse, before retrying.
pub const FORMAT_REMINDER: &str = "\n\
REMINDER: The previous output was malformed. Emit exactly the three headers FACTS, REASONING, \
COMPLIANCE NOTES in that order, one entry per line.";

/// Digest of a template, recorded in run manifests.
pub fn template_digest(template: &str) -> String {
    sha256_hex(template)
}

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in pairs {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// One event rendered for a prompt: `[seq] first line` + continuation lines.
pub fn render_event(event: &Event) -> String {
    format!("[{}] {}", event.seq, event.content)
}

pub fn render_projection_prompt(
    question: &str,
    domain: &str,
    provisions: &[String],
    budget_chars: usize,
    events: &[Event],
) -> String {
    let events_block = events
        .iter()
        .map(render_event)
        .collect::<Vec<_>>()
        .join("\n");
    fill(
        PROJECTION_TEMPLATE,
        &[
            ("question", question),
            ("domain", domain),
            ("provisions", &provisions.join("; ")),
            ("budget", &budget_chars.to_string()),
            ("events", &events_block),
        ],
    )
}

pub fn render_consolidation_prompt(prior_summary: &str, budget_chars: usize, event: &Event) -> String {
    fill(
        CONSOLIDATION_TEMPLATE,
        &[
            ("budget", &budget_chars.to_string()),
            ("prior", prior_summary),
            ("event", &render_event(event)),
        ],
    )
}

pub fn render_decision_prompt(
    question: &str,
    domain: &str,
    provisions: &[String],
    surface: &str,
) -> String {
    fill(
        DECISION_TEMPLATE,
        &[
            ("question", question),
            ("domain", domain),
            ("provisions", &provisions.join("; ")),
            ("surface", surface),
        ],
    )
}

#[derive(Debug, thiserror::Error)]
#[error("prompt framing not understood: {0}")]
pub struct FramingError(pub String);

static EVENT_START: Lazy<Regex> = Lazy::new(|| Regex::new(r"^\[(\d+)\] ").unwrap());

/// Parses the `[seq] content` event framing. Continuation lines attach to
/// the preceding event.
pub fn parse_event_block(block: &str) -> Result<Vec<(u64, String)>, FramingError> {
    let mut events: Vec<(u64, String)> = Vec::new();
    for line in block.lines() {
        if let Some(caps) = EVENT_START.captures(line) {
            let seq: u64 = caps[1]
                .parse()
                .map_err(|_| FramingError("event index overflow".to_string()))?;
            let rest = &line[caps.get(0).unwrap().end()..];
            events.push((seq, rest.to_string()));
        } else if let Some(last) = events.last_mut() {
            last.1.push('\n');
            last.1.push_str(line);
        } else if !line.trim().is_empty() {
            return Err(FramingError(format!(
                "event block starts with unindexed line: {line:?}"
            )));
        }
    }
    Ok(events)
}

/// The budget declared in a prompt's `BUDGET: <n> characters.` line.
pub fn parse_budget_line(prompt: &str) -> Result<usize, FramingError> {
    static BUDGET: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?m)^BUDGET: (\d+) characters\.$").unwrap());
    let caps = BUDGET
        .captures(prompt)
        .ok_or_else(|| FramingError("no BUDGET line".to_string()))?;
    caps[1]
        .parse()
        .map_err(|_| FramingError("budget overflow".to_string()))
}

/// The `PROVISIONS: a; b; c` line of a projection or decision prompt.
pub fn parse_provisions_line(prompt: &str) -> Vec<String> {
    static PROVISIONS: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?m)^PROVISIONS: (.*)$").unwrap());
    PROVISIONS
        .captures(prompt)
        .map(|caps| {
            caps[1]
                .split(';')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
        .unwrap_or_default()
}

/// Everything after the `EVENTS:` marker of a projection prompt.
pub fn parse_projection_events(prompt: &str) -> Result<Vec<(u64, String)>, FramingError> {
    let (_, block) = prompt
        .split_once("\nEVENTS:\n")
        .ok_or_else(|| FramingError("no EVENTS block".to_string()))?;
    let events = parse_event_block(block)?;
    if events.is_empty() && !block.trim().is_empty() {
        return Err(FramingError("EVENTS block has no indexed events".to_string()));
    }
    Ok(events)
}

/// The prior summary and new event of a consolidation prompt.
pub fn parse_consolidation_parts(prompt: &str) -> Result<(String, (u64, String)), FramingError> {
    let (_, rest) = prompt
        .split_once("<<<SUMMARY\n")
        .ok_or_else(|| FramingError("no PRIOR SUMMARY block".to_string()))?;
    let (prior, rest) = rest
        .split_once("\nSUMMARY>>>")
        .ok_or_else(|| FramingError("unterminated PRIOR SUMMARY block".to_string()))?;
    let (_, event_block) = rest
        .split_once("NEW EVENT:\n")
        .ok_or_else(|| FramingError("no NEW EVENT block".to_string()))?;
    let mut events = parse_event_block(event_block)?;
    if events.len() != 1 {
        return Err(FramingError(format!(
            "expected exactly one new event, found {}",
            events.len()
        )));
    }
    Ok((prior.to_string(), events.remove(0)))
}

/// The memory surface embedded in a decision prompt.
pub fn parse_decision_surface(prompt: &str) -> Result<String, FramingError> {
    let (_, rest) = prompt
        .split_once("<<<MEMORY\n")
        .ok_or_else(|| FramingError("no MEMORY block".to_string()))?;
    let (surface, _) = rest
        .split_once("\nMEMORY>>>")
        .ok_or_else(|| FramingError("unterminated MEMORY block".to_string()))?;
    Ok(surface.to_string())
}
