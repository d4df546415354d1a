//! The summarization baseline: a running summary folded forward one event at
//! a time, one backend call per event.
//!
//! The running summary is the pipeline's only carried state. Every event —
//! relevant or not — costs a call and a pass through the budget gate, and
//! material squeezed out at step k is gone for every later step, which is
//! exactly the failure mode the projection design removes.

use crate::audit::{call_with_audit, AuditLedger, CallError};
use crate::backends::{Backend, BackendRequest, Role};
use crate::event_log::{Event, EventLog};
use crate::projection::{trim_to_budget, Budget};
use crate::prompt::render_consolidation_prompt;
use crate::view::{parse_view_lenient, MemoryView};

/// The running summary after some number of consolidation steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryState {
    /// Events folded in so far.
    pub step: usize,
    pub text: String,
}

impl SummaryState {
    /// The pre-ingest state: an empty section skeleton, so every
    /// consolidation step sees the same document shape.
    pub fn initial() -> Self {
        SummaryState {
            step: 0,
            text: MemoryView::default().render(),
        }
    }

    pub fn chars(&self) -> usize {
        self.text.chars().count()
    }
}

/// Outcome of folding a full log into a summary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRun {
    pub final_summary: SummaryState,
    /// Consolidation calls issued (= events folded).
    pub steps: usize,
    /// Steps whose output was byte-identical to their input summary.
    pub noop_steps: usize,
    /// Every intermediate surface, oldest first, when capture was requested.
    pub per_step_surfaces: Option<Vec<String>>,
}

/// Folds one event into the running summary. One backend call.
///
/// The returned text always fits the budget: a backend reply that overruns
/// it (drifted backends can add characters) is re-rendered with tail entries
/// dropped, the same gate the projection side uses.
pub fn consolidate(
    prev: &SummaryState,
    event: &Event,
    budget: Budget,
    backend: &dyn Backend,
    ledger: &mut AuditLedger,
    seed: u64,
) -> Result<SummaryState, CallError> {
    let prompt = render_consolidation_prompt(&prev.text, budget.chars, event);
    let request = BackendRequest {
        role: Role::Consolidation,
        prompt,
        char_budget: budget.chars,
        seed,
        model_tag: backend.descriptor().name,
    };
    let resp = call_with_audit(backend, ledger, &request)?;
    let text = if resp.text.chars().count() <= budget.chars {
        resp.text
    } else {
        let view = parse_view_lenient(&resp.text);
        trim_to_budget(view, budget.chars).1
    };
    Ok(SummaryState {
        step: prev.step + 1,
        text,
    })
}

/// A concrete demonstration that consolidation does not commute: two event
/// contents and a budget that fits either one of them but not both. Folding
/// (A, B) from the empty skeleton keeps A; folding (B, A) keeps B.
///
/// Returns (content_a, content_b, binding_budget).
pub fn noncommutativity_witness() -> (String, String, Budget) {
    let a = "Wire transfer of $45,900.00 cleared the escrow account.";
    let b = "Closing recorded on 2026-09-15 at the county office.";
    // Budget exactly large enough for the bigger single-fact summary: either
    // event alone fits, the pair does not, so the survivor is whichever was
    // folded in first.
    let single = |text: &str| {
        MemoryView {
            facts: vec![crate::view::Entry::new(text, vec![1])],
            ..MemoryView::default()
        }
        .render()
        .chars()
        .count()
    };
    let budget = Budget::custom(single(a).max(single(b)));
    (a.to_string(), b.to_string(), budget)
}

/// Runs the whole trajectory: one consolidation call per event, oldest
/// first. `capture_steps` retains every intermediate surface (the full-audit
/// path); leave it off for digest-only runs.
pub fn run_trajectory(
    log: &EventLog,
    budget: Budget,
    backend: &dyn Backend,
    ledger: &mut AuditLedger,
    seed: u64,
    capture_steps: bool,
) -> Result<TrajectoryRun, CallError> {
    let mut state = SummaryState::initial();
    let mut noop_steps = 0;
    let mut surfaces = capture_steps.then(Vec::new);
    for event in log.events() {
        let next = consolidate(&state, event, budget, backend, ledger, seed)?;
        if next.text == state.text {
            noop_steps += 1;
        }
        if let Some(s) = surfaces.as_mut() {
            s.push(next.text.clone());
        }
        state = next;
    }
    Ok(TrajectoryRun {
        steps: state.step,
        final_summary: state,
        noop_steps,
        per_step_surfaces: surfaces,
    })
}
