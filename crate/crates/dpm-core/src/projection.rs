//! Task-conditioned projection: the full event log in, one bounded working
//! memory out, in a single backend call.
//!
//! Projection is a pure function of (log, task, budget, backend): it reads
//! the log, never writes anything, and keeps no state between calls. Replay
//! therefore needs nothing beyond the same inputs and a deterministic
//! backend.

use serde::{Deserialize, Serialize};

use crate::audit::{call_with_audit, AuditLedger, CallError};
use crate::backends::{Backend, BackendRequest, Role};
use crate::event_log::EventLog;
use crate::prompt::{render_projection_prompt, FORMAT_REMINDER};
use crate::view::{parse_view, MemoryView, ViewFormatError, TRIMMED_SENTINEL};

/// Budgets below this are configuration errors: the section skeleton plus a
/// single entry already needs most of it.
pub const MIN_PROJECTION_BUDGET: usize = 200;

/// The three named operating points, spanning roughly 20x, 5x, and 2x
/// compression against the corpus trajectory size.
pub const TIGHT_BUDGET_CHARS: usize = 1_338;
pub const MODERATE_BUDGET_CHARS: usize = 5_352;
pub const LOOSE_BUDGET_CHARS: usize = 13_381;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetLabel {
    Tight,
    Moderate,
    Loose,
    Custom,
}

impl BudgetLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BudgetLabel::Tight => "tight",
            BudgetLabel::Moderate => "moderate",
            BudgetLabel::Loose => "loose",
            BudgetLabel::Custom => "custom",
        }
    }
}

/// A character allowance for one memory surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Budget {
    pub chars: usize,
    pub label: BudgetLabel,
}

impl Budget {
    pub fn tight() -> Self {
        Budget { chars: TIGHT_BUDGET_CHARS, label: BudgetLabel::Tight }
    }

    pub fn moderate() -> Self {
        Budget { chars: MODERATE_BUDGET_CHARS, label: BudgetLabel::Moderate }
    }

    pub fn loose() -> Self {
        Budget { chars: LOOSE_BUDGET_CHARS, label: BudgetLabel::Loose }
    }

    pub fn custom(chars: usize) -> Self {
        Budget { chars, label: BudgetLabel::Custom }
    }

    /// The three named operating points, smallest first.
    pub fn named() -> [Budget; 3] {
        [Budget::tight(), Budget::moderate(), Budget::loose()]
    }

    /// Parses "tight" | "moderate" | "loose" | a character count.
    pub fn parse(text: &str) -> Option<Budget> {
        match text {
            "tight" => Some(Budget::tight()),
            "moderate" => Some(Budget::moderate()),
            "loose" => Some(Budget::loose()),
            other => other.parse::<usize>().ok().map(Budget::custom),
        }
    }
}

/// The decision task a projection is conditioned on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub domain: Domain,
    /// The question the decision stage must answer.
    pub question: String,
    /// Provision identifiers the task is governed by; compliance coverage is
    /// measured against this list.
    pub provisions_universe: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    LoanQualification,
    ClaimsAdjudication,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::LoanQualification => "loan_qualification",
            Domain::ClaimsAdjudication => "claims_adjudication",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProjectionError {
    #[error("projection budget {got} is below the {min}-char floor")]
    BudgetTooSmall { min: usize, got: usize },
    #[error(transparent)]
    Call(#[from] CallError),
    #[error("projection output stayed malformed after a repair pass: {0}")]
    MalformedOutput(ViewFormatError),
}

/// Outcome of one projection call.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    /// Structured view parsed back from the backend's output.
    pub view: MemoryView,
    /// The memory surface handed to the decision stage: the backend's text
    /// verbatim when it fits the budget, else the trimmed re-render.
    pub surface: String,
    /// True when the output exceeded the budget and entries were dropped.
    pub trimmed: bool,
}

/// Projects the log into one task-conditioned memory surface.
///
/// Exactly one backend call in the common case; a malformed output earns a
/// single repair pass (the same prompt plus a format reminder) before the
/// run fails. The returned surface always fits `budget.chars`.
pub fn project(
    log: &EventLog,
    task: &TaskSpec,
    budget: Budget,
    backend: &dyn Backend,
    ledger: &mut AuditLedger,
    seed: u64,
) -> Result<ProjectionResult, ProjectionError> {
    if budget.chars < MIN_PROJECTION_BUDGET {
        return Err(ProjectionError::BudgetTooSmall {
            min: MIN_PROJECTION_BUDGET,
            got: budget.chars,
        });
    }
    let prompt = render_projection_prompt(
        &task.question,
        task.domain.as_str(),
        &task.provisions_universe,
        budget.chars,
        log.events(),
    );
    let model_tag = backend.descriptor().name;
    let request = BackendRequest {
        role: Role::Projection,
        prompt: prompt.clone(),
        char_budget: budget.chars,
        seed,
        model_tag: model_tag.clone(),
    };
    let resp = call_with_audit(backend, ledger, &request)?;

    let (text, view) = match parse_view(&resp.text) {
        Ok(view) => (resp.text, view),
        Err(_) => {
            // One repair pass: same request with the format contract restated.
            let repair = BackendRequest {
                prompt: format!("{prompt}{FORMAT_REMINDER}"),
                ..request
            };
            let retry = call_with_audit(backend, ledger, &repair)?;
            match parse_view(&retry.text) {
                Ok(view) => (retry.text, view),
                Err(e) => return Err(ProjectionError::MalformedOutput(e)),
            }
        }
    };

    if text.chars().count() <= budget.chars {
        return Ok(ProjectionResult { view, surface: text, trimmed: false });
    }
    let (view, surface) = trim_to_budget(view, budget.chars);
    Ok(ProjectionResult { view, surface, trimmed: true })
}

/// Drops whole entries from the render tail until the canonical render plus
/// a trim marker fits the budget.
pub(crate) fn trim_to_budget(mut view: MemoryView, budget: usize) -> (MemoryView, String) {
    loop {
        let rendered = view.render();
        let candidate = format!("{rendered}\n{TRIMMED_SENTINEL}");
        if candidate.chars().count() <= budget {
            return (view, candidate);
        }
        let dropped = view.compliance.pop().is_some()
            || view.reasoning.pop().is_some()
            || view.facts.pop().is_some();
        if !dropped {
            // Even the empty skeleton plus marker exceeds the budget; the
            // floor makes this unreachable for projection, but stay total.
            return (view, candidate);
        }
    }
}
