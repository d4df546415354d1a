//! Agent memory as a pure function of an immutable event log.
//!
//! The substrate here keeps every observation in an append-only,
//! hash-chained log and defers memory construction to decision time: a
//! single task-conditioned projection turns the whole log into a bounded
//! working surface, which a single decision call then consumes. The
//! conventional alternative — folding each event into a running summary as
//! it arrives — is implemented alongside it, call for call, so the two
//! architectures can be compared under identical budgets, backends, and
//! seeds.
//!
//! The rest of the crate is the measurement apparatus: synthetic
//! regulated-decisioning cases with known ground truth, fidelity and
//! stability metrics, paired statistics, audit ledgers, replay studies, and
//! the experiment drivers that produce the results tables.

pub mod anchor;
pub mod audit;
pub mod backends;
pub mod casegen;
pub mod decision;
pub mod event_log;
pub mod experiment;
pub mod hashing;
pub mod projection;
pub mod prompt;
pub mod replay;
pub mod scoring;
pub mod stats;
pub mod summ;
pub mod tams;
pub mod view;

use serde::{Deserialize, Serialize};

/// Which memory architecture produced a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// Deferred projection: full log, one projection call at decision time.
    #[serde(rename = "DPM")]
    Dpm,
    /// Incremental consolidation: one call per event as events arrive.
    #[serde(rename = "SUMM")]
    Summ,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Dpm => "DPM",
            Condition::Summ => "SUMM",
        }
    }

    /// Parses a condition name, case-insensitively.
    pub fn parse(text: &str) -> Option<Condition> {
        match text.to_ascii_lowercase().as_str() {
            "dpm" => Some(Condition::Dpm),
            "summ" => Some(Condition::Summ),
            _ => None,
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub use audit::{call_with_audit, AuditLedger, CallCounts, CallError, CaptureMode};
pub use backends::{Backend, BackendSpec};
pub use casegen::{generate_case, generate_suite, CaseBundle, CaseScale, Suite};
pub use decision::{decide, DecisionLabel, DecisionOutput};
pub use event_log::{Event, EventKind, EventLog};
pub use experiment::{
    run_fidelity_study, run_fidelity_study_scoped, run_replay_study_suite,
    run_sensitivity_study, run_single, verify_pipeline, ExperimentManifest, FidelityScope,
    FidelityStudy, ScoreRecord,
};
pub use projection::{project, Budget, BudgetLabel, Domain, ProjectionResult, TaskSpec};
pub use replay::{replay_study, ReplayReport};
pub use scoring::{score_run, ScoreVector};
pub use stats::{paired_stats, PairedSample, PairedStatsResult};
pub use summ::{consolidate, run_trajectory, SummaryState, TrajectoryRun};
pub use tams::{tams_select, tams_select_with, MemoryChoice, TamsDecision, TamsInput};
pub use view::MemoryView;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_names_round_trip_through_serde_and_parse() {
        assert_eq!(serde_json::to_string(&Condition::Dpm).unwrap(), "\"DPM\"");
        assert_eq!(serde_json::to_string(&Condition::Summ).unwrap(), "\"SUMM\"");
        assert_eq!(Condition::parse("dpm"), Some(Condition::Dpm));
        assert_eq!(Condition::parse("SUMM"), Some(Condition::Summ));
        assert_eq!(Condition::parse("other"), None);
        let back: Condition = serde_json::from_str("\"DPM\"").unwrap();
        assert_eq!(back, Condition::Dpm);
    }
}
