//! Memory-architecture selection rubric: given a task's operational
//! requirements and its context compression ratio, pick between the
//! projection substrate and leaving the choice open.
//!
//! The rubric is a strict three-clause precedence list — enterprise
//! properties first, then the compression ratio, then the default — and its
//! one structural invariant is that the projection architecture is mandated
//! exactly when some clause other than the default fires.

use serde::{Deserialize, Serialize};

/// Compression ratio above which projection is mandated even without an
/// enterprise requirement.
pub const DEFAULT_RATIO_THRESHOLD: f64 = 10.0;

/// The operational profile of a deployment under assessment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TamsInput {
    /// Decisions must be reproducible after the fact.
    pub requires_replay: bool,
    /// Every model interaction must be attributable in an audit trail.
    pub requires_audit: bool,
    /// Memory must be scoped per tenant with no cross-contamination.
    pub requires_isolation: bool,
    /// Trajectory size over working-memory budget (ρ).
    pub compression_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemoryChoice {
    /// Projection over an immutable log is required.
    #[serde(rename = "DPM")]
    Dpm,
    /// Either architecture is defensible; choose on other grounds.
    #[serde(rename = "EITHER")]
    Either,
}

/// Which rubric clause decided the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggeredRule {
    /// Replay, audit, or isolation is required.
    EnterpriseProperty,
    /// ρ exceeds the threshold.
    CompressionRatio,
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TamsDecision {
    pub choice: MemoryChoice,
    pub triggered_rule: TriggeredRule,
    pub threshold: f64,
}

/// Applies the rubric with the standard ratio threshold.
pub fn tams_select(input: &TamsInput) -> TamsDecision {
    tams_select_with(input, DEFAULT_RATIO_THRESHOLD)
}

/// Applies the rubric with an explicit ratio threshold. Enterprise
/// properties are checked first; the ratio clause only fires when none of
/// them already decided.
pub fn tams_select_with(input: &TamsInput, threshold: f64) -> TamsDecision {
    let triggered_rule = if input.requires_replay || input.requires_audit || input.requires_isolation
    {
        TriggeredRule::EnterpriseProperty
    } else if input.compression_ratio > threshold {
        TriggeredRule::CompressionRatio
    } else {
        TriggeredRule::Default
    };
    let choice = if triggered_rule == TriggeredRule::Default {
        MemoryChoice::Either
    } else {
        MemoryChoice::Dpm
    };
    TamsDecision {
        choice,
        triggered_rule,
        threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn input(replay: bool, audit: bool, isolation: bool, rho: f64) -> TamsInput {
        TamsInput {
            requires_replay: replay,
            requires_audit: audit,
            requires_isolation: isolation,
            compression_ratio: rho,
        }
    }

    #[test]
    fn any_enterprise_property_mandates_projection() {
        for (replay, audit, isolation) in
            [(true, false, false), (false, true, false), (false, false, true)]
        {
            let d = tams_select(&input(replay, audit, isolation, 2.0));
            assert_eq!(d.triggered_rule, TriggeredRule::EnterpriseProperty);
            assert_eq!(d.choice, MemoryChoice::Dpm);
        }
    }

    #[test]
    fn high_compression_alone_mandates_projection() {
        let d = tams_select(&input(false, false, false, 20.0));
        assert_eq!(d.triggered_rule, TriggeredRule::CompressionRatio);
        assert_eq!(d.choice, MemoryChoice::Dpm);
    }

    #[test]
    fn unconstrained_low_ratio_tasks_are_left_open() {
        for rho in [2.0, 5.0, 10.0] {
            let d = tams_select(&input(false, false, false, rho));
            assert_eq!(d.triggered_rule, TriggeredRule::Default, "rho={rho}");
            assert_eq!(d.choice, MemoryChoice::Either);
        }
    }

    #[test]
    fn enterprise_properties_dominate_the_ratio_clause() {
        // Even at extreme ratios the reported clause is the property one.
        let d = tams_select(&input(true, false, false, 100.0));
        assert_eq!(d.triggered_rule, TriggeredRule::EnterpriseProperty);
    }

    #[test]
    fn threshold_is_strict_and_configurable() {
        assert_eq!(
            tams_select(&input(false, false, false, 10.0)).choice,
            MemoryChoice::Either
        );
        assert_eq!(
            tams_select(&input(false, false, false, 10.0 + 1e-9)).choice,
            MemoryChoice::Dpm
        );
        let d = tams_select_with(&input(false, false, false, 5.0), 4.0);
        assert_eq!(d.triggered_rule, TriggeredRule::CompressionRatio);
        assert_eq!(d.threshold, 4.0);
    }

    #[test]
    fn full_grid_of_flag_combinations_and_ratios() {
        for bits in 0..8u8 {
            for rho in [2.0, 5.0, 20.0] {
                let inp = input(bits & 4 != 0, bits & 2 != 0, bits & 1 != 0, rho);
                let d = tams_select(&inp);
                let expect_dpm = bits != 0 || rho > DEFAULT_RATIO_THRESHOLD;
                assert_eq!(
                    d.choice == MemoryChoice::Dpm,
                    expect_dpm,
                    "bits={bits:03b} rho={rho}"
                );
            }
        }
    }

    #[test]
    fn decision_serializes_with_contract_names() {
        let d = tams_select(&input(false, false, false, 20.0));
        let json = serde_json::to_string(&d).unwrap();
        assert!(json.contains("\"choice\":\"DPM\""));
        assert!(json.contains("\"triggered_rule\":\"compression_ratio\""));
        let open = tams_select(&input(false, false, false, 2.0));
        let json = serde_json::to_string(&open).unwrap();
        assert!(json.contains("\"choice\":\"EITHER\""));
        assert!(json.contains("\"triggered_rule\":\"default\""));
    }

    proptest! {
        #[test]
        fn projection_is_chosen_exactly_when_a_rule_fires(
            replay in any::<bool>(),
            audit in any::<bool>(),
            isolation in any::<bool>(),
            rho in 0.0f64..40.0,
        ) {
            let d = tams_select(&input(replay, audit, isolation, rho));
            prop_assert_eq!(
                d.choice == MemoryChoice::Dpm,
                d.triggered_rule != TriggeredRule::Default
            );
        }
    }
}
