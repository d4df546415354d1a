//! The evaluation workbench: runs both memory architectures over the case
//! suite, scores every run, and emits the results tables.
//!
//! Three studies ship:
//!
//! 1. fidelity under budget pressure — both conditions × three budgets over
//!    the ten large cases, with paired permutation tests per metric;
//! 2. replay stability — repeated surface rebuilds over selected cells;
//! 3. compression-ratio sensitivity — the first study's deltas re-keyed by
//!    the actual trajectory-to-budget ratio.
//!
//! Every run is seeded through a manifest; with a deterministic backend the
//! emitted CSVs are byte-identical across invocations.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{AuditLedger, CallCounts, CaptureMode};
use crate::backends::{BackendError, BackendSpec};
use crate::casegen::{generate_case, CaseBundle, CaseScale, Suite};
use crate::decision::{decide, DecisionOutput};
use crate::projection::{project, Budget, Domain};
use crate::prompt::{
    template_digest, CONSOLIDATION_TEMPLATE, DECISION_TEMPLATE, PROJECTION_TEMPLATE,
};
use crate::replay::{replay_study, write_replay_csv, ReplayError, ReplayReport};
use crate::scoring::{score_run, ScoreError, ScoreVector};
use crate::stats::{paired_stats, PairedSample, PairedStatsResult, StatsError};
use crate::summ::run_trajectory;
use crate::Condition;

/// Replays per cell in the stability study.
pub const DEFAULT_STUDY_REPLAYS: u32 = 10;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    #[error("run failed for {run_id}: {message}")]
    Run { run_id: String, message: String },
    #[error("scoring failed: {0}")]
    Score(#[from] ScoreError),
    #[error("stats failed: {0}")]
    Stats(#[from] StatsError),
    #[error("replay study failed: {0}")]
    Replay(#[from] ReplayError),
    #[error("csv write failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("self-check failed:\n{}", .0.join("\n"))]
    SelfCheck(Vec<String>),
}

fn write_text(path: &Path, body: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, body).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Pins everything a rerun needs to reproduce the outputs bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub schema: String,
    pub seed: u64,
    pub suite_digest: String,
    pub budgets: Vec<String>,
    pub conditions: Vec<Condition>,
    pub backend: String,
    pub resamples: u32,
    pub prompt_digests: PromptDigests,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptDigests {
    pub projection: String,
    pub consolidation: String,
    pub decision: String,
}

impl ExperimentManifest {
    pub fn new(
        suite: &Suite,
        spec: &BackendSpec,
        seed: u64,
        resamples: u32,
        budgets: &[Budget],
        conditions: &[Condition],
    ) -> Self {
        ExperimentManifest {
            schema: "dpm-experiment-v1".to_string(),
            seed,
            suite_digest: suite.digest(),
            budgets: budgets.iter().map(budget_token).collect(),
            conditions: conditions.to_vec(),
            backend: spec.to_string(),
            resamples,
            prompt_digests: PromptDigests {
                projection: template_digest(PROJECTION_TEMPLATE),
                consolidation: template_digest(CONSOLIDATION_TEMPLATE),
                decision: template_digest(DECISION_TEMPLATE),
            },
        }
    }
}

/// Table/manifest token for a budget. Named budgets use their label; custom
/// budgets use the raw char count, which `Budget::parse` round-trips.
pub fn budget_token(budget: &Budget) -> String {
    match budget.label {
        crate::projection::BudgetLabel::Custom => budget.chars.to_string(),
        named => named.as_str().to_string(),
    }
}

/// One scored run, in the exact shape the results JSON uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub case_id: String,
    pub condition: Condition,
    pub budget_label: String,
    pub frp: f64,
    pub rcs: f64,
    pub eda: f64,
    pub crr: f64,
    pub calls: usize,
    pub wall_ms: u64,
}

/// Full outcome of one (case, condition, budget) run, ledger included.
#[derive(Debug)]
pub struct RunResult {
    pub run_id: String,
    pub surface: String,
    pub decision: DecisionOutput,
    pub score: ScoreVector,
    pub calls: CallCounts,
    pub wall_ms: u64,
    pub ledger: AuditLedger,
}

/// Per-run backend seed: a pure function of the master seed and run id, so
/// cells are independent but individually reproducible.
pub fn derive_run_seed(master: u64, run_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"run-seed");
    hasher.update(master.to_le_bytes());
    hasher.update(run_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Executes one cell end to end: build the memory surface under the
/// condition's call pattern, then make the decision call, then score.
pub fn run_single(
    bundle: &CaseBundle,
    condition: Condition,
    budget: Budget,
    spec: &BackendSpec,
    capture: CaptureMode,
    master_seed: u64,
) -> Result<RunResult, ExperimentError> {
    let run_id = format!(
        "{}__{}__{}",
        bundle.case_id,
        condition.as_str(),
        budget.label.as_str()
    );
    let seed = derive_run_seed(master_seed, &run_id);
    let backend = spec.instantiate(seed)?;
    let mut ledger = AuditLedger::new(&run_id, capture);
    let started = Instant::now();

    let fail = |message: String, run_id: &str| ExperimentError::Run {
        run_id: run_id.to_string(),
        message,
    };
    let surface = match condition {
        Condition::Dpm => {
            let mut log = bundle.log.clone();
            log.seal();
            project(&log, &bundle.task, budget, backend.as_ref(), &mut ledger, seed)
                .map(|p| p.surface)
                .map_err(|e| fail(e.to_string(), &run_id))?
        }
        Condition::Summ => run_trajectory(
            &bundle.log,
            budget,
            backend.as_ref(),
            &mut ledger,
            seed,
            false,
        )
        .map(|t| t.final_summary.text)
        .map_err(|e| fail(e.to_string(), &run_id))?,
    };
    let decision = decide(&surface, &bundle.task, backend.as_ref(), &mut ledger, seed)
        .map_err(|e| fail(e.to_string(), &run_id))?;
    let wall_ms = started.elapsed().as_millis() as u64;
    ledger.close();

    let calls = ledger
        .surface_count(&run_id)
        .map_err(|e| fail(e.to_string(), &run_id))?;
    let score = score_run(&surface, decision.label, &bundle.truth)?;
    Ok(RunResult {
        run_id,
        surface,
        decision,
        score,
        calls,
        wall_ms,
        ledger,
    })
}

/// One row of the fidelity results table: a paired comparison for a single
/// (budget, metric) cell over the large cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub budget: String,
    pub metric: String,
    #[serde(flatten)]
    pub stats: PairedStatsResult,
}

/// A cell that produced no score: its run id plus the failure it hit. Emitted
/// alongside the results so partial runs stay visible instead of vanishing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingCell {
    pub run_id: String,
    pub message: String,
}

#[derive(Debug)]
pub struct FidelityStudy {
    pub manifest: ExperimentManifest,
    pub records: Vec<ScoreRecord>,
    pub rows: Vec<FidelityRow>,
    pub missing: Vec<MissingCell>,
}

/// Which slice of the full (budget × condition) grid a study covers.
#[derive(Debug, Clone)]
pub struct FidelityScope {
    pub budgets: Vec<Budget>,
    pub conditions: Vec<Condition>,
}

impl Default for FidelityScope {
    fn default() -> Self {
        FidelityScope {
            budgets: Budget::named().to_vec(),
            conditions: vec![Condition::Dpm, Condition::Summ],
        }
    }
}

/// Stats-table metric labels, in emission order. The reasoning metric is a
/// proxy (phrase recall, not human grading) and its table label says so.
const METRIC_LABELS: [&str; 4] = ["frp", "rcs_proxy", "eda", "crr"];

/// Fidelity under budget pressure: both conditions at every named budget
/// over the large cases, with paired sign-flip tests per metric.
pub fn run_fidelity_study(
    suite: &Suite,
    spec: &BackendSpec,
    seed: u64,
    resamples: u32,
) -> Result<FidelityStudy, ExperimentError> {
    run_fidelity_study_scoped(suite, spec, seed, resamples, &FidelityScope::default())
}

/// Fidelity study over a chosen slice of the grid. Cells whose run fails are
/// recorded as missing and skipped; the stats table pairs only the cases
/// scored under both conditions, and drops any (budget, metric) cell left
/// with fewer than two pairs.
pub fn run_fidelity_study_scoped(
    suite: &Suite,
    spec: &BackendSpec,
    seed: u64,
    resamples: u32,
    scope: &FidelityScope,
) -> Result<FidelityStudy, ExperimentError> {
    let manifest =
        ExperimentManifest::new(suite, spec, seed, resamples, &scope.budgets, &scope.conditions);
    let mut records = Vec::new();
    let mut missing = Vec::new();

    for budget in &scope.budgets {
        let token = budget_token(budget);
        for bundle in suite.large_cases() {
            for &condition in &scope.conditions {
                let run = match run_single(
                    bundle,
                    condition,
                    *budget,
                    spec,
                    CaptureMode::DigestOnly,
                    seed,
                ) {
                    Ok(run) => run,
                    Err(err) => {
                        missing.push(MissingCell {
                            run_id: format!(
                                "{}__{}__{token}",
                                bundle.case_id,
                                condition.as_str()
                            ),
                            message: err.to_string(),
                        });
                        continue;
                    }
                };
                // Architecture sanity per cell: projection spends exactly two
                // calls, consolidation one per event plus the decision.
                let expected_calls = match condition {
                    Condition::Dpm => 2,
                    Condition::Summ => bundle.event_count() + 1,
                };
                if run.calls.total != expected_calls {
                    missing.push(MissingCell {
                        run_id: run.run_id.clone(),
                        message: format!(
                            "call count {} does not match the architecture ({expected_calls})",
                            run.calls.total
                        ),
                    });
                    continue;
                }
                records.push(ScoreRecord {
                    case_id: bundle.case_id.clone(),
                    condition,
                    budget_label: token.clone(),
                    frp: run.score.frp,
                    rcs: run.score.rcs,
                    eda: run.score.eda,
                    crr: run.score.crr,
                    calls: run.calls.total,
                    wall_ms: run.wall_ms,
                });
            }
        }
    }

    let rows = stats_rows_from_records(&records, resamples, seed)?;
    Ok(FidelityStudy {
        manifest,
        records,
        rows,
        missing,
    })
}

fn record_metric(record: &ScoreRecord, label: &str) -> f64 {
    match label {
        "frp" => record.frp,
        "rcs_proxy" => record.rcs,
        "eda" => record.eda,
        "crr" => record.crr,
        other => unreachable!("unknown metric label {other}"),
    }
}

/// Rebuilds the paired stats table from per-run score records. Budgets and
/// cases keep their first-seen order; a case scored under only one condition
/// drops out of the pairing, and a (budget, metric) cell left with fewer
/// than two pairs emits no row.
pub fn stats_rows_from_records(
    records: &[ScoreRecord],
    resamples: u32,
    seed: u64,
) -> Result<Vec<FidelityRow>, ExperimentError> {
    let mut budget_order: Vec<&str> = Vec::new();
    for record in records {
        if !budget_order.contains(&record.budget_label.as_str()) {
            budget_order.push(&record.budget_label);
        }
    }
    let mut rows = Vec::new();
    for token in budget_order {
        let mut case_order: Vec<&str> = Vec::new();
        let mut by_condition: HashMap<(&str, Condition), &ScoreRecord> = HashMap::new();
        for record in records.iter().filter(|r| r.budget_label == token) {
            if !case_order.contains(&record.case_id.as_str()) {
                case_order.push(&record.case_id);
            }
            by_condition.insert((&record.case_id, record.condition), record);
        }
        for metric in METRIC_LABELS {
            let mut ids = Vec::new();
            let mut dpm = Vec::new();
            let mut summ = Vec::new();
            for case in &case_order {
                let a = by_condition.get(&(*case, Condition::Dpm));
                let b = by_condition.get(&(*case, Condition::Summ));
                if let (Some(a), Some(b)) = (a, b) {
                    ids.push(case.to_string());
                    dpm.push(record_metric(a, metric));
                    summ.push(record_metric(b, metric));
                }
            }
            if ids.len() < 2 {
                continue;
            }
            let sample = PairedSample::new(ids, dpm, summ)?;
            rows.push(FidelityRow {
                budget: token.to_string(),
                metric: metric.to_string(),
                stats: paired_stats(&sample, resamples, seed)?,
            });
        }
    }
    Ok(rows)
}

/// Renders the stats table in its canonical CSV shape.
pub fn fidelity_table_csv(rows: &[FidelityRow]) -> String {
    let mut table = csv::Writer::from_writer(Vec::new());
    table
        .write_record([
            "budget",
            "metric",
            "mean_dpm",
            "mean_summ",
            "mean_delta",
            "p",
            "cohens_h",
            "ci_low",
            "ci_high",
        ])
        .expect("in-memory csv");
    for row in rows {
        table
            .write_record([
                row.budget.as_str(),
                row.metric.as_str(),
                &format!("{:.4}", row.stats.mean_a),
                &format!("{:.4}", row.stats.mean_b),
                &format!("{:.4}", row.stats.mean_delta),
                &format!("{:.6}", row.stats.p_value),
                &format!("{:.4}", row.stats.cohens_h),
                &format!("{:.4}", row.stats.ci_low),
                &format!("{:.4}", row.stats.ci_high),
            ])
            .expect("in-memory csv");
    }
    String::from_utf8(table.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

/// Writes the fidelity study to `dir`: manifest, per-run scores (JSON), the
/// stats table (CSV), and the per-run call/latency table (CSV).
pub fn write_fidelity_study(study: &FidelityStudy, dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let manifest = serde_json::to_string_pretty(&study.manifest).expect("manifest serializes");
    write_text(&dir.join("manifest.json"), &manifest)?;
    let scores = serde_json::to_string_pretty(&study.records).expect("records serialize");
    write_text(&dir.join("scores.json"), &scores)?;
    let missing = serde_json::to_string_pretty(&study.missing).expect("markers serialize");
    write_text(&dir.join("missing.json"), &missing)?;

    write_text(&dir.join("exp1_results.csv"), &fidelity_table_csv(&study.rows))?;

    // Wall-clock numbers stay in scores.json; the CSVs must be byte-stable
    // across reruns, and latency is the one column that never is.
    let mut calls = csv::Writer::from_path(dir.join("exp1_calls.csv"))?;
    calls.write_record(["case_id", "condition", "budget", "calls"])?;
    for record in &study.records {
        calls.write_record([
            record.case_id.as_str(),
            record.condition.as_str(),
            record.budget_label.as_str(),
            &record.calls.to_string(),
        ])?;
    }
    calls.flush().map_err(|source| ExperimentError::Io {
        path: dir.join("exp1_calls.csv").display().to_string(),
        source,
    })?;
    Ok(())
}

/// Replay stability: ten rebuilds per selected cell at the moderate budget.
/// Projection cells cover three large cases; both conditions run on the two
/// small cases, where consolidation chains are short enough to replay
/// repeatedly.
pub fn run_replay_study_suite(
    suite: &Suite,
    spec: &BackendSpec,
    seed: u64,
    n_replays: u32,
) -> Result<Vec<ReplayReport>, ExperimentError> {
    let mut cells: Vec<(&CaseBundle, Condition)> = Vec::new();
    let larges: Vec<&CaseBundle> = suite.large_cases().collect();
    for bundle in larges.iter().take(3) {
        cells.push((bundle, Condition::Dpm));
    }
    for bundle in suite.small_cases() {
        cells.push((bundle, Condition::Dpm));
        cells.push((bundle, Condition::Summ));
    }
    let mut reports = Vec::new();
    for (bundle, condition) in cells {
        let base_seed = derive_run_seed(seed, &format!("replay__{}", bundle.case_id));
        reports.push(replay_study(
            bundle,
            condition,
            Budget::moderate(),
            spec,
            n_replays,
            base_seed,
        )?);
    }
    Ok(reports)
}

/// Writes the replay study: full reports as JSON plus the results-table CSV.
pub fn write_replay_study(reports: &[ReplayReport], dir: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let body = serde_json::to_string_pretty(reports).expect("reports serialize");
    write_text(&dir.join("replay_reports.json"), &body)?;
    write_replay_csv(reports, &dir.join("exp2_replay.csv"))?;
    Ok(())
}

/// One sensitivity row: a fidelity comparison keyed by the actual
/// compression ratio its budget produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub rho: f64,
    pub budget: String,
    pub metric: String,
    pub mean_delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
}

/// Compression-ratio sensitivity: re-keys the fidelity rows by the measured
/// trajectory-to-budget ratio. No new runs; this is a re-bucketing.
pub fn run_sensitivity_study(suite: &Suite, fidelity: &FidelityStudy) -> Vec<SensitivityRow> {
    let mean_chars = suite.mean_large_chars();
    fidelity
        .rows
        .iter()
        .filter_map(|row| {
            // Budget tokens round-trip through the parser, so chars are
            // recoverable for named and numeric tokens alike.
            let budget = Budget::parse(&row.budget)?;
            Some(SensitivityRow {
                rho: mean_chars / budget.chars as f64,
                budget: row.budget.clone(),
                metric: row.metric.clone(),
                mean_delta: row.stats.mean_delta,
                ci_low: row.stats.ci_low,
                ci_high: row.stats.ci_high,
                p: row.stats.p_value,
            })
        })
        .collect()
}

pub fn write_sensitivity_study(
    rows: &[SensitivityRow],
    dir: &Path,
) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut table = csv::Writer::from_path(dir.join("exp3_sensitivity.csv"))?;
    table.write_record(["rho", "budget", "metric", "mean_delta", "ci_low", "ci_high", "p"])?;
    for row in rows {
        table.write_record([
            &format!("{:.2}", row.rho),
            row.budget.as_str(),
            row.metric.as_str(),
            &format!("{:.4}", row.mean_delta),
            &format!("{:.4}", row.ci_low),
            &format!("{:.4}", row.ci_high),
            &format!("{:.6}", row.p),
        ])?;
    }
    table.flush().map_err(|source| ExperimentError::Io {
        path: dir.join("exp3_sensitivity.csv").display().to_string(),
        source,
    })?;
    Ok(())
}

/// End-to-end self-check on a freshly generated small case: call counts
/// match the architecture, surfaces respect the budget, and two independent
/// deterministic replays agree byte for byte. Returns the violations.
pub fn verify_pipeline(seed: u64) -> Result<(), ExperimentError> {
    let bundle = generate_case(Domain::LoanQualification, seed | 1, CaseScale::Small);
    let spec = BackendSpec::Extractive;
    let budget = Budget::moderate();
    let mut violations = Vec::new();

    for condition in [Condition::Dpm, Condition::Summ] {
        let first = run_single(&bundle, condition, budget, &spec, CaptureMode::DigestOnly, seed)?;
        let second = run_single(&bundle, condition, budget, &spec, CaptureMode::DigestOnly, seed)?;
        let expected = match condition {
            Condition::Dpm => 2,
            Condition::Summ => bundle.event_count() + 1,
        };
        if first.calls.total != expected {
            violations.push(format!(
                "{}: {} calls, architecture says {expected}",
                first.run_id, first.calls.total
            ));
        }
        if first.surface.chars().count() > budget.chars {
            violations.push(format!(
                "{}: surface exceeds budget ({} > {})",
                first.run_id,
                first.surface.chars().count(),
                budget.chars
            ));
        }
        if first.surface != second.surface || first.decision.label != second.decision.label {
            violations.push(format!(
                "{}: deterministic replays disagree",
                first.run_id
            ));
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ExperimentError::SelfCheck(violations))
    }
}
