//! Command-line workbench around the projection-memory substrate: suite
//! generation, the three studies, a standalone stats pass, replay probes,
//! the architecture-selection rubric, and audit-trail export.
//!
//! Every command is deterministic given its flags: suites regenerate from
//! the seed, run cells derive their backend seeds from the master seed and
//! the run id, and the emitted tables are byte-stable across invocations.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgAction, Parser, Subcommand};

use dpm_core::audit::CaptureMode;
use dpm_core::casegen::{load_suite, store_suite, DEFAULT_SUITE_SEED};
use dpm_core::experiment::{
    derive_run_seed, fidelity_table_csv, run_fidelity_study_scoped, stats_rows_from_records,
    write_fidelity_study, write_replay_study, write_sensitivity_study, ExperimentManifest,
    FidelityScope, DEFAULT_STUDY_REPLAYS,
};
use dpm_core::stats::DEFAULT_RESAMPLES;
use dpm_core::tams::DEFAULT_RATIO_THRESHOLD;
use dpm_core::{
    generate_suite, replay_study, run_replay_study_suite, run_sensitivity_study, run_single,
    tams_select_with, verify_pipeline, BackendSpec, Budget, Condition, ScoreRecord, Suite,
    TamsInput,
};

#[derive(Parser)]
#[command(
    name = "dpm",
    about = "Workbench for the projection-memory substrate and its consolidation baseline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the 12-case suite and store it on disk.
    GenSuite {
        /// Master seed for the suite generator.
        #[arg(long, default_value_t = DEFAULT_SUITE_SEED)]
        seed: u64,
        /// Directory to write the suite into.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one of the three studies and write its results tables.
    ///
    /// Study 1 measures decision fidelity under budget pressure, study 2
    /// measures replay stability (always at the moderate budget over its
    /// fixed cell inventory; --budget and --condition do not apply), and
    /// study 3 re-keys study 1 by the measured compression ratio.
    Run {
        /// Which study to run: 1 (fidelity), 2 (replay), 3 (sensitivity).
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        exp: u8,
        /// Model backend: extractive, noisy:<epsilon>, or remote.
        #[arg(long, default_value = "extractive")]
        backend: String,
        /// Budget slice: tight, moderate, loose, all, or a char count.
        #[arg(long, default_value = "all")]
        budget: String,
        /// Condition slice: dpm, summ, or both.
        #[arg(long, default_value = "both")]
        condition: String,
        /// Master seed; every run cell derives its own seed from it.
        #[arg(long, default_value_t = DEFAULT_SUITE_SEED)]
        seed: u64,
        /// Directory to write results into.
        #[arg(long)]
        out: PathBuf,
        /// Load the suite from this directory instead of regenerating.
        #[arg(long)]
        suite: Option<PathBuf>,
        /// Permutation/bootstrap resamples for the stats tables.
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: u32,
        /// Rebuilds per cell in the replay study.
        #[arg(long, default_value_t = DEFAULT_STUDY_REPLAYS)]
        replays: u32,
        /// Self-check mode: run the pipeline verifier first and exit
        /// nonzero if any invariant is violated or any cell goes missing.
        #[arg(long)]
        verify: bool,
    },
    /// Rebuild one cell's memory surface repeatedly and report drift.
    Replay {
        /// Case id, e.g. loan_L01.
        #[arg(long)]
        case: String,
        /// Condition to rebuild: dpm, summ, or both.
        #[arg(long, default_value = "dpm")]
        condition: String,
        /// Number of rebuilds (at least 2).
        #[arg(long, default_value_t = DEFAULT_STUDY_REPLAYS)]
        replays: u32,
        /// Budget for the rebuilt surface.
        #[arg(long, default_value = "moderate")]
        budget: String,
        /// Model backend: extractive, noisy:<epsilon>, or remote.
        #[arg(long, default_value = "extractive")]
        backend: String,
        /// Master seed; the replay seed ladder derives from it.
        #[arg(long, default_value_t = DEFAULT_SUITE_SEED)]
        seed: u64,
        /// Load the suite from this directory instead of regenerating.
        #[arg(long)]
        suite: Option<PathBuf>,
    },
    /// Recompute the paired stats table from a results directory.
    ///
    /// Reads scores.json (and manifest.json for seed/resample defaults) and
    /// prints the table CSV to stdout.
    Stats {
        /// Results directory produced by `run --exp 1` or `--exp 3`.
        #[arg(long)]
        results: PathBuf,
        /// Override the resample count recorded in the manifest.
        #[arg(long)]
        resamples: Option<u32>,
        /// Override the seed recorded in the manifest.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Apply the memory-architecture selection rubric.
    Tams {
        /// Decisions must be replayable after the fact.
        #[arg(long, action = ArgAction::Set)]
        replay: bool,
        /// Every model interaction must be auditable.
        #[arg(long, action = ArgAction::Set)]
        audit: bool,
        /// Memory must be isolated per tenant.
        #[arg(long, action = ArgAction::Set)]
        isolation: bool,
        /// Context compression ratio (trajectory size over budget).
        #[arg(long)]
        ratio: f64,
        /// Ratio above which projection is mandated anyway.
        #[arg(long, default_value_t = DEFAULT_RATIO_THRESHOLD)]
        threshold: f64,
    },
    /// Re-execute one run deterministically and export its audit trail.
    ///
    /// The run id names the cell as <case>__<CONDITION>__<budget>, e.g.
    /// loan_L01__DPM__moderate. The export is a JSONL archive whose trailing
    /// manifest carries a rolling digest over every record line.
    AuditExport {
        /// Run id of the cell to re-execute.
        #[arg(long)]
        run: String,
        /// Output file (default: <run>.audit.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Model backend: extractive, noisy:<epsilon>, or remote.
        #[arg(long, default_value = "extractive")]
        backend: String,
        /// Master seed the original run used.
        #[arg(long, default_value_t = DEFAULT_SUITE_SEED)]
        seed: u64,
        /// Load the suite from this directory instead of regenerating.
        #[arg(long)]
        suite: Option<PathBuf>,
        /// digest retains hashes and sizes only; full keeps the payloads.
        #[arg(long, default_value = "digest")]
        audit: String,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenSuite { seed, out } => gen_suite(seed, &out),
        Command::Run {
            exp,
            backend,
            budget,
            condition,
            seed,
            out,
            suite,
            resamples,
            replays,
            verify,
        } => run(
            exp,
            &backend,
            &budget,
            &condition,
            seed,
            &out,
            suite.as_deref(),
            resamples,
            replays,
            verify,
        ),
        Command::Replay {
            case,
            condition,
            replays,
            budget,
            backend,
            seed,
            suite,
        } => replay(&case, &condition, replays, &budget, &backend, seed, suite.as_deref()),
        Command::Stats {
            results,
            resamples,
            seed,
        } => stats(&results, resamples, seed),
        Command::Tams {
            replay,
            audit,
            isolation,
            ratio,
            threshold,
        } => tams(replay, audit, isolation, ratio, threshold),
        Command::AuditExport {
            run,
            out,
            backend,
            seed,
            suite,
            audit,
        } => audit_export(&run, out.as_deref(), &backend, seed, suite.as_deref(), &audit),
    }
}

fn parse_backend(text: &str) -> Result<BackendSpec> {
    BackendSpec::parse(text).map_err(|e| anyhow!("{e}"))
}

fn parse_budget(text: &str) -> Result<Budget> {
    Budget::parse(text)
        .ok_or_else(|| anyhow!("unknown budget {text:?}; expected tight, moderate, loose, or a char count"))
}

fn parse_budget_slice(text: &str) -> Result<Vec<Budget>> {
    if text == "all" {
        Ok(Budget::named().to_vec())
    } else {
        Ok(vec![parse_budget(text)?])
    }
}

fn parse_condition_slice(text: &str) -> Result<Vec<Condition>> {
    if text.eq_ignore_ascii_case("both") {
        Ok(vec![Condition::Dpm, Condition::Summ])
    } else {
        Condition::parse(text)
            .map(|c| vec![c])
            .ok_or_else(|| anyhow!("unknown condition {text:?}; expected dpm, summ, or both"))
    }
}

/// Loads a stored suite (reverifying its digests) or regenerates it.
fn obtain_suite(dir: Option<&Path>, seed: u64) -> Result<Suite> {
    match dir {
        Some(dir) => load_suite(dir)
            .with_context(|| format!("loading suite from {}", dir.display())),
        None => Ok(generate_suite(seed)),
    }
}

fn gen_suite(seed: u64, out: &Path) -> Result<()> {
    let suite = generate_suite(seed);
    store_suite(&suite, out).context("storing suite")?;
    println!(
        "wrote {} cases (seed {seed}, digest {}) to {}",
        suite.cases.len(),
        suite.digest(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run(
    exp: u8,
    backend: &str,
    budget: &str,
    condition: &str,
    seed: u64,
    out: &Path,
    suite_dir: Option<&Path>,
    resamples: u32,
    replays: u32,
    verify: bool,
) -> Result<()> {
    let spec = parse_backend(backend)?;
    let suite = obtain_suite(suite_dir, seed)?;
    if verify {
        verify_pipeline(seed).context("pipeline self-check")?;
    }
    match exp {
        1 => {
            let scope = FidelityScope {
                budgets: parse_budget_slice(budget)?,
                conditions: parse_condition_slice(condition)?,
            };
            let study = run_fidelity_study_scoped(&suite, &spec, seed, resamples, &scope)?;
            write_fidelity_study(&study, out)?;
            report_missing(&study.missing, verify)?;
            println!(
                "study 1: {} runs, {} stats rows -> {}",
                study.records.len(),
                study.rows.len(),
                out.display()
            );
        }
        2 => {
            let reports = run_replay_study_suite(&suite, &spec, seed, replays)?;
            write_replay_study(&reports, out)?;
            if verify && spec.is_deterministic() {
                let drifted: Vec<&str> = reports
                    .iter()
                    .filter(|r| r.unique_hashes != 1 || r.max_edit != 0.0)
                    .map(|r| r.case_id.as_str())
                    .collect();
                if !drifted.is_empty() {
                    bail!("deterministic backend drifted on: {}", drifted.join(", "));
                }
            }
            println!("study 2: {} cells -> {}", reports.len(), out.display());
        }
        3 => {
            let scope = FidelityScope {
                budgets: parse_budget_slice(budget)?,
                conditions: parse_condition_slice(condition)?,
            };
            let study = run_fidelity_study_scoped(&suite, &spec, seed, resamples, &scope)?;
            let rows = run_sensitivity_study(&suite, &study);
            write_fidelity_study(&study, out)?;
            write_sensitivity_study(&rows, out)?;
            report_missing(&study.missing, verify)?;
            println!(
                "study 3: {} runs re-keyed into {} ratio rows -> {}",
                study.records.len(),
                rows.len(),
                out.display()
            );
        }
        other => unreachable!("clap bounds the study number, got {other}"),
    }
    Ok(())
}

fn report_missing(missing: &[dpm_core::experiment::MissingCell], verify: bool) -> Result<()> {
    if missing.is_empty() {
        return Ok(());
    }
    for cell in missing {
        eprintln!("missing cell {}: {}", cell.run_id, cell.message);
    }
    if verify {
        bail!("{} cells went missing under --verify", missing.len());
    }
    Ok(())
}

fn replay(
    case: &str,
    condition: &str,
    replays: u32,
    budget: &str,
    backend: &str,
    seed: u64,
    suite_dir: Option<&Path>,
) -> Result<()> {
    let spec = parse_backend(backend)?;
    let budget = parse_budget(budget)?;
    let suite = obtain_suite(suite_dir, seed)?;
    let bundle = suite
        .find(case)
        .ok_or_else(|| anyhow!("unknown case {case:?}; try one of loan_L01..L05, claim_C01..C05, loan_001, claim_001"))?;
    // The same ladder the replay study uses, so one-off probes are
    // comparable with study cells.
    let base_seed = derive_run_seed(seed, &format!("replay__{case}"));
    let mut reports = Vec::new();
    for condition in parse_condition_slice(condition)? {
        reports.push(replay_study(bundle, condition, budget, &spec, replays, base_seed)?);
    }
    println!("{}", serde_json::to_string_pretty(&reports)?);
    Ok(())
}

fn stats(results: &Path, resamples: Option<u32>, seed: Option<u64>) -> Result<()> {
    let scores_path = results.join("scores.json");
    let body = std::fs::read_to_string(&scores_path)
        .with_context(|| format!("reading {}", scores_path.display()))?;
    let records: Vec<ScoreRecord> =
        serde_json::from_str(&body).with_context(|| format!("parsing {}", scores_path.display()))?;
    // The manifest pins the parameters the tables were built with; explicit
    // flags override it, and a missing manifest falls back to the defaults.
    let manifest: Option<ExperimentManifest> = std::fs::read_to_string(results.join("manifest.json"))
        .ok()
        .and_then(|body| serde_json::from_str(&body).ok());
    let resamples = resamples
        .or_else(|| manifest.as_ref().map(|m| m.resamples))
        .unwrap_or(DEFAULT_RESAMPLES);
    let seed = seed
        .or_else(|| manifest.as_ref().map(|m| m.seed))
        .unwrap_or(DEFAULT_SUITE_SEED);
    let rows = stats_rows_from_records(&records, resamples, seed)?;
    print!("{}", fidelity_table_csv(&rows));
    Ok(())
}

fn tams(replay: bool, audit: bool, isolation: bool, ratio: f64, threshold: f64) -> Result<()> {
    let decision = tams_select_with(
        &TamsInput {
            requires_replay: replay,
            requires_audit: audit,
            requires_isolation: isolation,
            compression_ratio: ratio,
        },
        threshold,
    );
    println!("{}", serde_json::to_string_pretty(&decision)?);
    Ok(())
}

fn audit_export(
    run: &str,
    out: Option<&Path>,
    backend: &str,
    seed: u64,
    suite_dir: Option<&Path>,
    audit: &str,
) -> Result<()> {
    let parts: Vec<&str> = run.split("__").collect();
    let &[case_id, condition, budget] = parts.as_slice() else {
        bail!("run id {run:?} is not of the form <case>__<CONDITION>__<budget>");
    };
    let condition = Condition::parse(condition)
        .ok_or_else(|| anyhow!("run id condition {condition:?} is neither DPM nor SUMM"))?;
    let budget = parse_budget(budget)
        .with_context(|| format!("run id budget segment {budget:?}"))?;
    let capture = match audit {
        "digest" => CaptureMode::DigestOnly,
        "full" => CaptureMode::Full,
        other => bail!("unknown capture mode {other:?}; expected digest or full"),
    };
    let spec = parse_backend(backend)?;
    let suite = obtain_suite(suite_dir, seed)?;
    let bundle = suite
        .find(case_id)
        .ok_or_else(|| anyhow!("unknown case {case_id:?} in run id"))?;

    // The log is immutable and every seed is derived, so re-executing the
    // cell reproduces the original trail record for record.
    let rerun = run_single(bundle, condition, budget, &spec, capture, seed)?;
    let default_path = PathBuf::from(format!("{run}.audit.jsonl"));
    let path = out.unwrap_or(&default_path);
    rerun.ledger.export(path).context("writing export archive")?;
    println!(
        "exported {} records (+manifest) for {run} to {}",
        rerun.ledger.export_lines().len() - 1,
        path.display()
    );
    Ok(())
}
