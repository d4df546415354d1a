//! Synthetic regulated-decisioning cases, constructed by inversion: the
//! decision label and its required evidence are sampled first, then document
//! events are emitted that entail exactly that decision.
//!
//! Everything is seeded: regenerating a case from (domain, seed, scale)
//! reproduces it byte for byte, timestamps included. Distractor prose is
//! template-generated and digit-free, so the anchor grammar can never match
//! inside it — the label is recomputable from the anchors alone.
//!
//! Generation is self-calibrating: each candidate case is run through the
//! real extractive pipeline and accepted only if the tight budget provably
//! loses anchors under consolidation (large cases) while the moderate and
//! loose budgets retain every required item under both conditions. A case
//! failing calibration is regenerated from the next attempt's RNG stream.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anchor::DISQUALIFIER_MARK;
use crate::audit::{AuditLedger, CaptureMode};
use crate::backends::ExtractiveBackend;
use crate::decision::DecisionLabel;
use crate::event_log::{EventKind, EventLog};
use crate::hashing::sha256_hex;
use crate::projection::{project, Budget, Domain, TaskSpec};
use crate::summ::run_trajectory;
use crate::view::section_texts;

/// Default master seed for suite generation.
pub const DEFAULT_SUITE_SEED: u64 = 20260420;

/// Candidate regenerations before giving up on a seed. Calibration failures
/// are rare by construction; hitting this bound indicates a broken change to
/// the generator or the extractive rules, not bad luck.
const MAX_GEN_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseScale {
    Large,
    Small,
}

/// What a correct run must recover, fixed before any event text exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseGroundTruth {
    pub label: DecisionLabel,
    /// Verbatim strings (amounts, dates, identifiers, percentages) that a
    /// faithful memory surface must carry.
    pub required_anchors: Vec<String>,
    /// The subset of anchors living on DISQUALIFIER lines; non-empty iff the
    /// label is DENY.
    pub disqualifiers: Vec<String>,
    /// Key phrases an adequate rationale must reference.
    pub required_reasoning_keys: Vec<String>,
    /// Provision identifiers compliance coverage is measured against.
    pub required_provisions: Vec<String>,
}

/// One fully materialized case: its event log, task, and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseBundle {
    pub case_id: String,
    pub tenant_id: String,
    pub domain: Domain,
    pub scale: CaseScale,
    pub generator_seed: u64,
    pub log: EventLog,
    pub task: TaskSpec,
    pub truth: CaseGroundTruth,
}

impl CaseBundle {
    pub fn event_count(&self) -> usize {
        self.log.len()
    }

    pub fn total_chars(&self) -> usize {
        self.log.total_chars()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CaseGenError {
    #[error("case {case_id} failed calibration after {attempts} attempts: {violations:?}")]
    Calibration {
        case_id: String,
        attempts: u64,
        violations: Vec<String>,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Log(#[from] crate::event_log::EventLogError),
    #[error("case {case_id} digest mismatch: manifest {expected}, log {actual}")]
    CaseDigestMismatch {
        case_id: String,
        expected: String,
        actual: String,
    },
    #[error("suite digest mismatch: manifest {expected}, recomputed {actual}")]
    SuiteDigestMismatch { expected: String, actual: String },
}

// ---------------------------------------------------------------------------
// Text banks. All distractor and framing prose is digit-free so the anchor
// grammar cannot match inside it.
// ---------------------------------------------------------------------------

const SUBJECTS: &[&str] = &[
    "The underwriting analyst",
    "A senior reviewer",
    "The processing clerk",
    "The branch coordinator",
    "The records custodian",
    "An intake specialist",
    "The compliance liaison",
    "The staff appraiser",
];

const VERBS: &[&str] = &[
    "reviewed", "catalogued", "annotated", "circulated", "summarized", "indexed", "reconciled",
    "archived",
];

const OBJECTS: &[&str] = &[
    "the correspondence folder",
    "the supporting paperwork",
    "the intake questionnaire",
    "the scanned exhibits",
    "the routing memo",
    "the vendor invoice copies",
    "the interview transcript",
    "the site visit notes",
];

const TAILS: &[&str] = &[
    "without noting any exceptions",
    "before the weekly sync",
    "for the permanent record",
    "ahead of the committee meeting",
    "per standard operating procedure",
    "and filed it under general notes",
    "while awaiting counterparty response",
    "with no change to the checklist",
];

const SHORT_PAD: &[&str] = &[
    "Notes were filed without exception.",
    "No follow up was required.",
    "The folder went back to records.",
    "Routine check completed.",
    "Nothing further was noted.",
    "The entry was initialed as received.",
];

const CURRENCY_LEADS: &[&str] = &[
    "Verified income of",
    "Outstanding balance of",
    "Reserve amount of",
    "Appraised value of",
    "Collateral valued at",
    "Monthly obligation of",
    "Invoice total of",
    "Settlement amount of",
];

const DATE_LEADS: &[&str] = &[
    "Filed on",
    "Effective date",
    "Received on",
    "Issued on",
    "Renewal recorded for",
    "Signed on",
    "Postmarked",
];

const ID_LEADS: &[&str] = &[
    "Reference number",
    "Tracking code",
    "Account reference",
    "File reference",
    "Docket entry",
    "Confirmation code",
];

const PERCENT_LEADS: &[&str] = &[
    "Quoted rate of",
    "Utilization measured at",
    "Coverage share of",
    "Fee assessed at",
    "Ratio reported as",
];

/// Identifier-anchor prefixes. Deliberately disjoint from the provision-id
/// prefixes below so a fact identifier can never read as a provision.
const ID_PREFIXES: &[&str] = &["APP", "REF", "DOC", "ACM", "TRX", "FIL", "REC", "CSE"];

const DISQUALIFIER_PHRASES: &[&str] = &[
    "hard stop flagged under",
    "adverse action trigger recorded as",
    "exclusion applies per entry",
    "mandatory decline noted against",
];

const ASSESSMENT_TAILS: &[&str] = &[
    "appears satisfactory on current evidence",
    "is adequately supported by the file",
    "meets the program guideline",
    "raises no outstanding concern",
];

const LOAN_KEYS: &[&str] = &[
    "debt service coverage",
    "income stability",
    "collateral adequacy",
    "repayment capacity",
    "credit utilization trend",
    "employment continuity",
    "reserve sufficiency",
    "loan to value posture",
];

const CLAIM_KEYS: &[&str] = &[
    "coverage applicability",
    "loss causation",
    "documentation completeness",
    "policy period alignment",
    "deductible treatment",
    "claimed amount reasonableness",
    "duty of disclosure",
    "subrogation potential",
];

const LOAN_PROVISIONS: &[(&str, &str)] = &[
    ("LQ-201", "income verification is mandatory before approval"),
    ("LQ-304", "a current appraisal must support the collateral value"),
    ("LQ-412", "adverse findings require written applicant notice"),
    ("LQ-509", "debt ratios must satisfy the program ceiling"),
    ("LQ-618", "identity checks must be completed and retained"),
];

const CLAIM_PROVISIONS: &[(&str, &str)] = &[
    ("CP-110", "losses must fall within the active policy period"),
    ("CP-225", "proof of loss must accompany the claim file"),
    ("CP-340", "exclusion review is required before settlement"),
    ("CP-455", "reserve postings must match the adjuster estimate"),
    ("CP-560", "salvage rights must be preserved in writing"),
];

fn domain_question(domain: Domain) -> &'static str {
    match domain {
        Domain::LoanQualification => {
            "Does the applicant qualify for the requested loan under the stated program terms?"
        }
        Domain::ClaimsAdjudication => {
            "Should the submitted claim be approved for payment under the active policy?"
        }
    }
}

fn domain_keys(domain: Domain) -> &'static [&'static str] {
    match domain {
        Domain::LoanQualification => LOAN_KEYS,
        Domain::ClaimsAdjudication => CLAIM_KEYS,
    }
}

fn domain_provisions(domain: Domain) -> &'static [(&'static str, &'static str)] {
    match domain {
        Domain::LoanQualification => LOAN_PROVISIONS,
        Domain::ClaimsAdjudication => CLAIM_PROVISIONS,
    }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Everything that fixes a case's identity before any randomness runs.
struct CaseIdentity {
    case_id: String,
    tenant_id: String,
    domain: Domain,
    scale: CaseScale,
    label: DecisionLabel,
    /// Fixed small-case event count (the two small cases have exact counts);
    /// None samples from the large range.
    event_count: Option<usize>,
    ts_base: DateTime<Utc>,
}

/// Generates one case from (domain, seed, scale). Case identity (id, tenant,
/// label) is derived from the seed; suite generation assigns its own names
/// via the shared internal path.
pub fn generate_case(domain: Domain, seed: u64, scale: CaseScale) -> CaseBundle {
    let prefix = match domain {
        Domain::LoanQualification => "loan",
        Domain::ClaimsAdjudication => "claim",
    };
    let identity = CaseIdentity {
        case_id: format!("{prefix}_{:06x}", seed & 0xff_ffff),
        tenant_id: format!("{prefix}-tenant-{:04x}", (seed >> 20) & 0xffff),
        domain,
        scale,
        label: if seed % 2 == 1 {
            DecisionLabel::Approve
        } else {
            DecisionLabel::Deny
        },
        event_count: match scale {
            CaseScale::Large => None,
            CaseScale::Small => Some(if seed % 2 == 1 { 22 } else { 16 }),
        },
        ts_base: Utc.with_ymd_and_hms(2026, 3, 2, 8, 0, 0).unwrap(),
    };
    build_case(&identity, seed)
}

fn build_case(identity: &CaseIdentity, seed: u64) -> CaseBundle {
    let mut last_violations = Vec::new();
    for attempt in 0..MAX_GEN_ATTEMPTS {
        let bundle = attempt_case(identity, seed, attempt);
        let mut violations = match validate_case(&bundle) {
            Ok(()) => Vec::new(),
            Err(v) => v,
        };
        if violations.is_empty() {
            violations = match calibrate_case(&bundle) {
                Ok(()) => Vec::new(),
                Err(v) => v,
            };
        }
        if violations.is_empty() {
            return bundle;
        }
        last_violations = violations;
    }
    // Unreachable under the shipped parameters; a panic here means the
    // generator and the extractive rules have drifted apart.
    panic!(
        "{}",
        CaseGenError::Calibration {
            case_id: identity.case_id.clone(),
            attempts: MAX_GEN_ATTEMPTS,
            violations: last_violations,
        }
    );
}

fn attempt_rng(seed: u64, attempt: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"casegen");
    hasher.update(seed.to_le_bytes());
    hasher.update(attempt.to_le_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// One full candidate build from a single RNG stream.
fn attempt_case(identity: &CaseIdentity, seed: u64, attempt: u64) -> CaseBundle {
    let mut rng = attempt_rng(seed, attempt);
    let domain = identity.domain;
    let large = identity.scale == CaseScale::Large;

    let n = identity
        .event_count
        .unwrap_or_else(|| rng.gen_range(82..=96));
    // Character targets: large cases center on the corpus trajectory mean so
    // the three budgets land on compression ratios of about 20/5/2; the two
    // small cases match their published approximate sizes.
    let char_target = if large {
        rng.gen_range(26_400..=27_100)
    } else if n == 22 {
        rng.gen_range(2_345..=2_368)
    } else {
        rng.gen_range(2_258..=2_281)
    };
    let (n_anchors, n_assess, n_prov) = if large { (15, 4, 4) } else { (5, 2, 2) };
    let n_disq = match (identity.label, large) {
        (DecisionLabel::Deny, true) => 2,
        (DecisionLabel::Deny, false) => 1,
        (DecisionLabel::Approve, _) => 0,
    };

    // Payload positions (0-based event indices). Windows: anchors live in
    // the first four-fifths of the trajectory, disqualifiers in its later
    // span, assessments and provisions early. A two-anchor quota in the
    // final stretch of the anchor window keeps the tight-budget consolidation
    // loss real for every large case, not just in expectation.
    let anchor_lo = std::cmp::max(1, n / 20);
    let anchor_hi = (n * 78) / 100;
    let disq_lo = (n * 55) / 100;
    let late_lo = (n * 68) / 100;
    let payload_hi = n / 2;

    // Assessments and provisions draw from the narrow early window first;
    // anchors have far more room and can route around whatever is taken.
    let mut taken = BTreeSet::new();
    let assess_pos = sample_positions(&mut rng, 1, payload_hi, n_assess, &mut taken);
    let prov_pos = sample_positions(&mut rng, 1, payload_hi, n_prov, &mut taken);
    let disq_pos = sample_positions(&mut rng, disq_lo, anchor_hi, n_disq, &mut taken);
    let late_quota = if large { 2 } else { 0 };
    let late_pos = sample_positions(&mut rng, late_lo, anchor_hi, late_quota, &mut taken);
    let plain_pos = sample_positions(
        &mut rng,
        anchor_lo,
        anchor_hi,
        n_anchors - n_disq - late_quota,
        &mut taken,
    );

    // Anchor values, unique and substring-free against each other.
    let mut anchor_values: Vec<String> = Vec::new();
    let mut anchors_at: Vec<(usize, String, bool)> = Vec::new(); // (pos, value, is_disq)
    let mut positions: Vec<(usize, bool)> = disq_pos.iter().map(|&p| (p, true)).collect();
    positions.extend(late_pos.iter().map(|&p| (p, false)));
    positions.extend(plain_pos.iter().map(|&p| (p, false)));
    for (i, &(pos, is_disq)) in positions.iter().enumerate() {
        let value = fresh_anchor_value(&mut rng, i, &anchor_values);
        anchor_values.push(value.clone());
        anchors_at.push((pos, value, is_disq));
    }

    let keys = sample_strs(&mut rng, domain_keys(domain), n_assess);
    let provisions = sample_indices(&mut rng, domain_provisions(domain).len(), n_prov)
        .into_iter()
        .map(|i| domain_provisions(domain)[i])
        .collect::<Vec<_>>();

    // Event bodies: every event opens with a distractor line; payload lines
    // follow. Large events carry occasional extra prose before padding.
    let mut bodies: Vec<Vec<String>> = (0..n)
        .map(|_| {
            let mut lines = vec![distractor_sentence(&mut rng)];
            if large && rng.gen_bool(0.45) {
                lines.push(distractor_sentence(&mut rng));
            }
            lines
        })
        .collect();
    for (pos, value, is_disq) in &anchors_at {
        let line = if *is_disq {
            let phrase = DISQUALIFIER_PHRASES[rng.gen_range(0..DISQUALIFIER_PHRASES.len())];
            format!("{DISQUALIFIER_MARK} {phrase} {value}.")
        } else {
            anchor_host_line(&mut rng, value)
        };
        bodies[*pos].push(line);
    }
    for (i, &pos) in assess_pos.iter().enumerate() {
        let tail = ASSESSMENT_TAILS[rng.gen_range(0..ASSESSMENT_TAILS.len())];
        bodies[pos].push(format!("ASSESSMENT: {} {tail}.", keys[i]));
    }
    for (i, &pos) in prov_pos.iter().enumerate() {
        let (id, clause) = provisions[i];
        bodies[pos].push(format!("PROVISION {id}: {clause}."));
    }

    // Pad with distractor prose up to the character target. Padding only
    // appends lines, so gists, payloads, and hence calibration are
    // unaffected; only the trajectory volume grows.
    let total = |bodies: &[Vec<String>]| -> usize {
        bodies
            .iter()
            .map(|lines| lines.iter().map(|l| l.chars().count()).sum::<usize>() + lines.len() - 1)
            .sum()
    };
    while total(&bodies) < char_target {
        let idx = rng.gen_range(0..n);
        let line = if large {
            distractor_sentence(&mut rng)
        } else {
            SHORT_PAD[rng.gen_range(0..SHORT_PAD.len())].to_string()
        };
        bodies[idx].push(line);
    }

    let mut log = EventLog::new(&identity.tenant_id, &identity.case_id);
    for (i, lines) in bodies.iter().enumerate() {
        let ts = identity.ts_base + Duration::seconds(137 * i as i64);
        log.append_at(kind_for_seq(i as u64 + 1), &lines.join("\n"), ts)
            .expect("generated content is non-empty");
    }

    anchors_at.sort_by_key(|(pos, _, _)| *pos);
    let truth = CaseGroundTruth {
        label: identity.label,
        required_anchors: anchors_at.iter().map(|(_, v, _)| v.clone()).collect(),
        disqualifiers: anchors_at
            .iter()
            .filter(|(_, _, d)| *d)
            .map(|(_, v, _)| v.clone())
            .collect(),
        required_reasoning_keys: keys,
        required_provisions: provisions.iter().map(|(id, _)| id.to_string()).collect(),
    };
    let task = TaskSpec {
        domain,
        question: domain_question(domain).to_string(),
        provisions_universe: truth.required_provisions.clone(),
    };
    CaseBundle {
        case_id: identity.case_id.clone(),
        tenant_id: identity.tenant_id.clone(),
        domain,
        scale: identity.scale,
        generator_seed: seed,
        log,
        task,
        truth,
    }
}

fn kind_for_seq(seq: u64) -> EventKind {
    if seq % 13 == 0 {
        EventKind::Inference
    } else if seq % 7 == 0 {
        EventKind::ToolOutput
    } else if seq % 5 == 0 {
        EventKind::UserMessage
    } else {
        EventKind::DocumentChunk
    }
}

fn sample_positions(
    rng: &mut ChaCha8Rng,
    lo: usize,
    hi: usize,
    k: usize,
    taken: &mut BTreeSet<usize>,
) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut guard = 0;
    while out.len() < k {
        let p = rng.gen_range(lo..hi);
        if taken.insert(p) {
            out.push(p);
        }
        guard += 1;
        assert!(guard < 100_000, "payload windows too dense to place {k} items");
    }
    out
}

fn sample_strs(rng: &mut ChaCha8Rng, bank: &[&str], k: usize) -> Vec<String> {
    sample_indices(rng, bank.len(), k)
        .into_iter()
        .map(|i| bank[i].to_string())
        .collect()
}

fn sample_indices(rng: &mut ChaCha8Rng, len: usize, k: usize) -> Vec<usize> {
    assert!(k <= len);
    let mut taken = BTreeSet::new();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let i = rng.gen_range(0..len);
        if taken.insert(i) {
            out.push(i);
        }
    }
    out
}

fn distractor_sentence(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} {} {} {}.",
        SUBJECTS[rng.gen_range(0..SUBJECTS.len())],
        VERBS[rng.gen_range(0..VERBS.len())],
        OBJECTS[rng.gen_range(0..OBJECTS.len())],
        TAILS[rng.gen_range(0..TAILS.len())],
    )
}

/// Draws an anchor value of the kind cycled by `ordinal`, rejecting values
/// in a substring relation with any existing anchor (either direction), so
/// recovery scoring can never double-count.
fn fresh_anchor_value(rng: &mut ChaCha8Rng, ordinal: usize, existing: &[String]) -> String {
    loop {
        let value = match ordinal % 4 {
            0 => {
                let whole: u32 = rng.gen_range(1_200..=989_999);
                format!("${}.{:02}", thousands(whole), rng.gen_range(0..100u32))
            }
            1 => format!(
                "{:04}-{:02}-{:02}",
                rng.gen_range(2024..=2026),
                rng.gen_range(1..=12),
                rng.gen_range(1..=28)
            ),
            2 => format!(
                "{}-{}",
                ID_PREFIXES[rng.gen_range(0..ID_PREFIXES.len())],
                rng.gen_range(100..=999_999)
            ),
            _ => format!("{}.{:02}%", rng.gen_range(1..=97), rng.gen_range(0..100u32)),
        };
        let collides = existing
            .iter()
            .any(|e| e.contains(&value) || value.contains(e));
        if !collides {
            return value;
        }
    }
}

fn thousands(n: u32) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn anchor_host_line(rng: &mut ChaCha8Rng, value: &str) -> String {
    let lead = if value.starts_with('$') {
        CURRENCY_LEADS[rng.gen_range(0..CURRENCY_LEADS.len())]
    } else if value.ends_with('%') {
        PERCENT_LEADS[rng.gen_range(0..PERCENT_LEADS.len())]
    } else if value.as_bytes()[0].is_ascii_digit() {
        DATE_LEADS[rng.gen_range(0..DATE_LEADS.len())]
    } else {
        ID_LEADS[rng.gen_range(0..ID_LEADS.len())]
    };
    format!("{lead} {value}.")
}

// ---------------------------------------------------------------------------
// Validation and calibration
// ---------------------------------------------------------------------------

/// Structural checks: every invariant a bundle must satisfy regardless of
/// any pipeline behavior. Returns the list of violations.
pub fn validate_case(bundle: &CaseBundle) -> Result<(), Vec<String>> {
    let mut violations = Vec::new();
    let n = bundle.event_count();
    let chars = bundle.total_chars();
    match bundle.scale {
        CaseScale::Large => {
            if !(82..=96).contains(&n) {
                violations.push(format!("large case has {n} events, want 82..=96"));
            }
            if !(26_000..=28_000).contains(&chars) {
                violations.push(format!("large case has {chars} chars, want 26000..=28000"));
            }
        }
        CaseScale::Small => {
            if !(16..=22).contains(&n) {
                violations.push(format!("small case has {n} events, want 16..=22"));
            }
            if !(2_250..=2_400).contains(&chars) {
                violations.push(format!("small case has {chars} chars, want 2250..=2400"));
            }
        }
    }
    let full_text: String = bundle
        .log
        .events()
        .iter()
        .map(|e| e.content.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    for anchor in &bundle.truth.required_anchors {
        if !full_text.contains(anchor) {
            violations.push(format!("anchor {anchor:?} not present verbatim in any event"));
        }
    }
    let deny = bundle.truth.label == DecisionLabel::Deny;
    if deny != !bundle.truth.disqualifiers.is_empty() {
        violations.push("label must be DENY exactly when disqualifiers exist".to_string());
    }
    for d in &bundle.truth.disqualifiers {
        let hosted = bundle.log.events().iter().any(|e| {
            e.content
                .lines()
                .any(|l| l.starts_with(DISQUALIFIER_MARK) && l.contains(d))
        });
        if !hosted {
            violations.push(format!("disqualifier {d:?} has no DISQUALIFIER line"));
        }
    }
    if !bundle.truth.disqualifiers.iter().all(|d| {
        bundle.truth.required_anchors.contains(d)
    }) {
        violations.push("disqualifiers must be a subset of required anchors".to_string());
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Behavioral calibration against the real extractive pipeline:
///
/// * moderate and loose budgets retain every required item under both
///   conditions (so generous-budget deltas are identically zero), and
/// * for large cases the tight budget provably loses at least one anchor
///   under consolidation while projection still recovers them all (so the
///   tight-budget gap has the right sign case by case).
pub fn calibrate_case(bundle: &CaseBundle) -> Result<(), Vec<String>> {
    let backend = ExtractiveBackend::new();
    let mut violations = Vec::new();

    let surface_for = |budget: Budget, dpm: bool| -> String {
        let mut ledger = AuditLedger::new("calibration", CaptureMode::DigestOnly);
        if dpm {
            project(&bundle.log, &bundle.task, budget, &backend, &mut ledger, 0)
                .expect("extractive projection cannot fail")
                .surface
        } else {
            run_trajectory(&bundle.log, budget, &backend, &mut ledger, 0, false)
                .expect("extractive consolidation cannot fail")
                .final_summary
                .text
        }
    };
    let deny = bundle.truth.label == DecisionLabel::Deny;
    let check_complete = |surface: &str, what: &str, violations: &mut Vec<String>| {
        for anchor in &bundle.truth.required_anchors {
            if !surface.contains(anchor.as_str()) {
                violations.push(format!("{what}: anchor {anchor:?} lost"));
            }
        }
        let (_, reasoning, compliance) = section_texts(surface);
        for key in &bundle.truth.required_reasoning_keys {
            if !reasoning.to_lowercase().contains(&key.to_lowercase()) {
                violations.push(format!("{what}: reasoning key {key:?} lost"));
            }
        }
        for id in &bundle.truth.required_provisions {
            if !compliance.to_lowercase().contains(&id.to_lowercase()) {
                violations.push(format!("{what}: provision {id:?} lost"));
            }
        }
        if surface.contains(DISQUALIFIER_MARK) != deny {
            violations.push(format!("{what}: disqualifier presence disagrees with label"));
        }
    };

    for budget in [Budget::moderate(), Budget::loose()] {
        let label = budget.label.as_str();
        check_complete(
            &surface_for(budget, true),
            &format!("projection/{label}"),
            &mut violations,
        );
        check_complete(
            &surface_for(budget, false),
            &format!("consolidation/{label}"),
            &mut violations,
        );
    }

    // Tight budget: projection still recovers every anchor (and keeps the
    // disqualifier signal faithful)...
    let dpm_tight = surface_for(Budget::tight(), true);
    for anchor in &bundle.truth.required_anchors {
        if !dpm_tight.contains(anchor.as_str()) {
            violations.push(format!("projection/tight: anchor {anchor:?} lost"));
        }
    }
    if dpm_tight.contains(DISQUALIFIER_MARK) != deny {
        violations.push("projection/tight: disqualifier presence disagrees with label".to_string());
    }
    // ...while the consolidation chain cannot hold all anchors plus its
    // distractor carryover. Small cases are exempt: their whole trajectory
    // is near the tight budget, so nothing binds there.
    if bundle.scale == CaseScale::Large {
        let summ_tight = surface_for(Budget::tight(), false);
        let lost = bundle
            .truth
            .required_anchors
            .iter()
            .any(|a| !summ_tight.contains(a.as_str()));
        if !lost {
            violations
                .push("consolidation/tight: retained every anchor; budget does not bind".into());
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

// ---------------------------------------------------------------------------
// Suite
// ---------------------------------------------------------------------------

/// The evaluation suite: ten large cases (five per domain, labels balanced
/// five DENY / five APPROVE) plus the two small replay-study cases.
#[derive(Debug, Clone)]
pub struct Suite {
    pub seed: u64,
    pub cases: Vec<CaseBundle>,
}

impl Suite {
    pub fn digest(&self) -> String {
        let concat: String = self.cases.iter().map(|c| c.log.chain_digest()).collect();
        sha256_hex(&concat)
    }

    pub fn large_cases(&self) -> impl Iterator<Item = &CaseBundle> {
        self.cases.iter().filter(|c| c.scale == CaseScale::Large)
    }

    pub fn small_cases(&self) -> impl Iterator<Item = &CaseBundle> {
        self.cases.iter().filter(|c| c.scale == CaseScale::Small)
    }

    pub fn find(&self, case_id: &str) -> Option<&CaseBundle> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    pub fn mean_large_chars(&self) -> f64 {
        let (sum, count) = self
            .large_cases()
            .fold((0usize, 0usize), |(s, k), c| (s + c.total_chars(), k + 1));
        sum as f64 / count as f64
    }
}

fn derive_case_seed(master: u64, ordinal: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"suite-case");
    hasher.update(master.to_le_bytes());
    hasher.update(ordinal.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Generates the full 12-case suite from one master seed.
pub fn generate_suite(seed: u64) -> Suite {
    const LOAN_TENANTS: [&str; 5] = [
        "ridgeline-credit",
        "harbor-mutual",
        "stonebridge-financial",
        "lakeview-lending",
        "cobalt-bank",
    ];
    const CLAIM_TENANTS: [&str; 5] = [
        "aegis-assurance",
        "northwind-insurance",
        "pillar-casualty",
        "beacon-underwriters",
        "summit-coverage",
    ];

    let mut inventory: Vec<CaseIdentity> = Vec::new();
    let base = Utc.with_ymd_and_hms(2026, 3, 2, 8, 0, 0).unwrap();
    for i in 1..=5u64 {
        // Labels alternate within each domain, offset so the suite splits
        // five DENY / five APPROVE overall.
        inventory.push(CaseIdentity {
            case_id: format!("loan_L{i:02}"),
            tenant_id: LOAN_TENANTS[i as usize - 1].to_string(),
            domain: Domain::LoanQualification,
            scale: CaseScale::Large,
            label: if i % 2 == 1 {
                DecisionLabel::Approve
            } else {
                DecisionLabel::Deny
            },
            event_count: None,
            ts_base: base + Duration::days(i as i64 - 1),
        });
    }
    for i in 1..=5u64 {
        inventory.push(CaseIdentity {
            case_id: format!("claim_C{i:02}"),
            tenant_id: CLAIM_TENANTS[i as usize - 1].to_string(),
            domain: Domain::ClaimsAdjudication,
            scale: CaseScale::Large,
            label: if i % 2 == 0 {
                DecisionLabel::Approve
            } else {
                DecisionLabel::Deny
            },
            event_count: None,
            ts_base: base + Duration::days(i as i64 + 4),
        });
    }
    inventory.push(CaseIdentity {
        case_id: "loan_001".to_string(),
        tenant_id: "willow-credit-union".to_string(),
        domain: Domain::LoanQualification,
        scale: CaseScale::Small,
        label: DecisionLabel::Approve,
        event_count: Some(22),
        ts_base: base + Duration::days(10),
    });
    inventory.push(CaseIdentity {
        case_id: "claim_001".to_string(),
        tenant_id: "crestline-insurance".to_string(),
        domain: Domain::ClaimsAdjudication,
        scale: CaseScale::Small,
        label: DecisionLabel::Deny,
        event_count: Some(16),
        ts_base: base + Duration::days(11),
    });

    let cases = inventory
        .iter()
        .enumerate()
        .map(|(ordinal, identity)| build_case(identity, derive_case_seed(seed, ordinal as u64)))
        .collect();
    Suite { seed, cases }
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// The per-case sidecar next to the events file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CaseMeta {
    case_id: String,
    tenant_id: String,
    domain: Domain,
    scale: CaseScale,
    generator_seed: u64,
    event_count: usize,
    total_chars: usize,
    chain_digest: String,
    task: TaskSpec,
    truth: CaseGroundTruth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SuiteManifest {
    schema: String,
    seed: u64,
    suite_digest: String,
    cases: Vec<SuiteCaseRef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SuiteCaseRef {
    case_id: String,
    dir: String,
    events_file: String,
    chain_digest: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CaseGenError + '_ {
    move |source| CaseGenError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes the suite under `dir`: one directory per case holding the events
/// JSONL and a `case.json` sidecar, plus a digest-bearing `suite.json`.
pub fn store_suite(suite: &Suite, dir: &Path) -> Result<(), CaseGenError> {
    let cases_dir = dir.join("cases");
    fs::create_dir_all(&cases_dir).map_err(io_err(&cases_dir))?;
    let mut refs = Vec::new();
    for case in &suite.cases {
        let case_dir = cases_dir.join(&case.case_id);
        fs::create_dir_all(&case_dir).map_err(io_err(&case_dir))?;
        let events_file = EventLog::default_filename(&case.tenant_id, &case.case_id);
        case.log.store(&case_dir.join(&events_file))?;
        let meta = CaseMeta {
            case_id: case.case_id.clone(),
            tenant_id: case.tenant_id.clone(),
            domain: case.domain,
            scale: case.scale,
            generator_seed: case.generator_seed,
            event_count: case.event_count(),
            total_chars: case.total_chars(),
            chain_digest: case.log.chain_digest(),
            task: case.task.clone(),
            truth: case.truth.clone(),
        };
        let meta_path = case_dir.join("case.json");
        let body = serde_json::to_string_pretty(&meta).expect("meta serializes");
        fs::write(&meta_path, body).map_err(io_err(&meta_path))?;
        refs.push(SuiteCaseRef {
            case_id: case.case_id.clone(),
            dir: format!("cases/{}", case.case_id),
            events_file,
            chain_digest: case.log.chain_digest(),
        });
    }
    let manifest = SuiteManifest {
        schema: "dpm-suite-v1".to_string(),
        seed: suite.seed,
        suite_digest: suite.digest(),
        cases: refs,
    };
    let manifest_path = dir.join("suite.json");
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, body).map_err(io_err(&manifest_path))
}

/// Loads a stored suite, reverifying every per-case chain digest and the
/// suite digest against the manifest.
pub fn load_suite(dir: &Path) -> Result<Suite, CaseGenError> {
    let manifest_path = dir.join("suite.json");
    let body = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: SuiteManifest =
        serde_json::from_str(&body).map_err(|source| CaseGenError::Json {
            path: manifest_path.display().to_string(),
            source,
        })?;
    let mut cases = Vec::with_capacity(manifest.cases.len());
    for case_ref in &manifest.cases {
        let case_dir = dir.join(&case_ref.dir);
        let log = EventLog::load(&case_dir.join(&case_ref.events_file))?;
        if log.chain_digest() != case_ref.chain_digest {
            return Err(CaseGenError::CaseDigestMismatch {
                case_id: case_ref.case_id.clone(),
                expected: case_ref.chain_digest.clone(),
                actual: log.chain_digest(),
            });
        }
        let meta_path = case_dir.join("case.json");
        let meta_body = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        let meta: CaseMeta =
            serde_json::from_str(&meta_body).map_err(|source| CaseGenError::Json {
                path: meta_path.display().to_string(),
                source,
            })?;
        cases.push(CaseBundle {
            case_id: meta.case_id,
            tenant_id: meta.tenant_id,
            domain: meta.domain,
            scale: meta.scale,
            generator_seed: meta.generator_seed,
            log,
            task: meta.task,
            truth: meta.truth,
        });
    }
    let suite = Suite {
        seed: manifest.seed,
        cases,
    };
    let recomputed = suite.digest();
    if recomputed != manifest.suite_digest {
        return Err(CaseGenError::SuiteDigestMismatch {
            expected: manifest.suite_digest,
            actual: recomputed,
        });
    }
    Ok(suite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::{classify_line, LineClass};

    #[test]
    fn regeneration_is_byte_identical() {
        let a = generate_case(Domain::LoanQualification, 20260420, CaseScale::Large);
        let b = generate_case(Domain::LoanQualification, 20260420, CaseScale::Large);
        assert_eq!(a.log.chain_digest(), b.log.chain_digest());
        assert_eq!(a.truth, b.truth);
        assert_eq!(
            a.log.events()[0].timestamp,
            b.log.events()[0].timestamp
        );
    }

    #[test]
    fn large_case_hits_published_shape() {
        let case = generate_case(Domain::ClaimsAdjudication, 7, CaseScale::Large);
        assert!((82..=96).contains(&case.event_count()));
        assert!((26_000..=28_000).contains(&case.total_chars()));
        assert_eq!(case.truth.required_anchors.len(), 15);
        assert_eq!(case.truth.required_reasoning_keys.len(), 4);
        assert_eq!(case.truth.required_provisions.len(), 4);
        validate_case(&case).unwrap();
        calibrate_case(&case).unwrap();
    }

    #[test]
    fn label_follows_disqualifier_rule() {
        let deny = generate_case(Domain::LoanQualification, 8, CaseScale::Large);
        assert_eq!(deny.truth.label, DecisionLabel::Deny);
        assert_eq!(deny.truth.disqualifiers.len(), 2);
        let approve = generate_case(Domain::LoanQualification, 9, CaseScale::Large);
        assert_eq!(approve.truth.label, DecisionLabel::Approve);
        assert!(approve.truth.disqualifiers.is_empty());
    }

    #[test]
    fn distractors_alone_carry_no_signal() {
        // Removing every distractor line leaves the label derivation (and
        // the anchors) untouched: the prose is pure volume.
        let case = generate_case(Domain::ClaimsAdjudication, 12, CaseScale::Large);
        let kept: Vec<String> = case
            .log
            .events()
            .iter()
            .flat_map(|e| e.content.lines())
            .filter(|l| !matches!(classify_line(l), LineClass::Distractor))
            .map(str::to_string)
            .collect();
        let stripped = kept.join("\n");
        for anchor in &case.truth.required_anchors {
            assert!(stripped.contains(anchor.as_str()));
        }
        let has_disq = kept.iter().any(|l| l.starts_with(DISQUALIFIER_MARK));
        assert_eq!(has_disq, case.truth.label == DecisionLabel::Deny);
    }

    #[test]
    fn anchors_are_substring_free() {
        let case = generate_case(Domain::LoanQualification, 31, CaseScale::Large);
        let anchors = &case.truth.required_anchors;
        for (i, a) in anchors.iter().enumerate() {
            for (j, b) in anchors.iter().enumerate() {
                if i != j {
                    assert!(!a.contains(b.as_str()), "{a:?} contains {b:?}");
                }
            }
        }
    }

    #[test]
    fn suite_has_published_inventory() {
        let suite = generate_suite(DEFAULT_SUITE_SEED);
        assert_eq!(suite.cases.len(), 12);
        let ids: Vec<&str> = suite.cases.iter().map(|c| c.case_id.as_str()).collect();
        assert_eq!(
            ids,
            [
                "loan_L01", "loan_L02", "loan_L03", "loan_L04", "loan_L05", "claim_C01",
                "claim_C02", "claim_C03", "claim_C04", "claim_C05", "loan_001", "claim_001",
            ]
        );
        let denies = suite
            .cases
            .iter()
            .filter(|c| c.scale == CaseScale::Large && c.truth.label == DecisionLabel::Deny)
            .count();
        assert_eq!(denies, 5);
        assert_eq!(suite.find("loan_001").unwrap().event_count(), 22);
        assert_eq!(suite.find("claim_001").unwrap().event_count(), 16);
        // Distinct tenants: isolation scenarios need them.
        let tenants: BTreeSet<&str> = suite.cases.iter().map(|c| c.tenant_id.as_str()).collect();
        assert_eq!(tenants.len(), 12);
    }

    #[test]
    fn suite_compression_ratios_match_design_points() {
        let suite = generate_suite(DEFAULT_SUITE_SEED);
        let mean = suite.mean_large_chars();
        for (budget, rho) in [
            (Budget::tight(), 20.0),
            (Budget::moderate(), 5.0),
            (Budget::loose(), 2.0),
        ] {
            let actual = mean / budget.chars as f64;
            assert!(
                (actual - rho).abs() <= rho * 0.05,
                "ratio {actual:.3} not within 5% of {rho}"
            );
        }
    }

    #[test]
    fn suite_digest_is_stable_across_regeneration() {
        let a = generate_suite(99);
        let b = generate_suite(99);
        assert_eq!(a.digest(), b.digest());
        let c = generate_suite(100);
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn store_load_round_trips_with_digest_checks() {
        let dir = tempfile::tempdir().unwrap();
        let suite = generate_suite(424242);
        store_suite(&suite, dir.path()).unwrap();
        let loaded = load_suite(dir.path()).unwrap();
        assert_eq!(loaded.seed, suite.seed);
        assert_eq!(loaded.digest(), suite.digest());
        for (a, b) in suite.cases.iter().zip(loaded.cases.iter()) {
            assert_eq!(a.case_id, b.case_id);
            assert_eq!(a.truth, b.truth);
            assert_eq!(a.task, b.task);
            assert_eq!(a.log, b.log);
        }
    }

    #[test]
    fn tampered_store_fails_digest_verification() {
        let dir = tempfile::tempdir().unwrap();
        let suite = generate_suite(11);
        store_suite(&suite, dir.path()).unwrap();
        // Corrupt one case's events file.
        let case = &suite.cases[0];
        let path = dir
            .path()
            .join("cases")
            .join(&case.case_id)
            .join(EventLog::default_filename(&case.tenant_id, &case.case_id));
        let body = fs::read_to_string(&path).unwrap();
        // Every distractor object phrase starts with "the ", so this always
        // alters event content (and therefore its recorded digest).
        let corrupted = body.replacen("the ", "thee ", 1);
        assert_ne!(corrupted, body);
        fs::write(&path, corrupted).unwrap();
        assert!(load_suite(dir.path()).is_err());
    }

    #[test]
    fn small_cases_match_published_sizes() {
        let suite = generate_suite(DEFAULT_SUITE_SEED);
        let loan = suite.find("loan_001").unwrap();
        let claim = suite.find("claim_001").unwrap();
        assert!((2_250..=2_400).contains(&loan.total_chars()));
        assert!((2_250..=2_400).contains(&claim.total_chars()));
        assert!(loan.total_chars() > claim.total_chars());
        assert_eq!(loan.truth.required_anchors.len(), 5);
        assert_eq!(claim.truth.disqualifiers.len(), 1);
        validate_case(loan).unwrap();
        calibrate_case(loan).unwrap();
        validate_case(claim).unwrap();
        calibrate_case(claim).unwrap();
    }
}
