//! Append-only, hash-chained record of assignments and platform decisions.
//!
//! On disk the ledger is JSON Lines. Each line is the canonical JSON of one
//! [`LedgerEntry`]: keys sorted, no insignificant whitespace. An entry's hash
//! is SHA-256 over the canonical JSON of `{kind, payload, prev_hash, seq}`, and
//! `prev_hash` of the first entry is 64 zeros. Lines that are valid JSON but
//! not in canonical form are rejected, so every byte of the file is covered.

mod table2;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::allocation::{assignment_id, Assignment, AssignmentStatus};
use crate::dataset::{column_order, AnalysisTable, DataRow, STANDARD_FACTORS};
use crate::design::Cell;
use crate::hash::{canonical_json, sha256_hex};
use crate::prompts::{PromptSpec, DURATION_HOURS};

pub use table2::{
    import_reference, parse_table2_csv, reconstruct_reference_dataset, Reconstruction, Table2Row,
    REFERENCE_DECIDED_AT, REFERENCE_TESTER,
};

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("ledger i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("ledger line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("unknown assignment `{0}`")]
    UnknownAssignment(String),
    #[error("assignment `{0}` already exists")]
    DuplicateAssignment(String),
    #[error("assignment `{id}`: {reason}")]
    IllegalTransition { id: String, reason: String },
    #[error("blocked_other requires notes")]
    MissingNotes,
    #[error("assignment `{id}` already has a different outcome at sequence {seq}")]
    Conflict { id: String, seq: u64 },
    #[error("table 2 csv line {line}: {reason}")]
    Table2 { line: u64, reason: String },
    #[error("snapshot does not match the ledger: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Published,
    ProhibitedPolitical,
    BlockedOther,
    /// The ad is live but the platform has not decided yet.
    Pending,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Published => "published",
            Decision::ProhibitedPolitical => "prohibited_political",
            Decision::BlockedOther => "blocked_other",
            Decision::Pending => "pending",
        }
    }

    pub fn is_final(self) -> bool {
        self != Decision::Pending
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub assignment_id: String,
    pub decision: Decision,
    pub decided_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

/// Body of an outcome submission as testers send it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSubmission {
    pub decision: Decision,
    pub decided_at: DateTime<Utc>,
    #[serde(default)]
    pub notes: Option<String>,
}

impl OutcomeSubmission {
    pub fn into_observation(self, assignment_id: &str) -> Observation {
        Observation {
            assignment_id: assignment_id.to_string(),
            decision: self.decision,
            decided_at: self.decided_at,
            notes: self.notes.filter(|n| !n.trim().is_empty()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Assignment,
    Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub assignment: Assignment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<PromptSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerEntry {
    pub seq: u64,
    pub kind: EntryKind,
    pub payload: Value,
    pub prev_hash: String,
    pub hash: String,
}

fn entry_hash(seq: u64, kind: EntryKind, payload: &Value, prev_hash: &str) -> String {
    let body = json!({ "seq": seq, "kind": kind, "payload": payload, "prev_hash": prev_hash });
    sha256_hex(&canonical_json(&body))
}

impl LedgerEntry {
    fn new(seq: u64, kind: EntryKind, payload: Value, prev_hash: &str) -> Self {
        let hash = entry_hash(seq, kind, &payload, prev_hash);
        LedgerEntry {
            seq,
            kind,
            payload,
            prev_hash: prev_hash.to_string(),
            hash,
        }
    }

    pub fn to_line(&self) -> Vec<u8> {
        let mut line = canonical_json(self);
        line.push(b'\n');
        line
    }
}

/// Parses a ledger file and checks canonical form, sequence numbers and the
/// hash chain. Sequence numbers start at 1.
pub fn parse_and_verify(bytes: &[u8]) -> Result<Vec<LedgerEntry>, LedgerError> {
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    let corrupt = |line: usize, reason: String| LedgerError::Corrupt { line, reason };
    let body = bytes
        .strip_suffix(b"\n")
        .ok_or_else(|| corrupt(0, "file does not end with a newline".into()))?;
    let mut entries: Vec<LedgerEntry> = Vec::new();
    for (i, raw) in body.split(|&b| b == b'\n').enumerate() {
        let line = i + 1;
        let entry: LedgerEntry =
            serde_json::from_slice(raw).map_err(|e| corrupt(line, e.to_string()))?;
        if canonical_json(&entry) != raw {
            return Err(corrupt(line, "not in canonical form".into()));
        }
        let expected_seq = entries.len() as u64 + 1;
        if entry.seq != expected_seq {
            return Err(corrupt(
                line,
                format!("sequence {} where {expected_seq} expected", entry.seq),
            ));
        }
        let prev = entries.last().map_or(GENESIS_HASH, |e| e.hash.as_str());
        if entry.prev_hash != prev {
            return Err(corrupt(line, "previous-hash link broken".into()));
        }
        if entry_hash(entry.seq, entry.kind, &entry.payload, &entry.prev_hash) != entry.hash {
            return Err(corrupt(line, "entry hash mismatch".into()));
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Everything known about one assignment after replaying the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssignmentState {
    pub assignment: Assignment,
    pub prompt: Option<PromptSpec>,
    pub seq: u64,
    /// Observation with decision `pending`, if the tester reported posting.
    pub posted: Option<(Observation, u64)>,
    pub outcome: Option<(Observation, u64)>,
    /// Id of the assignment that replaced this one.
    pub superseded_by: Option<String>,
}

impl AssignmentState {
    pub fn status(&self) -> AssignmentStatus {
        if self.outcome.is_some() {
            AssignmentStatus::Decided
        } else if self.posted.is_some() {
            AssignmentStatus::Posted
        } else {
            AssignmentStatus::Pending
        }
    }

    pub fn is_active(&self) -> bool {
        self.superseded_by.is_none()
    }

    pub fn is_open(&self) -> bool {
        self.is_active() && self.outcome.is_none()
    }

    /// The assignment with its current status filled in.
    pub fn current(&self) -> Assignment {
        Assignment {
            status: self.status(),
            ..self.assignment.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutcomeAck {
    pub assignment_id: String,
    pub seq: u64,
    pub decision: Decision,
    /// True when the submission repeated an earlier one and nothing was written.
    pub duplicate: bool,
}

#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusions {
    pub pending: usize,
    pub blocked_other: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub superseded: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetExport {
    pub table: AnalysisTable,
    pub exclusions: Exclusions,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellProgress {
    pub assigned: usize,
    pub posted: usize,
    pub decided: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressSnapshot {
    pub seq: u64,
    pub head_hash: String,
    pub cells: BTreeMap<String, CellProgress>,
    /// Open (pending or posted) assignments per tester.
    pub testers: BTreeMap<String, usize>,
    pub retry_queue: usize,
    pub completion: f64,
    pub complete: bool,
}

/// Head position written alongside the ledger so a truncated file is noticed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub seq: u64,
    pub head_hash: String,
    pub written_at: DateTime<Utc>,
    pub statuses: BTreeMap<String, AssignmentStatus>,
}

#[derive(Debug)]
pub struct Ledger {
    path: Option<PathBuf>,
    file: Option<File>,
    entries: Vec<LedgerEntry>,
    states: BTreeMap<String, AssignmentState>,
    order: Vec<String>,
}

impl Ledger {
    pub fn in_memory() -> Self {
        Ledger {
            path: None,
            file: None,
            entries: Vec::new(),
            states: BTreeMap::new(),
            order: Vec::new(),
        }
    }

    /// Opens (creating if absent) and fully verifies a ledger file. If a
    /// snapshot sits beside it, the file must still contain the snapshot head.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let path = path.as_ref();
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let mut ledger = Ledger::from_entries(parse_and_verify(&bytes)?)?;
        match fs::read(snapshot_path(path)) {
            Ok(text) => {
                let snapshot: LedgerSnapshot = serde_json::from_slice(&text)
                    .map_err(|e| LedgerError::Snapshot(e.to_string()))?;
                ledger.verify_snapshot(&snapshot)?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        ledger.file = Some(OpenOptions::new().create(true).append(true).open(path)?);
        ledger.path = Some(path.to_path_buf());
        Ok(ledger)
    }

    /// Replays verified entries, applying the same rules as live appends.
    pub fn from_entries(entries: Vec<LedgerEntry>) -> Result<Self, LedgerError> {
        let mut ledger = Ledger::in_memory();
        for entry in entries {
            let line = entry.seq as usize;
            let bad = |e: String| LedgerError::Corrupt { line, reason: e };
            match entry.kind {
                EntryKind::Assignment => {
                    let record: AssignmentRecord = serde_json::from_value(entry.payload.clone())
                        .map_err(|e| bad(e.to_string()))?;
                    ledger
                        .check_assignment(&record)
                        .map_err(|e| bad(e.to_string()))?;
                    ledger.apply_assignment(record, entry.seq);
                }
                EntryKind::Outcome => {
                    let obs: Observation = serde_json::from_value(entry.payload.clone())
                        .map_err(|e| bad(e.to_string()))?;
                    match ledger.check_outcome(&obs).map_err(|e| bad(e.to_string()))? {
                        None => ledger.apply_outcome(obs, entry.seq),
                        Some(_) => return Err(bad("repeated outcome".into())),
                    }
                }
            }
            ledger.entries.push(entry);
        }
        Ok(ledger)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head_seq(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn head_hash(&self) -> &str {
        self.entries
            .last()
            .map_or(GENESIS_HASH, |e| e.hash.as_str())
    }

    pub fn assignment(&self, id: &str) -> Option<&AssignmentState> {
        self.states.get(id)
    }

    /// Assignment states in the order they were appended.
    pub fn assignments(&self) -> impl Iterator<Item = &AssignmentState> {
        self.order.iter().map(move |id| &self.states[id])
    }

    /// The canonical JSON Lines form of the whole ledger.
    pub fn to_jsonl(&self) -> Vec<u8> {
        self.entries.iter().flat_map(LedgerEntry::to_line).collect()
    }

    fn write_entry(&mut self, kind: EntryKind, payload: Value) -> Result<u64, LedgerError> {
        let seq = self.head_seq() + 1;
        let entry = LedgerEntry::new(seq, kind, payload, self.head_hash());
        if let Some(file) = self.file.as_mut() {
            file.write_all(&entry.to_line())?;
            file.sync_data()?;
        }
        self.entries.push(entry);
        Ok(seq)
    }

    fn check_assignment(&self, record: &AssignmentRecord) -> Result<(), LedgerError> {
        let a = &record.assignment;
        if self.states.contains_key(&a.assignment_id) {
            return Err(LedgerError::DuplicateAssignment(a.assignment_id.clone()));
        }
        let illegal = |reason: String| LedgerError::IllegalTransition {
            id: a.assignment_id.clone(),
            reason,
        };
        if a.status != AssignmentStatus::Pending {
            return Err(illegal("new assignments must be pending".into()));
        }
        Cell::parse_id(&a.cell_id).map_err(|e| illegal(e.to_string()))?;
        if let Some(prompt) = &record.prompt {
            if prompt.prompt_id != a.prompt_id || prompt.creative.cell_id != a.cell_id {
                return Err(illegal("prompt does not match assignment".into()));
            }
        }
        if let Some(original) = &a.retry_of {
            let prior = self
                .states
                .get(original)
                .ok_or_else(|| LedgerError::UnknownAssignment(original.clone()))?;
            if prior.superseded_by.is_some() {
                return Err(illegal(format!("`{original}` was already reassigned")));
            }
            if prior.assignment.prompt_id != a.prompt_id {
                return Err(illegal("a retry must carry the original prompt".into()));
            }
            if let Some((obs, _)) = &prior.outcome {
                if obs.decision != Decision::BlockedOther {
                    return Err(illegal(format!(
                        "`{original}` was decided and cannot be retried"
                    )));
                }
            }
        }
        Ok(())
    }

    fn apply_assignment(&mut self, record: AssignmentRecord, seq: u64) {
        let id = record.assignment.assignment_id.clone();
        if let Some(original) = &record.assignment.retry_of {
            if let Some(prior) = self.states.get_mut(original) {
                prior.superseded_by = Some(id.clone());
            }
        }
        self.states.insert(
            id.clone(),
            AssignmentState {
                assignment: record.assignment,
                prompt: record.prompt,
                seq,
                posted: None,
                outcome: None,
                superseded_by: None,
            },
        );
        self.order.push(id);
    }

    pub fn append_assignment(
        &mut self,
        assignment: Assignment,
        prompt: Option<PromptSpec>,
    ) -> Result<u64, LedgerError> {
        let record = AssignmentRecord { assignment, prompt };
        self.check_assignment(&record)?;
        let payload = serde_json::to_value(&record).expect("assignment serializes");
        let seq = self.write_entry(EntryKind::Assignment, payload)?;
        self.apply_assignment(record, seq);
        Ok(seq)
    }

    /// `Ok(Some(seq))` when `obs` repeats the observation already stored at `seq`.
    fn check_outcome(&self, obs: &Observation) -> Result<Option<u64>, LedgerError> {
        let state = self
            .states
            .get(&obs.assignment_id)
            .ok_or_else(|| LedgerError::UnknownAssignment(obs.assignment_id.clone()))?;
        for (prior, seq) in state.posted.iter().chain(state.outcome.iter()) {
            if prior == obs {
                return Ok(Some(*seq));
            }
        }
        if obs.decision == Decision::BlockedOther
            && obs.notes.as_deref().is_none_or(|n| n.trim().is_empty())
        {
            return Err(LedgerError::MissingNotes);
        }
        if let Some((_, seq)) = &state.outcome {
            return Err(LedgerError::Conflict {
                id: obs.assignment_id.clone(),
                seq: *seq,
            });
        }
        if let (Some((_, seq)), Decision::Pending) = (&state.posted, obs.decision) {
            return Err(LedgerError::Conflict {
                id: obs.assignment_id.clone(),
                seq: *seq,
            });
        }
        if state.superseded_by.is_some() {
            return Err(LedgerError::IllegalTransition {
                id: obs.assignment_id.clone(),
                reason: "assignment was reassigned".into(),
            });
        }
        Ok(None)
    }

    fn apply_outcome(&mut self, obs: Observation, seq: u64) {
        let state = self.states.get_mut(&obs.assignment_id).expect("checked");
        if obs.decision.is_final() {
            state.outcome = Some((obs, seq));
        } else {
            state.posted = Some((obs, seq));
        }
    }

    /// Records a decision. Repeating an identical observation is a no-op that
    /// returns the original sequence number.
    pub fn append_outcome(&mut self, obs: Observation) -> Result<OutcomeAck, LedgerError> {
        let decision = obs.decision;
        let assignment_id = obs.assignment_id.clone();
        if let Some(seq) = self.check_outcome(&obs)? {
            return Ok(OutcomeAck {
                assignment_id,
                seq,
                decision,
                duplicate: true,
            });
        }
        let payload = serde_json::to_value(&obs).expect("observation serializes");
        let seq = self.write_entry(EntryKind::Outcome, payload)?;
        self.apply_outcome(obs, seq);
        Ok(OutcomeAck {
            assignment_id,
            seq,
            decision,
            duplicate: false,
        })
    }

    /// Assignments blocked for reasons other than political policy that have
    /// not been retried yet.
    pub fn retry_queue(&self) -> Vec<&AssignmentState> {
        self.assignments()
            .filter(|s| {
                s.is_active()
                    && s.outcome
                        .as_ref()
                        .is_some_and(|(o, _)| o.decision == Decision::BlockedOther)
            })
            .collect()
    }

    /// Appends a fresh assignment for the same prompt, leaving the original
    /// untouched. `tester_id` defaults to the original tester.
    pub fn append_retry(
        &mut self,
        original_id: &str,
        tester_id: Option<&str>,
        created_at: DateTime<Utc>,
    ) -> Result<Assignment, LedgerError> {
        let prior = self
            .states
            .get(original_id)
            .ok_or_else(|| LedgerError::UnknownAssignment(original_id.to_string()))?;
        let attempt = original_id
            .rsplit('-')
            .next()
            .and_then(|s| s.parse::<u32>().ok())
            .unwrap_or(0)
            + 1;
        let retry = Assignment {
            assignment_id: assignment_id(&prior.assignment.prompt_id, attempt),
            prompt_id: prior.assignment.prompt_id.clone(),
            tester_id: tester_id.unwrap_or(&prior.assignment.tester_id).to_string(),
            cell_id: prior.assignment.cell_id.clone(),
            status: AssignmentStatus::Pending,
            created_at,
            window_hours: DURATION_HOURS,
            retry_of: Some(original_id.to_string()),
        };
        let prompt = prior.prompt.clone();
        self.append_assignment(retry.clone(), prompt)?;
        Ok(retry)
    }

    /// Open assignments of one tester, oldest first.
    pub fn open_for_tester(&self, tester_id: &str) -> Vec<&AssignmentState> {
        self.assignments()
            .filter(|s| s.is_open() && s.assignment.tester_id == tester_id)
            .collect()
    }

    /// One row per assignment decided as published or prohibited.
    pub fn export_dataset(&self) -> DatasetExport {
        let mut exclusions = Exclusions::default();
        let mut rows = Vec::new();
        let mut factor_names = Vec::new();
        for state in self.assignments() {
            let cell = Cell::parse_id(&state.assignment.cell_id).expect("validated on append");
            factor_names.extend(cell.assignment.keys().cloned());
            match &state.outcome {
                Some((obs, _)) if obs.decision == Decision::BlockedOther => {
                    exclusions.blocked_other += 1;
                }
                Some((obs, _)) => rows.push(DataRow {
                    levels: cell.assignment,
                    published: obs.decision == Decision::Published,
                    tester_id: state.assignment.tester_id.clone(),
                    prompt_id: state.assignment.prompt_id.clone(),
                    decided_at: Some(obs.decided_at),
                }),
                None if state.superseded_by.is_some() => exclusions.superseded += 1,
                None => exclusions.pending += 1,
            }
        }
        let factors = if factor_names.is_empty() {
            STANDARD_FACTORS.iter().map(|s| s.to_string()).collect()
        } else {
            column_order(&factor_names)
        };
        DatasetExport {
            table: AnalysisTable { factors, rows },
            exclusions,
        }
    }

    pub fn progress(&self) -> ProgressSnapshot {
        let mut cells: BTreeMap<String, CellProgress> = BTreeMap::new();
        let mut testers: BTreeMap<String, usize> = BTreeMap::new();
        let (mut assigned, mut decided) = (0usize, 0usize);
        for state in self.assignments().filter(|s| s.is_active()) {
            let cell = cells.entry(state.assignment.cell_id.clone()).or_default();
            let open = testers
                .entry(state.assignment.tester_id.clone())
                .or_default();
            cell.assigned += 1;
            assigned += 1;
            match state.status() {
                AssignmentStatus::Decided => {
                    cell.posted += 1;
                    cell.decided += 1;
                    decided += 1;
                }
                AssignmentStatus::Posted => {
                    cell.posted += 1;
                    *open += 1;
                }
                AssignmentStatus::Pending => *open += 1,
            }
        }
        let retry_queue = self.retry_queue().len();
        ProgressSnapshot {
            seq: self.head_seq(),
            head_hash: self.head_hash().to_string(),
            cells,
            testers,
            retry_queue,
            completion: if assigned == 0 {
                0.0
            } else {
                decided as f64 / assigned as f64
            },
            complete: assigned > 0 && decided == assigned && retry_queue == 0,
        }
    }

    pub fn snapshot(&self, written_at: DateTime<Utc>) -> LedgerSnapshot {
        LedgerSnapshot {
            seq: self.head_seq(),
            head_hash: self.head_hash().to_string(),
            written_at,
            statuses: self
                .assignments()
                .map(|s| (s.assignment.assignment_id.clone(), s.status()))
                .collect(),
        }
    }

    /// Writes `<ledger>.snapshot.json` next to a file-backed ledger.
    pub fn write_snapshot(
        &self,
        written_at: DateTime<Utc>,
    ) -> Result<Option<PathBuf>, LedgerError> {
        let Some(path) = &self.path else {
            return Ok(None);
        };
        let target = snapshot_path(path);
        let tmp = target.with_extension("json.tmp");
        let mut text =
            serde_json::to_string_pretty(&self.snapshot(written_at)).expect("serializes");
        text.push('\n');
        fs::write(&tmp, text)?;
        fs::rename(&tmp, &target)?;
        Ok(Some(target))
    }

    /// Checks that the ledger still contains the entry a snapshot recorded.
    pub fn verify_snapshot(&self, snapshot: &LedgerSnapshot) -> Result<(), LedgerError> {
        if snapshot.seq == 0 {
            return Ok(());
        }
        match self.entries.get(snapshot.seq as usize - 1) {
            Some(e) if e.hash == snapshot.head_hash => Ok(()),
            Some(_) => Err(LedgerError::Snapshot(format!(
                "hash at sequence {} differs",
                snapshot.seq
            ))),
            None => Err(LedgerError::Snapshot(format!(
                "ledger ends at {} but the snapshot saw {}",
                self.head_seq(),
                snapshot.seq
            ))),
        }
    }
}

pub fn snapshot_path(ledger_path: &Path) -> PathBuf {
    let mut name = ledger_path.file_name().unwrap_or_default().to_os_string();
    name.push(".snapshot.json");
    ledger_path.with_file_name(name)
}

pub fn rfc3339(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}
