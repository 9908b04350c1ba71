//! Results history, change detection and the revalidation rules.

use crate::engine::Verdict;
use crate::frame::ProblemFrame;
use crate::volang::VoId;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

pub const LEDGER_FILE: &str = "vdd.ledger";

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("E-LED-001: unknown machine `{0}`")]
    UnknownMachine(String),
    #[error("E-LED-002: {path}:{line}: malformed ledger record: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("E-LED-003: {what} hash of {vo} does not match the project; run the VO before recording it")]
    HashMismatch { vo: VoId, what: &'static str },
    #[error("E-LED-010: cannot reach {target} for {requirement}/{machine}: {missing}")]
    Prerequisite { requirement: String, machine: String, target: Stage, missing: String },
    #[error("E-LED-020: {0}")]
    Io(#[from] std::io::Error),
}

impl LedgerError {
    pub fn code(&self) -> &'static str {
        match self {
            LedgerError::UnknownMachine(_) => "E-LED-001",
            LedgerError::Corrupt { .. } => "E-LED-002",
            LedgerError::HashMismatch { .. } => "E-LED-003",
            LedgerError::Prerequisite { .. } => "E-LED-010",
            LedgerError::Io(_) => "E-LED-020",
        }
    }
}

/// Hex SHA-256 of `text`.
pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Hash of every frame domain: its declarations and every interface touching it.
pub fn domain_hashes(frames: &[ProblemFrame]) -> BTreeMap<String, String> {
    let mut text: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for f in frames {
        for d in &f.domains {
            let decl = ProblemFrame {
                name: f.name.clone(),
                refines: f.refines.clone(),
                domains: vec![d.clone()],
                interfaces: f.interfaces.iter().filter(|i| i.touches(&d.name)).cloned().collect(),
                span: Default::default(),
            };
            text.entry(d.name.clone()).or_default().push(decl.to_string());
        }
    }
    text.into_iter()
        .map(|(d, mut parts)| {
            parts.sort();
            (d, digest(&parts.concat()))
        })
        .collect()
}

/// Hashes of the project state an evaluation depended on.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub machines: BTreeMap<String, String>,
    pub domains: BTreeMap<String, String>,
    pub frames: String,
}

/// What differs between two snapshots.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Change {
    pub modified: BTreeSet<String>,
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
    /// Frame domains whose declaration or interfaces changed.
    pub domains: BTreeSet<String>,
}

impl Change {
    pub fn between(old: &Snapshot, new: &Snapshot) -> Change {
        let mut c = Change::default();
        for (m, h) in &new.machines {
            match old.machines.get(m) {
                None => {
                    c.added.insert(m.clone());
                }
                Some(o) if o != h => {
                    c.modified.insert(m.clone());
                }
                _ => {}
            }
        }
        c.removed = old.machines.keys().filter(|m| !new.machines.contains_key(*m)).cloned().collect();
        let names: BTreeSet<&String> = old.domains.keys().chain(new.domains.keys()).collect();
        c.domains = names
            .into_iter()
            .filter(|d| old.domains.get(*d) != new.domains.get(*d))
            .cloned()
            .collect();
        c
    }

    pub fn is_empty(&self) -> bool {
        self.modified.is_empty() && self.added.is_empty() && self.removed.is_empty() && self.domains.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MachineInfo {
    pub refines: Option<String>,
    pub implements: BTreeSet<String>,
}

/// VO scopes and machine domains of the current project.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScopeIndex {
    pub vos: BTreeMap<VoId, BTreeSet<String>>,
    pub machines: BTreeMap<String, MachineInfo>,
}

impl ScopeIndex {
    /// Machines `m` refines, nearest first.
    pub fn ancestors(&self, m: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = self.machines.get(m).and_then(|i| i.refines.clone());
        while let Some(a) = cur {
            if out.contains(&a) {
                break;
            }
            cur = self.machines.get(&a).and_then(|i| i.refines.clone());
            out.push(a);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Discipline {
    #[default]
    Strict,
    Liberal,
}

impl FromStr for Discipline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "STRICT" => Ok(Discipline::Strict),
            "LIBERAL" => Ok(Discipline::Liberal),
            _ => Err(format!("unknown refinement discipline `{s}` (expected STRICT or LIBERAL)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ImpactOptions {
    pub discipline: Discipline,
    /// Follow consumer chains beyond one interface hop.
    pub transitive: bool,
}

/// Why a VO is stale.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Reason {
    /// Its target machine changed or disappeared.
    TargetChanged { machine: String },
    /// A scope domain consumes from a domain of a changed machine.
    Consumes { domain: String, producer: String },
    /// Liberal discipline: its machine was refined by a new machine.
    Refined { by: String },
    /// A scope domain's frame declaration changed.
    FrameEdited { domain: String },
    /// The VO text itself changed.
    VoEdited,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reason::TargetChanged { machine } => write!(f, "machine {machine} changed"),
            Reason::Consumes { domain, producer } if domain == producer => {
                write!(f, "domain {domain} is implemented by a changed machine")
            }
            Reason::Consumes { domain, producer } => write!(f, "domain {domain} consumes from changed domain {producer}"),
            Reason::Refined { by } => write!(f, "refined by new machine {by}"),
            Reason::FrameEdited { domain } => write!(f, "frame declaration of {domain} changed"),
            Reason::VoEdited => write!(f, "VO text changed"),
        }
    }
}

/// Domains that consume from `producers`, mapped to the producer they consume
/// from. A producer counts as depending on itself.
fn consumers(producers: &BTreeSet<String>, frames: &[ProblemFrame], transitive: bool) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> = producers.iter().map(|p| (p.clone(), p.clone())).collect();
    let mut queue: VecDeque<(String, String)> = producers.iter().map(|p| (p.clone(), p.clone())).collect();
    while let Some((p, origin)) = queue.pop_front() {
        for i in frames.iter().flat_map(|f| &f.interfaces) {
            for e in &i.endpoints {
                if i.flows_from_to(&p, &e.domain) && !out.contains_key(&e.domain) {
                    out.insert(e.domain.clone(), origin.clone());
                    if transitive {
                        queue.push_back((e.domain.clone(), origin.clone()));
                    }
                }
            }
        }
    }
    out
}

/// Applies the revalidation rules to `change`, returning each stale VO with
/// its first reason.
pub fn impact(change: &Change, index: &ScopeIndex, frames: &[ProblemFrame], opts: ImpactOptions) -> Result<BTreeMap<VoId, Reason>, LedgerError> {
    for m in change.modified.iter().chain(&change.added) {
        if !index.machines.contains_key(m) {
            return Err(LedgerError::UnknownMachine(m.clone()));
        }
    }
    let mut producers: BTreeSet<String> = change
        .modified
        .iter()
        .flat_map(|m| index.machines[m].implements.iter().cloned())
        .collect();
    let mut refined: BTreeMap<String, String> = BTreeMap::new();
    for m in &change.added {
        let info = &index.machines[m];
        let parent = info.refines.as_ref().and_then(|r| index.machines.get(r));
        match parent {
            Some(p) if info.implements.is_subset(&p.implements) => {
                if opts.discipline == Discipline::Liberal {
                    for a in index.ancestors(m) {
                        refined.entry(a).or_insert_with(|| m.clone());
                    }
                }
            }
            _ => {
                let old = parent.map(|p| p.implements.clone()).unwrap_or_default();
                producers.extend(info.implements.difference(&old).cloned());
            }
        }
    }
    let affected = consumers(&producers, frames, opts.transitive);

    let mut stale = BTreeMap::new();
    for (vo, scope) in &index.vos {
        let reason = if change.modified.contains(&vo.model) || change.removed.contains(&vo.model) {
            Some(Reason::TargetChanged {
                machine: vo.model.clone(),
            })
        } else if let Some(d) = scope.iter().find(|d| affected.contains_key(*d)) {
            Some(Reason::Consumes {
                domain: d.clone(),
                producer: affected[d].clone(),
            })
        } else if let Some(by) = refined.get(&vo.model) {
            Some(Reason::Refined { by: by.clone() })
        } else {
            scope
                .iter()
                .find(|d| change.domains.contains(*d))
                .map(|d| Reason::FrameEdited { domain: d.clone() })
        };
        if let Some(r) = reason {
            stale.insert(vo.clone(), r);
        }
    }
    Ok(stale)
}

/// Requirement workflow stages, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Selected,
    VoWritten,
    Implemented,
    Verified,
    Validated,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Selected, Stage::VoWritten, Stage::Implemented, Stage::Verified, Stage::Validated];

    pub fn next(self) -> Option<Stage> {
        Stage::ALL.get(self as usize + 1).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Selected => "SELECTED",
            Stage::VoWritten => "VO_WRITTEN",
            Stage::Implemented => "IMPLEMENTED",
            Stage::Verified => "VERIFIED",
            Stage::Validated => "VALIDATED",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What is currently known about one requirement on one machine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageFacts {
    pub vo_parsed: bool,
    pub typechecks: bool,
    pub invariants_pass: bool,
    pub vo_passes: bool,
}

impl StageFacts {
    fn missing_for(&self, target: Stage) -> Option<&'static str> {
        match target {
            Stage::Selected => None,
            Stage::VoWritten => (!self.vo_parsed).then_some("no parsed VO"),
            Stage::Implemented => (!self.typechecks).then_some("machine does not typecheck"),
            Stage::Verified => (!self.invariants_pass).then_some("invariant check does not pass"),
            Stage::Validated => (!self.vo_passes).then_some("VO does not pass"),
        }
    }
}

/// Moves one stage forward from `current` to `target`.
pub fn advance_stage(requirement: &str, machine: &str, current: Stage, target: Stage, facts: &StageFacts) -> Result<Stage, LedgerError> {
    let err = |missing: String| LedgerError::Prerequisite {
        requirement: requirement.to_string(),
        machine: machine.to_string(),
        target,
        missing,
    };
    if target <= current {
        return Ok(current);
    }
    if current.next() != Some(target) {
        return Err(err(format!("stages cannot be skipped (currently {current})")));
    }
    match facts.missing_for(target) {
        Some(m) => Err(err(m.to_string())),
        None => Ok(target),
    }
}

/// Advances as far as `facts` allow, stopping at the first unmet prerequisite.
pub fn advance_all(requirement: &str, machine: &str, mut current: Stage, facts: &StageFacts) -> (Stage, Option<LedgerError>) {
    while let Some(n) = current.next() {
        match advance_stage(requirement, machine, current, n, facts) {
            Ok(s) => current = s,
            Err(e) => return (current, Some(e)),
        }
    }
    (current, None)
}

/// A stage recorded against a machine whose hash has since changed drops back
/// to IMPLEMENTED.
pub fn reset_stage(stage: Stage, recorded_hash: &str, current_hash: Option<&str>) -> Stage {
    if stage > Stage::Implemented && current_hash != Some(recorded_hash) {
        Stage::Implemented
    } else {
        stage
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub vo: VoId,
    pub verdict: Verdict,
    pub machine_hash: String,
    pub frame_hash: String,
    pub vo_hash: String,
    pub timestamp: Option<u64>,
    pub snapshot: Snapshot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub requirement: String,
    pub machine: String,
    pub stage: Stage,
    pub machine_hash: String,
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Result(ResultEntry),
    Stage(StageEntry),
}

/// The append-only history of a project.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ledger {
    pub records: Vec<Record>,
}

impl Ledger {
    /// Reads `path`; a missing file is an empty ledger.
    pub fn load(path: &Path) -> Result<Ledger, LedgerError> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Ledger::default()),
            Err(e) => return Err(e.into()),
        };
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            records.push(serde_json::from_str(line).map_err(|e| LedgerError::Corrupt {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Ledger { records })
    }

    /// Appends to the in-memory history and to `path`.
    pub fn append(&mut self, path: &Path, record: Record) -> Result<(), LedgerError> {
        let mut line = serde_json::to_string(&record).expect("records serialize");
        line.push('\n');
        std::fs::OpenOptions::new().create(true).append(true).open(path)?.write_all(line.as_bytes())?;
        self.records.push(record);
        Ok(())
    }

    /// Appends a result after checking its hashes against the current project.
    pub fn record(&mut self, path: &Path, entry: ResultEntry, current: &Snapshot, vo_hash: &str) -> Result<(), LedgerError> {
        let mismatch = |what| LedgerError::HashMismatch {
            vo: entry.vo.clone(),
            what,
        };
        if current.machines.get(&entry.vo.model) != Some(&entry.machine_hash) {
            return Err(mismatch("machine"));
        }
        if current.frames != entry.frame_hash || entry.snapshot != *current {
            return Err(mismatch("frame"));
        }
        if vo_hash != entry.vo_hash {
            return Err(mismatch("VO"));
        }
        self.append(path, Record::Result(entry))
    }

    pub fn latest_result(&self, vo: &VoId) -> Option<&ResultEntry> {
        self.records.iter().rev().find_map(|r| match r {
            Record::Result(e) if e.vo == *vo => Some(e),
            _ => None,
        })
    }

    pub fn latest_stage(&self, requirement: &str, machine: &str) -> Option<&StageEntry> {
        self.records.iter().rev().find_map(|r| match r {
            Record::Stage(e) if e.requirement == requirement && e.machine == machine => Some(e),
            _ => None,
        })
    }
}

/// Current validity of one VO.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Freshness {
    NotRun,
    Fresh { verdict: Verdict },
    Stale { verdict: Verdict, reason: Reason },
}

/// Compares the latest result of every VO with the current project.
/// `vo_hashes` holds the current hash of each VO's text.
pub fn freshness(ledger: &Ledger, vo_hashes: &BTreeMap<VoId, String>, current: &Snapshot, index: &ScopeIndex, frames: &[ProblemFrame], opts: ImpactOptions) -> Result<BTreeMap<VoId, Freshness>, LedgerError> {
    let mut out = BTreeMap::new();
    for (vo, hash) in vo_hashes {
        let Some(e) = ledger.latest_result(vo) else {
            out.insert(vo.clone(), Freshness::NotRun);
            continue;
        };
        let change = Change::between(&e.snapshot, current);
        let reason = if e.vo_hash != *hash {
            Some(Reason::VoEdited)
        } else {
            impact(&change, index, frames, opts)?.remove(vo)
        };
        out.insert(
            vo.clone(),
            match reason {
                Some(reason) => Freshness::Stale {
                    verdict: e.verdict,
                    reason,
                },
                None => Freshness::Fresh { verdict: e.verdict },
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Cell {
    Verdict(Verdict),
    Stale,
    /// No VO, or a VO without a current verdict.
    Empty,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Verdict(v) => write!(f, "{v}"),
            Cell::Stale => f.write_str("STALE"),
            Cell::Empty => f.write_str("-"),
        }
    }
}

/// Requirements by machines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Matrix {
    pub requirements: Vec<String>,
    pub machines: Vec<String>,
    pub cells: Vec<Vec<Cell>>,
}

impl Matrix {
    pub fn build(requirements: &[String], machines: &[String], fresh: &BTreeMap<VoId, Freshness>) -> Matrix {
        let cells = requirements
            .iter()
            .map(|r| {
                machines
                    .iter()
                    .map(|m| match fresh.get(&VoId::new(r, m)) {
                        Some(Freshness::Fresh { verdict }) => Cell::Verdict(*verdict),
                        Some(Freshness::Stale { .. }) => Cell::Stale,
                        _ => Cell::Empty,
                    })
                    .collect()
            })
            .collect();
        Matrix {
            requirements: requirements.to_vec(),
            machines: machines.to_vec(),
            cells,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = std::iter::once("requirement").chain(self.machines.iter().map(String::as_str)).collect();
        w.write_record(&header).expect("in-memory write");
        for (r, row) in self.requirements.iter().zip(&self.cells) {
            let cells: Vec<String> = std::iter::once(r.clone()).chain(row.iter().map(Cell::to_string)).collect();
            w.write_record(&cells).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn to_table(&self) -> String {
        let mut rows: Vec<Vec<String>> = vec![std::iter::once("requirement".to_string()).chain(self.machines.iter().cloned()).collect()];
        for (r, row) in self.requirements.iter().zip(&self.cells) {
            rows.push(std::iter::once(r.clone()).chain(row.iter().map(Cell::to_string)).collect());
        }
        let widths: Vec<usize> = (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in rows {
            let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
