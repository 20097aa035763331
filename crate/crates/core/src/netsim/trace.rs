//! Trace records and their JSONL encoding.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::log::Log;
use crate::message::Message;
use crate::types::{Digest, ProcessId, Timeslot};

use super::config::ScenarioConfig;

/// One line of a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    /// Messages handed to the network by one sender in one slot. `to` is absent
    /// for a broadcast. `payloads` carries each message the first time it
    /// appears anywhere in the trace.
    Send {
        t: Timeslot,
        from: ProcessId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<Vec<ProcessId>>,
        msgs: Vec<Digest>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        payloads: Vec<Message>,
    },
    /// Messages entering one process's received set in one slot. Payloads of
    /// messages no one sent, such as client transactions, appear here first.
    Deliver {
        t: Timeslot,
        to: ProcessId,
        msgs: Vec<Digest>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        payloads: Vec<Message>,
    },
    /// A correct process's logs after a slot in which either changed.
    State {
        t: Timeslot,
        process: ProcessId,
        local_t: Timeslot,
        r: u32,
        rec: bool,
        log: Log,
        log_star: Log,
    },
    /// Execution `E_r` became inconsistent in the messages held by correct
    /// processes.
    Violation {
        t: Timeslot,
        r: u32,
        culprits: BTreeSet<ProcessId>,
    },
    RecoveryBegin {
        t: Timeslot,
        process: ProcessId,
        r: u32,
    },
    RecoveryEnd {
        t: Timeslot,
        process: ProcessId,
        r: u32,
        removed: BTreeSet<ProcessId>,
        genesis: Log,
    },
    Summary(Box<TraceSummary>),
}

impl TraceRecord {
    pub fn time(&self) -> Option<Timeslot> {
        match self {
            TraceRecord::Send { t, .. }
            | TraceRecord::Deliver { t, .. }
            | TraceRecord::State { t, .. }
            | TraceRecord::Violation { t, .. }
            | TraceRecord::RecoveryBegin { t, .. }
            | TraceRecord::RecoveryEnd { t, .. } => Some(*t),
            TraceRecord::Summary(_) => None,
        }
    }

    fn is_network(&self) -> bool {
        matches!(self, TraceRecord::Send { .. } | TraceRecord::Deliver { .. })
    }
}

/// Closing record of a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub t: Timeslot,
    pub config: ScenarioConfig,
    pub faulty: BTreeSet<ProcessId>,
    pub pi_star: Vec<ProcessId>,
    /// Executions found inconsistent in the correct processes' messages.
    pub violations: usize,
    /// Breaks along the chain of the correct processes' message sets.
    pub chain_violations: usize,
    /// Slots in which some correct process's `log` differed from the global
    /// finalization function over its received messages.
    pub agreement_mismatches: u64,
    pub agreement_checks: u64,
    /// Adversarial messages dropped for carrying a signature no correct
    /// process produced.
    pub rejected_emissions: u64,
    /// Distinct proposals holding a finish-QC in the correct processes'
    /// messages, per recovery.
    pub finish_qc_proposals: BTreeMap<u32, usize>,
    pub messages: u64,
    pub deliveries: u64,
    /// SHA-256 of every record line, network records included, whether or not
    /// they were kept.
    pub digest: Digest,
    pub full: bool,
}

/// Which records a run keeps in memory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Recording {
    /// Everything, so the trace can be replayed by an auditor.
    #[default]
    Full,
    /// Everything except sends and deliveries.
    Summary,
}

/// Accumulates records and the running digest.
#[derive(Debug)]
pub struct TraceWriter {
    mode: Recording,
    records: Vec<TraceRecord>,
    hasher: Sha256,
}

impl TraceWriter {
    pub fn new(mode: Recording) -> Self {
        TraceWriter {
            mode,
            records: Vec::new(),
            hasher: Sha256::new(),
        }
    }

    pub fn push(&mut self, record: TraceRecord) {
        // Records are plain data; serialization cannot fail.
        let line = serde_json::to_vec(&record).expect("trace record serializes");
        self.hasher.update(&line);
        self.hasher.update(b"\n");
        if self.mode == Recording::Full || !record.is_network() {
            self.records.push(record);
        }
    }

    pub fn digest(&self) -> Digest {
        Digest(self.hasher.clone().finalize().into())
    }

    pub fn finish(self, summary: TraceSummary) -> Trace {
        Trace {
            records: self.records,
            summary,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub summary: TraceSummary,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("trace has no summary record")]
    MissingSummary,
    #[error("records after the summary, at line {0}")]
    TrailingRecords(usize),
}

impl Trace {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &TraceRecord::Summary(Box::new(self.summary.clone())))?;
        w.write_all(b"\n")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut records = Vec::new();
        let mut summary = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if summary.is_some() {
                return Err(TraceError::TrailingRecords(i + 1));
            }
            let parse = |e| TraceError::Parse { line: i + 1, source: e };
            let mut value: serde_json::Value = serde_json::from_str(&line).map_err(parse)?;
            // The summary is decoded on its own: integer-keyed maps do not
            // survive serde's buffering of internally tagged enums.
            if value.get("kind").and_then(|k| k.as_str()) == Some("summary") {
                if let Some(obj) = value.as_object_mut() {
                    obj.remove("kind");
                }
                summary = Some(serde_json::from_value(value).map_err(parse)?);
            } else {
                records.push(serde_json::from_value(value).map_err(parse)?);
            }
        }
        let summary = summary.ok_or(TraceError::MissingSummary)?;
        Ok(Trace { records, summary })
    }

    pub fn states(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| matches!(r, TraceRecord::State { .. }))
    }
}
