//! Structured trace records.
//!
//! A trace is a sequence of [`TraceRecord`]s ordered by (tick, seq), written
//! as newline-delimited JSON. Effect entries are logged only for classes
//! named in the trace configuration; faults, transaction outcomes, plan
//! switches, component summaries and per-tick stats are always logged.

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use std::io::{self, BufRead, Write};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TraceKind {
    /// Run configuration, seed and unit hash; first record of a file.
    Header,
    /// One buffered effect assignment, or the reduced value of a group.
    EffectEntry,
    TxnOutcome,
    Fault,
    PlanSwitch,
    ComponentUpdate,
    /// Per-tick counters and plan cardinalities.
    Stats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub seq: u64,
    pub kind: TraceKind,
    pub payload: Json,
}

/// Values of the `status` payload field of effect records.
pub mod status {
    pub const APPLIED: &str = "applied";
    pub const ABORTED: &str = "aborted";
    pub const DEAD_TARGET: &str = "deadTarget";
    pub const REDUCED: &str = "reduced";
}

/// Appends records with consecutive sequence numbers.
#[derive(Clone, Debug, Default)]
pub struct TraceLog {
    pub next_seq: u64,
    pub records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn push(&mut self, tick: u64, kind: TraceKind, payload: Json) {
        self.records.push(TraceRecord {
            tick,
            seq: self.next_seq,
            kind,
            payload,
        });
        self.next_seq += 1;
    }

    /// Removes and returns the buffered records.
    pub fn take(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.records)
    }
}

pub fn write_ndjson<W: Write>(out: &mut W, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_ndjson<R: BufRead>(input: R) -> io::Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}

/// Effect records targeting `object` at `tick`: each entry with its source
/// and pre-reduction value, then the reduced values. Unknown objects and
/// ticks give an empty list.
pub fn effects_of(trace: &[TraceRecord], object: i64, tick: u64) -> Vec<TraceRecord> {
    trace
        .iter()
        .filter(|r| r.tick == tick && r.kind == TraceKind::EffectEntry && r.payload["target"] == object)
        .cloned()
        .collect()
}
