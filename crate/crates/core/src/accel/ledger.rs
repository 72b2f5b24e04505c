use std::collections::HashMap;
use std::fmt;
use std::io;

use serde::Serialize;

use crate::tree::BankId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Selection,
    Insertion,
    Backup,
    Flush,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Selection => "selection",
            Phase::Insertion => "insertion",
            Phase::Backup => "backup",
            Phase::Flush => "flush",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankAccess {
    pub cycle: u64,
    pub bank: BankId,
    pub worker: usize,
    pub access: Access,
}

/// Two workers touching one bank in one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conflict {
    pub cycle: u64,
    pub bank: BankId,
    pub first: usize,
    pub second: usize,
}

/// A worker's occupancy of one selection unit; `exit - enter` is its latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageVisit {
    pub worker: usize,
    /// `None` for the distributor.
    pub group: Option<usize>,
    pub level: usize,
    pub enter: u64,
    pub exit: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PhaseRecord {
    pub phase: Phase,
    pub cycles: u64,
    pub workers: usize,
}

#[derive(Serialize)]
struct CsvRow {
    phase: Phase,
    cycles: u64,
    workers: usize,
    #[serde(rename = "F")]
    fanout: usize,
    #[serde(rename = "D")]
    depth: usize,
    n: usize,
    p: usize,
}

/// Report every `(cycle, bank)` pair used by more than one worker.
pub fn audit(log: &[BankAccess]) -> Vec<Conflict> {
    let mut owner: HashMap<(u64, BankId), usize> = HashMap::with_capacity(log.len());
    let mut out = Vec::new();
    for a in log {
        match owner.get(&(a.cycle, a.bank)) {
            Some(&w) if w != a.worker => {
                out.push(Conflict { cycle: a.cycle, bank: a.bank, first: w, second: a.worker });
            }
            Some(_) => {}
            None => {
                owner.insert((a.cycle, a.bank), a.worker);
            }
        }
    }
    out
}

/// Simulated cycle totals and memory-access bookkeeping.
///
/// The bank log is audited and drained at the end of every phase, so only
/// conflicts and counters accumulate. The last selection's unit visits are
/// kept for latency checks.
#[derive(Debug, Clone, Default)]
pub struct CycleLedger {
    pub selection: u64,
    pub insertion: u64,
    pub backup: u64,
    pub flush: u64,
    pub records: Vec<PhaseRecord>,
    pub conflicts: Vec<Conflict>,
    pub accesses_audited: u64,
    pub clut_lookups: u64,
    pub clut_mismatches: u64,
    pub last_visits: Vec<StageVisit>,
    /// Distributor start cycle of each worker in the last selection.
    pub last_issue: Vec<u64>,
    log: Vec<BankAccess>,
    keep_log: bool,
    kept: Vec<BankAccess>,
}

impl CycleLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Retain drained logs for inspection.
    pub fn keep_log(&mut self, on: bool) {
        self.keep_log = on;
    }

    pub fn kept_log(&self) -> &[BankAccess] {
        &self.kept
    }

    pub fn record(&mut self, cycle: u64, bank: BankId, worker: usize, access: Access) {
        self.log.push(BankAccess { cycle, bank, worker, access });
    }

    pub fn close_phase(&mut self, phase: Phase, cycles: u64, workers: usize) {
        self.conflicts.extend(audit(&self.log));
        self.accesses_audited += self.log.len() as u64;
        if self.keep_log {
            self.kept.append(&mut self.log);
        } else {
            self.log.clear();
        }
        *match phase {
            Phase::Selection => &mut self.selection,
            Phase::Insertion => &mut self.insertion,
            Phase::Backup => &mut self.backup,
            Phase::Flush => &mut self.flush,
        } += cycles;
        self.records.push(PhaseRecord { phase, cycles, workers });
    }

    pub fn total(&self) -> u64 {
        self.selection + self.insertion + self.backup + self.flush
    }

    pub fn write_csv<W: io::Write>(&self, out: W, fanout: usize, depth: usize, n: usize, p: usize) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(CsvRow { phase: r.phase, cycles: r.cycles, workers: r.workers, fanout, depth, n, p })?;
        }
        w.flush()?;
        Ok(())
    }
}
