//! Per-attempt transaction records collected during a run.

use crate::explore::Fingerprint;
use crate::htm::AbortCode;

/// One attempt of one transaction.
///
/// Times are simulator step times; `0` never occurs as a step time, so it
/// doubles as "before the run".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxRecord {
    pub thread: usize,
    /// Index of the transaction within its thread's stream.
    pub seq: u64,
    pub attempt: u32,
    pub read_only: bool,
    pub via_sgl: bool,
    pub begin: u64,
    pub commit_invoke: Option<u64>,
    /// When the writes became visible (HTM commit, or SGL commit).
    pub htm_commit: Option<u64>,
    /// When commit returned to the application.
    pub ack: Option<u64>,
    pub abort: Option<(u64, AbortCode)>,
    /// `(addr, value)` pairs in program order.
    pub reads: Vec<(u64, u64)>,
    pub writes: Vec<(u64, u64)>,
    /// Logical ticket (marker-array engines) or physical commit timestamp.
    pub durts: Option<u64>,
    /// Virtual offset of the transaction's redo entries in its log ring.
    pub log_pos: Option<u64>,
    pub marker_durable: Option<u64>,
    pub dur_wait_steps: u64,
    pub dur_wait_ns: u64,
    /// A non-durable peer that began committing before this transaction
    /// began was seen by the durability wait.
    pub had_predecessor: bool,
}

impl TxRecord {
    pub fn new(thread: usize, seq: u64, attempt: u32, read_only: bool, via_sgl: bool, begin: u64) -> Self {
        Self {
            thread,
            seq,
            attempt,
            read_only,
            via_sgl,
            begin,
            commit_invoke: None,
            htm_commit: None,
            ack: None,
            abort: None,
            reads: Vec::new(),
            writes: Vec::new(),
            durts: None,
            log_pos: None,
            marker_durable: None,
            dur_wait_steps: 0,
            dur_wait_ns: 0,
            had_predecessor: false,
        }
    }

    pub fn committed(&self) -> bool {
        self.htm_commit.is_some() && self.abort.is_none()
    }

    pub fn acked(&self) -> bool {
        self.ack.is_some()
    }

    pub fn is_update(&self) -> bool {
        !self.read_only
    }

    /// Final value written to each address, in first-write order.
    pub fn final_writes(&self) -> Vec<(u64, u64)> {
        let mut out: Vec<(u64, u64)> = Vec::new();
        for &(a, v) in &self.writes {
            match out.iter_mut().find(|(x, _)| *x == a) {
                Some(e) => e.1 = v,
                None => out.push((a, v)),
            }
        }
        out
    }

    /// Everything but the wait statistics and the marker durability time.
    pub fn fingerprint(&self, fp: &mut Fingerprint) {
        fp.seq([self.thread as u64, self.seq, self.attempt as u64, self.read_only as u64, self.via_sgl as u64]);
        fp.time(self.begin);
        fp.opt_time(self.commit_invoke);
        fp.opt_time(self.htm_commit);
        fp.opt_time(self.ack);
        fp.opt_time(self.abort.map(|a| a.0));
        fp.word(self.abort.map_or(0, |a| 1 + a.1 as u64));
        fp.seq(self.reads.iter().flat_map(|&(a, v)| [a, v]));
        fp.seq(self.writes.iter().flat_map(|&(a, v)| [a, v]));
        fp.word(self.durts.map_or(0, |d| d + 1));
        fp.word(self.log_pos.map_or(0, |p| p + 1));
        fp.word(self.marker_durable.is_some() as u64);
    }

    /// Short identifier, e.g. `T1.0#2`.
    pub fn name(&self) -> String {
        format!("T{}.{}#{}", self.thread, self.seq, self.attempt)
    }
}

/// All attempts of a run, in begin order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    pub records: Vec<TxRecord>,
}

impl History {
    pub fn committed(&self) -> impl Iterator<Item = &TxRecord> {
        self.records.iter().filter(|r| r.committed())
    }

    pub fn by_durts(&self, d: u64) -> Option<&TxRecord> {
        self.records.iter().find(|r| r.committed() && r.is_update() && r.durts == Some(d))
    }
}
