//! Best-effort HTM over a volatile shadow heap.
//!
//! Conflicts are detected eagerly at line granularity. Tracked writes are
//! buffered and published atomically at commit. Untracked accesses (ROT
//! loads, accesses while suspended, non-transactional code) are never the
//! victim of a conflict; they doom any peer that tracks the line.

use std::collections::{HashMap, HashSet};

use crate::explore::Fingerprint;
use crate::pm::WORD;

pub type ThreadId = usize;

/// Upper bound on simulated threads (line owner sets are bitmasks).
pub const MAX_THREADS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AbortCode {
    Conflict,
    CapacityRead,
    CapacityWrite,
    Explicit,
    SglPreempt,
    IllegalOperation,
}

impl AbortCode {
    pub const ALL: [AbortCode; 6] = [
        AbortCode::Conflict,
        AbortCode::CapacityRead,
        AbortCode::CapacityWrite,
        AbortCode::Explicit,
        AbortCode::SglPreempt,
        AbortCode::IllegalOperation,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            AbortCode::Conflict => "conflict",
            AbortCode::CapacityRead => "capacity_read",
            AbortCode::CapacityWrite => "capacity_write",
            AbortCode::Explicit => "explicit",
            AbortCode::SglPreempt => "sgl_preempt",
            AbortCode::IllegalOperation => "illegal",
        }
    }

    pub fn is_capacity(self) -> bool {
        matches!(self, AbortCode::CapacityRead | AbortCode::CapacityWrite)
    }
}

/// Access-tracking mode requested at begin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Track {
    AnyAccess,
    /// Rollback-only transaction: loads are never tracked.
    NoLoadTracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxStatus {
    None,
    Active,
    Suspended,
    Committed,
    Aborted(AbortCode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VictimPolicy {
    #[default]
    RequesterWins,
    ResponderWins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapacityConfig {
    pub read_lines: usize,
    pub write_lines: usize,
    pub smt_halved: bool,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self { read_lines: 4096, write_lines: 64, smt_halved: false }
    }
}

impl CapacityConfig {
    pub fn effective(&self) -> (usize, usize) {
        if self.smt_halved {
            ((self.read_lines / 2).max(1), (self.write_lines / 2).max(1))
        } else {
            (self.read_lines, self.write_lines)
        }
    }
}

/// Suspend+resume pair cost, linearly interpolated over 1..=64 threads.
pub fn suspend_pair_cost(cost_1t: u64, cost_64t: u64, threads: usize) -> u64 {
    let t = threads.clamp(1, 64) as f64;
    let c = cost_1t as f64 + (cost_64t as f64 - cost_1t as f64) * (t - 1.0) / 63.0;
    c.round() as u64
}

/// One thread's hardware transaction.
#[derive(Debug, Clone)]
pub struct TxContext {
    pub status: TxStatus,
    pub track_loads: bool,
    pub track_stores: bool,
    pub read_set: HashSet<u64>,
    pub write_set: HashSet<u64>,
    pub write_buffer: HashMap<u64, u64>,
    pub pre_suspend_accessed: HashSet<u64>,
    /// Set when a peer's access killed this transaction; delivered at the
    /// owner's next transactional operation (or at resume).
    pub doomed: Option<AbortCode>,
}

impl Default for TxContext {
    fn default() -> Self {
        Self {
            status: TxStatus::None,
            track_loads: false,
            track_stores: false,
            read_set: HashSet::new(),
            write_set: HashSet::new(),
            write_buffer: HashMap::new(),
            pre_suspend_accessed: HashSet::new(),
            doomed: None,
        }
    }
}

impl TxContext {
    pub fn in_flight(&self) -> bool {
        matches!(self.status, TxStatus::Active | TxStatus::Suspended)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Owners {
    readers: u64,
    writers: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HtmStats {
    pub begins: u64,
    pub commits: u64,
    pub aborts: [u64; 6],
    /// Commits that happened while another thread held the SGL. Must stay 0.
    pub commits_during_sgl: u64,
}

/// The emulated HTM and the volatile heap it guards.
#[derive(Debug, Clone)]
pub struct Htm {
    heap: Vec<u64>,
    line_words: u64,
    cap: CapacityConfig,
    policy: VictimPolicy,
    txs: Vec<TxContext>,
    owners: HashMap<u64, Owners>,
    sgl: Option<ThreadId>,
    stats: HtmStats,
}

impl Htm {
    pub fn fingerprint(&self, fp: &mut Fingerprint) {
        fp.sparse(&self.heap);
        for t in &self.txs {
            fp.word(match t.status {
                TxStatus::None => 0,
                TxStatus::Active => 1,
                TxStatus::Suspended => 2,
                TxStatus::Committed => 3,
                TxStatus::Aborted(c) => 4 + c as u64,
            });
            fp.word(t.track_loads as u64 | (t.track_stores as u64) << 1);
            fp.set(t.read_set.iter().map(|&a| [a]));
            fp.set(t.write_set.iter().map(|&a| [a]));
            fp.set(t.write_buffer.iter().map(|(&a, &v)| [a, v]));
            fp.set(t.pre_suspend_accessed.iter().map(|&a| [a]));
            fp.word(t.doomed.map_or(0, |c| 1 + c as u64));
        }
        fp.set(self.owners.iter().map(|(&l, o)| [l, o.readers, o.writers]));
        fp.word(self.sgl.map_or(0, |t| 1 + t as u64));
        fp.word(self.stats.commits_during_sgl);
    }

    pub fn new(heap_bytes: u64, line_size: u64, threads: usize, cap: CapacityConfig, policy: VictimPolicy) -> Self {
        assert!(threads <= MAX_THREADS, "at most {MAX_THREADS} threads");
        Self {
            heap: vec![0; (heap_bytes / WORD) as usize],
            line_words: line_size / WORD,
            cap,
            policy,
            txs: vec![TxContext::default(); threads],
            owners: HashMap::new(),
            sgl: None,
            stats: HtmStats::default(),
        }
    }

    pub fn heap(&self) -> &[u64] {
        &self.heap
    }

    pub fn heap_bytes(&self) -> u64 {
        self.heap.len() as u64 * WORD
    }

    pub fn ctx(&self, t: ThreadId) -> &TxContext {
        &self.txs[t]
    }

    pub fn status(&self, t: ThreadId) -> TxStatus {
        self.txs[t].status
    }

    pub fn stats(&self) -> &HtmStats {
        &self.stats
    }

    pub fn sgl_holder(&self) -> Option<ThreadId> {
        self.sgl
    }

    fn word(&self, addr: u64) -> usize {
        debug_assert!(addr.is_multiple_of(WORD), "misaligned heap address {addr:#x}");
        let w = (addr / WORD) as usize;
        assert!(w < self.heap.len(), "heap address {addr:#x} out of range");
        w
    }

    fn line(&self, addr: u64) -> u64 {
        addr / WORD / self.line_words
    }

    fn release(&mut self, t: ThreadId) {
        let bit = 1u64 << t;
        let ctx = &mut self.txs[t];
        for l in ctx.read_set.drain().chain(ctx.write_set.drain()) {
            if let Some(o) = self.owners.get_mut(&l) {
                o.readers &= !bit;
                o.writers &= !bit;
                if o.readers == 0 && o.writers == 0 {
                    self.owners.remove(&l);
                }
            }
        }
        ctx.write_buffer.clear();
        ctx.pre_suspend_accessed.clear();
    }

    /// Rolls `t` back immediately.
    fn abort_now(&mut self, t: ThreadId, code: AbortCode) -> AbortCode {
        self.release(t);
        let ctx = &mut self.txs[t];
        ctx.status = TxStatus::Aborted(code);
        ctx.doomed = None;
        self.stats.aborts[code.index()] += 1;
        code
    }

    /// Kills a peer: footprint released now, abort delivered later.
    fn doom(&mut self, t: ThreadId, code: AbortCode) {
        if self.txs[t].in_flight() && self.txs[t].doomed.is_none() {
            self.release(t);
            self.txs[t].doomed = Some(code);
        }
    }

    /// Delivers a pending doom if the transaction is running tracked.
    fn check_doomed(&mut self, t: ThreadId) -> Result<(), AbortCode> {
        let ctx = &self.txs[t];
        if ctx.status == TxStatus::Active {
            if let Some(code) = ctx.doomed {
                return Err(self.abort_now(t, code));
            }
        }
        Ok(())
    }

    fn peers(mask: u64, me: ThreadId) -> impl Iterator<Item = ThreadId> {
        (0..MAX_THREADS).filter(move |p| *p != me && mask & (1u64 << p) != 0)
    }

    pub fn htm_begin(&mut self, t: ThreadId, mode: Track) -> Result<(), AbortCode> {
        if self.txs[t].in_flight() {
            return Err(self.abort_now(t, AbortCode::IllegalOperation));
        }
        self.stats.begins += 1;
        self.txs[t] = TxContext {
            status: TxStatus::Active,
            track_loads: mode == Track::AnyAccess,
            track_stores: true,
            ..TxContext::default()
        };
        if self.sgl.is_some_and(|h| h != t) {
            return Err(self.abort_now(t, AbortCode::SglPreempt));
        }
        Ok(())
    }

    fn tracking(&self, t: ThreadId) -> (bool, bool) {
        let ctx = &self.txs[t];
        if ctx.status == TxStatus::Active {
            (ctx.track_loads, ctx.track_stores)
        } else {
            (false, false)
        }
    }

    /// Transactional (or untracked, when not tracking loads) read.
    pub fn tx_read(&mut self, t: ThreadId, addr: u64) -> Result<u64, AbortCode> {
        self.check_doomed(t)?;
        let w = self.word(addr);
        if let Some(v) = self.txs[t].write_buffer.get(&(w as u64)) {
            return Ok(*v);
        }
        let line = self.line(addr);
        let (track_loads, _) = self.tracking(t);
        let writers = self.owners.get(&line).map_or(0, |o| o.writers) & !(1u64 << t);
        if track_loads {
            for p in Self::peers(writers, t) {
                let peer_suspended = self.txs[p].status == TxStatus::Suspended;
                if peer_suspended || self.policy == VictimPolicy::ResponderWins {
                    return Err(self.abort_now(t, AbortCode::Conflict));
                }
                self.doom(p, AbortCode::Conflict);
            }
            let ctx = &self.txs[t];
            if !ctx.read_set.contains(&line) && !ctx.write_set.contains(&line) {
                let (rcap, _) = self.cap.effective();
                if ctx.read_set.len() >= rcap {
                    return Err(self.abort_now(t, AbortCode::CapacityRead));
                }
                self.txs[t].read_set.insert(line);
                self.owners.entry(line).or_default().readers |= 1u64 << t;
            }
        } else {
            for p in Self::peers(writers, t) {
                self.doom(p, AbortCode::Conflict);
            }
        }
        Ok(self.heap[w])
    }

    /// Transactional write: buffered when tracked, immediate when suspended.
    pub fn tx_write(&mut self, t: ThreadId, addr: u64, value: u64) -> Result<(), AbortCode> {
        self.check_doomed(t)?;
        let w = self.word(addr);
        let line = self.line(addr);
        let status = self.txs[t].status;
        if status == TxStatus::Suspended {
            if self.txs[t].pre_suspend_accessed.contains(&line) {
                return Err(self.abort_now(t, AbortCode::IllegalOperation));
            }
            self.untracked_write(t, line, w, value);
            return Ok(());
        }
        if status != TxStatus::Active {
            return Err(AbortCode::IllegalOperation);
        }
        let o = self.owners.get(&line).copied().unwrap_or_default();
        let others = (o.readers | o.writers) & !(1u64 << t);
        for p in Self::peers(others, t) {
            let suspended_writer = self.txs[p].status == TxStatus::Suspended && o.writers & (1u64 << p) != 0;
            if suspended_writer || self.policy == VictimPolicy::ResponderWins {
                return Err(self.abort_now(t, AbortCode::Conflict));
            }
            self.doom(p, AbortCode::Conflict);
        }
        if !self.txs[t].write_set.contains(&line) {
            let (_, wcap) = self.cap.effective();
            if self.txs[t].write_set.len() >= wcap {
                return Err(self.abort_now(t, AbortCode::CapacityWrite));
            }
            self.txs[t].write_set.insert(line);
            let e = self.owners.entry(line).or_default();
            e.writers |= 1u64 << t;
        }
        self.txs[t].write_buffer.insert(w as u64, value);
        Ok(())
    }

    fn untracked_write(&mut self, t: ThreadId, line: u64, w: usize, value: u64) {
        let o = self.owners.get(&line).copied().unwrap_or_default();
        for p in Self::peers(o.readers | o.writers, t) {
            self.doom(p, AbortCode::Conflict);
        }
        self.heap[w] = value;
    }

    /// Plain load outside any transaction.
    pub fn read_nontx(&mut self, t: ThreadId, addr: u64) -> u64 {
        let w = self.word(addr);
        let line = self.line(addr);
        let writers = self.owners.get(&line).map_or(0, |o| o.writers);
        for p in Self::peers(writers, t) {
            self.doom(p, AbortCode::Conflict);
        }
        self.heap[w]
    }

    /// Plain store outside any transaction.
    pub fn write_nontx(&mut self, t: ThreadId, addr: u64, value: u64) {
        let w = self.word(addr);
        let line = self.line(addr);
        self.untracked_write(t, line, w, value);
    }

    pub fn suspend(&mut self, t: ThreadId) -> Result<(), AbortCode> {
        match self.txs[t].status {
            TxStatus::Active => {
                self.check_doomed(t)?;
                let ctx = &mut self.txs[t];
                ctx.pre_suspend_accessed = ctx.read_set.union(&ctx.write_set).copied().collect();
                ctx.status = TxStatus::Suspended;
                Ok(())
            }
            TxStatus::Suspended => Err(self.abort_now(t, AbortCode::IllegalOperation)),
            _ => Err(AbortCode::IllegalOperation),
        }
    }

    pub fn resume(&mut self, t: ThreadId) -> Result<(), AbortCode> {
        match self.txs[t].status {
            TxStatus::Suspended => {
                self.txs[t].status = TxStatus::Active;
                self.txs[t].pre_suspend_accessed.clear();
                self.check_doomed(t)
            }
            TxStatus::Active => Err(self.abort_now(t, AbortCode::IllegalOperation)),
            _ => Err(AbortCode::IllegalOperation),
        }
    }

    pub fn htm_commit(&mut self, t: ThreadId) -> Result<(), AbortCode> {
        match self.txs[t].status {
            TxStatus::Active => {}
            TxStatus::Suspended => return Err(self.abort_now(t, AbortCode::IllegalOperation)),
            _ => return Err(AbortCode::IllegalOperation),
        }
        self.check_doomed(t)?;
        if self.sgl.is_some_and(|h| h != t) {
            self.stats.commits_during_sgl += 1;
        }
        let buf: Vec<(u64, u64)> = self.txs[t].write_buffer.drain().collect();
        for (w, v) in buf {
            self.heap[w as usize] = v;
        }
        self.release(t);
        self.txs[t].status = TxStatus::Committed;
        self.stats.commits += 1;
        Ok(())
    }

    pub fn htm_abort(&mut self, t: ThreadId) -> AbortCode {
        if self.txs[t].in_flight() {
            self.abort_now(t, AbortCode::Explicit)
        } else {
            AbortCode::IllegalOperation
        }
    }

    /// Takes the single global lock, killing every in-flight transaction.
    pub fn acquire_sgl(&mut self, t: ThreadId) {
        assert!(self.sgl.is_none(), "SGL already held");
        self.sgl = Some(t);
        for p in 0..self.txs.len() {
            if p != t {
                self.doom(p, AbortCode::SglPreempt);
            }
        }
    }

    pub fn release_sgl(&mut self, t: ThreadId) {
        assert_eq!(self.sgl, Some(t), "SGL released by non-holder");
        self.sgl = None;
    }

    /// Runs `body` as a hardware transaction, retrying up to `max_retries`
    /// times and then once under the SGL.
    pub fn run_transaction<R>(
        &mut self,
        t: ThreadId,
        mode: Track,
        max_retries: u32,
        mut body: impl FnMut(&mut TxAccess<'_>) -> Result<R, AbortCode>,
    ) -> RunOutcome<R> {
        let mut aborts = Vec::new();
        for _ in 0..max_retries {
            let attempt = self.htm_begin(t, mode).and_then(|_| {
                let r = body(&mut TxAccess { htm: self, t, sgl: false })?;
                self.htm_commit(t)?;
                Ok(r)
            });
            match attempt {
                Ok(r) => return RunOutcome { value: r, htm_attempts: aborts.len() as u32 + 1, aborts, via_sgl: false },
                Err(code) => {
                    if self.txs[t].in_flight() {
                        self.abort_now(t, code);
                    }
                    aborts.push(code);
                }
            }
        }
        self.acquire_sgl(t);
        let value = loop {
            if let Ok(v) = body(&mut TxAccess { htm: self, t, sgl: true }) {
                break v;
            }
        };
        self.release_sgl(t);
        RunOutcome { value, htm_attempts: aborts.len() as u32, aborts, via_sgl: true }
    }
}

/// Accessor handed to [`Htm::run_transaction`] bodies.
pub struct TxAccess<'a> {
    htm: &'a mut Htm,
    t: ThreadId,
    sgl: bool,
}

impl TxAccess<'_> {
    pub fn read(&mut self, addr: u64) -> Result<u64, AbortCode> {
        if self.sgl {
            Ok(self.htm.read_nontx(self.t, addr))
        } else {
            self.htm.tx_read(self.t, addr)
        }
    }

    pub fn write(&mut self, addr: u64, value: u64) -> Result<(), AbortCode> {
        if self.sgl {
            self.htm.write_nontx(self.t, addr, value);
            Ok(())
        } else {
            self.htm.tx_write(self.t, addr, value)
        }
    }

    /// Explicit abort; a no-op under the SGL, which cannot roll back.
    pub fn abort(&mut self) -> Result<(), AbortCode> {
        if self.sgl {
            Ok(())
        } else {
            Err(self.htm.htm_abort(self.t))
        }
    }

    pub fn under_sgl(&self) -> bool {
        self.sgl
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome<R> {
    pub value: R,
    pub htm_attempts: u32,
    pub aborts: Vec<AbortCode>,
    pub via_sgl: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: u64 = 128;

    fn htm(threads: usize) -> Htm {
        Htm::new(1 << 20, LINE, threads, CapacityConfig::default(), VictimPolicy::RequesterWins)
    }

    fn small(r: usize, w: usize) -> Htm {
        Htm::new(1 << 20, LINE, 2, CapacityConfig { read_lines: r, write_lines: w, smt_halved: false }, VictimPolicy::RequesterWins)
    }

    #[test]
    fn empty_commit() {
        let mut h = htm(1);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        h.htm_commit(0).unwrap();
        assert_eq!(h.status(0), TxStatus::Committed);
    }

    #[test]
    fn nesting_is_illegal() {
        let mut h = htm(1);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        assert_eq!(h.htm_begin(0, Track::AnyAccess), Err(AbortCode::IllegalOperation));
        assert_eq!(h.status(0), TxStatus::Aborted(AbortCode::IllegalOperation));
    }

    #[test]
    fn rot_reads_are_unbounded() {
        let mut h = Htm::new(1_000_000 * LINE, LINE, 1, CapacityConfig::default(), VictimPolicy::RequesterWins);
        h.htm_begin(0, Track::NoLoadTracking).unwrap();
        for i in 0..1_000_000u64 {
            h.tx_read(0, i * LINE).unwrap();
        }
        assert!(h.ctx(0).read_set.is_empty());
        h.htm_commit(0).unwrap();
    }

    #[test]
    fn read_your_writes() {
        let mut h = htm(1);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        h.tx_write(0, 16, 5).unwrap();
        assert_eq!(h.tx_read(0, 16).unwrap(), 5);
        assert_eq!(h.heap()[2], 0);
        h.htm_commit(0).unwrap();
        assert_eq!(h.heap()[2], 5);
    }

    #[test]
    fn read_capacity_is_exact() {
        let mut h = small(8, 8);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        for i in 0..8 {
            h.tx_read(0, i * LINE).unwrap();
        }
        h.htm_commit(0).unwrap();
        h.htm_begin(0, Track::AnyAccess).unwrap();
        for i in 0..8 {
            h.tx_read(0, i * LINE).unwrap();
        }
        assert_eq!(h.tx_read(0, 8 * LINE), Err(AbortCode::CapacityRead));
    }

    #[test]
    fn write_capacity_is_exact() {
        let mut h = small(8, 4);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        for i in 0..4 {
            h.tx_write(0, i * LINE, 1).unwrap();
        }
        assert_eq!(h.tx_write(0, 4 * LINE, 1), Err(AbortCode::CapacityWrite));
    }

    #[test]
    fn smt_halves_capacity() {
        let c = CapacityConfig { read_lines: 4096, write_lines: 64, smt_halved: true };
        assert_eq!(c.effective(), (2048, 32));
    }

    #[test]
    fn tracked_read_of_peer_write_aborts_exactly_one() {
        let mut h = htm(2);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        h.htm_begin(1, Track::AnyAccess).unwrap();
        h.tx_write(0, 0, 1).unwrap();
        h.tx_read(1, 0).unwrap();
        assert_eq!(h.htm_commit(0), Err(AbortCode::Conflict));
        assert!(h.htm_commit(1).is_ok());
    }

    #[test]
    fn nontx_reader_dooms_writer() {
        let mut h = htm(2);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        h.tx_write(0, 0, 1).unwrap();
        assert_eq!(h.read_nontx(1, 0), 0);
        assert_eq!(h.htm_commit(0), Err(AbortCode::Conflict));
        assert_eq!(h.heap()[0], 0);
    }

    #[test]
    fn rot_reader_is_never_victim() {
        let mut h = htm(2);
        h.htm_begin(0, Track::NoLoadTracking).unwrap();
        h.tx_read(0, 0).unwrap();
        h.htm_begin(1, Track::AnyAccess).unwrap();
        h.tx_write(1, 0, 9).unwrap();
        h.htm_commit(1).unwrap();
        h.htm_commit(0).unwrap();
    }

    #[test]
    fn suspended_reads_do_not_grow_read_set() {
        let mut h = htm(1);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        h.tx_read(0, 0).unwrap();
        h.suspend(0).unwrap();
        h.tx_read(0, LINE).unwrap();
        assert_eq!(h.ctx(0).read_set.len(), 1);
        h.resume(0).unwrap();
        h.htm_commit(0).unwrap();
    }

    #[test]
    fn suspended_write_to_fresh_line_is_visible() {
        let mut h = htm(2);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        h.suspend(0).unwrap();
        h.tx_write(0, 5 * LINE, 3).unwrap();
        assert_eq!(h.read_nontx(1, 5 * LINE), 3);
    }

    #[test]
    fn suspended_write_to_accessed_line_is_illegal() {
        let mut h = htm(1);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        h.tx_write(0, 0, 1).unwrap();
        h.suspend(0).unwrap();
        assert_eq!(h.tx_write(0, 8, 2), Err(AbortCode::IllegalOperation));
    }

    #[test]
    fn suspension_errors() {
        let mut h = htm(1);
        assert_eq!(h.resume(0), Err(AbortCode::IllegalOperation));
        h.htm_begin(0, Track::AnyAccess).unwrap();
        assert_eq!(h.resume(0), Err(AbortCode::IllegalOperation));
        h.htm_begin(0, Track::AnyAccess).unwrap();
        h.suspend(0).unwrap();
        assert_eq!(h.suspend(0), Err(AbortCode::IllegalOperation));
        h.htm_begin(0, Track::AnyAccess).unwrap();
        h.suspend(0).unwrap();
        assert_eq!(h.htm_commit(0), Err(AbortCode::IllegalOperation));
    }

    #[test]
    fn sets_stay_armed_while_suspended() {
        let mut h = htm(2);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        h.tx_write(0, 0, 1).unwrap();
        h.suspend(0).unwrap();
        h.write_nontx(1, 0, 7);
        assert_eq!(h.resume(0), Err(AbortCode::Conflict));
        assert_eq!(h.heap()[0], 7);
    }

    #[test]
    fn tracked_requester_on_suspended_writer_aborts_itself() {
        let mut h = htm(2);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        h.tx_write(0, 0, 1).unwrap();
        h.suspend(0).unwrap();
        h.htm_begin(1, Track::AnyAccess).unwrap();
        assert_eq!(h.tx_write(1, 0, 2), Err(AbortCode::Conflict));
        h.resume(0).unwrap();
        h.htm_commit(0).unwrap();
    }

    #[test]
    fn responder_wins_policy() {
        let mut h = Htm::new(1 << 16, LINE, 2, CapacityConfig::default(), VictimPolicy::ResponderWins);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        h.tx_write(0, 0, 1).unwrap();
        h.htm_begin(1, Track::AnyAccess).unwrap();
        assert_eq!(h.tx_read(1, 0), Err(AbortCode::Conflict));
        h.htm_commit(0).unwrap();
    }

    #[test]
    fn sgl_preempts_and_blocks() {
        let mut h = htm(2);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        h.acquire_sgl(1);
        assert_eq!(h.tx_read(0, 0), Err(AbortCode::SglPreempt));
        assert_eq!(h.htm_begin(0, Track::AnyAccess), Err(AbortCode::SglPreempt));
        h.release_sgl(1);
        h.htm_begin(0, Track::AnyAccess).unwrap();
        h.htm_commit(0).unwrap();
        assert_eq!(h.stats().commits_during_sgl, 0);
    }

    #[test]
    fn run_transaction_first_try() {
        let mut h = htm(1);
        let out = h.run_transaction(0, Track::AnyAccess, 10, |tx| tx.write(0, 4));
        assert_eq!(out.htm_attempts, 1);
        assert!(!out.via_sgl);
        assert_eq!(h.heap()[0], 4);
    }

    #[test]
    fn run_transaction_falls_back_after_ten() {
        let mut h = htm(1);
        let mut calls = 0;
        let out = h.run_transaction(0, Track::AnyAccess, 10, |tx| {
            calls += 1;
            tx.write(0, 1)?;
            tx.abort()
        });
        assert_eq!(out.htm_attempts, 10);
        assert!(out.via_sgl);
        assert_eq!(calls, 11);
        assert!(out.aborts.iter().all(|c| *c == AbortCode::Explicit));
        assert_eq!(h.heap()[0], 1);
        assert_eq!(h.sgl_holder(), None);
    }

    #[test]
    fn suspend_cost_endpoints() {
        assert_eq!(suspend_pair_cost(350, 1500, 1), 350);
        assert_eq!(suspend_pair_cost(350, 1500, 64), 1500);
        let mid = suspend_pair_cost(350, 1500, 32);
        assert!(mid > 350 && mid < 1500);
    }
}
