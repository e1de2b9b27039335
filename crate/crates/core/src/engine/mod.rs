//! The simulator that drives every engine.
//!
//! Workers are resumable state machines walking the op programs in
//! [`ops`]. A scheduler picks one worker per step: the explorer and
//! [`Sim::run_random`] choose freely, [`Sim::run_des`] picks the worker that
//! is ready earliest in virtual time. Deterministic time mode completes
//! flushes only at fences; virtual time mode completes them after the
//! configured latency.

pub mod history;
pub mod invariants;
pub mod metrics;
pub mod ops;

use std::collections::{BTreeSet, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clock::{SimClock, TimeMode};
use crate::config::{Config, Engine, EngineKind, NonDurableStamp, TimeModeCfg};
use crate::error::SimError;
use crate::explore::{Explorable, Fingerprint};
use crate::htm::{AbortCode, Htm, MAX_THREADS};
use crate::layout::{LogLayout, MarkerEntry, ENTRY_BYTES, MARKER_BYTES, TAIL_ADDR};
use crate::pm::{CrashImage, CrashState, FlushCompletion, LogFormat, Pm, RegionId, WORD};
use crate::replay::{classify, inline_candidate, inline_entries, marker_entries, SlotClass};
use crate::tx::{Access, TxSource, TxSpec};

pub use history::{History, TxRecord};
pub use invariants::Invariants;
pub use metrics::{Bucket, MetricsRecord};
use ops::{program, uses_htm, FenceKind, Op, WaitKind, FINAL};

/// Where a crash point was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashSite {
    /// Right after a flush was issued.
    Flush,
    /// At a fence, before it drained anything.
    Fence,
    /// Right after a transaction returned from commit.
    Ack,
}

/// A captured crash point: durable state, in-flight flushes and the history
/// up to that moment (including unfinished attempts).
#[derive(Debug, Clone)]
pub struct CrashPoint {
    pub site: CrashSite,
    pub state: CrashState,
    pub history: History,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SphtSlot {
    Idle,
    /// Conservatively low timestamp (the begin time) of a running update.
    Pending(u64),
    /// Committed with this timestamp, not durable yet.
    Committed(u64),
}

#[derive(Debug, Clone)]
struct ReplayJob {
    phase: u8,
    tail: u64,
    heads: Vec<u64>,
}

enum Flow {
    /// Op done, continue the step.
    Next,
    /// Op done, end the step.
    End,
    /// End the step without leaving the op.
    Stay,
    Block,
    Abort(AbortCode),
    /// Transaction returned; pick up the next one.
    Fetch,
}

#[derive(Debug, Clone)]
struct Worker {
    /// `None` for the background replayer.
    source: Option<Box<dyn TxSource>>,
    seq: u64,
    tx: Option<TxSpec>,
    sgl: bool,
    prog: &'static [Op],
    pc: usize,
    body_pos: usize,
    attempt: u32,
    in_htm: bool,
    begin_time: u64,
    stamp: u64,
    spht_ts: u64,
    durts: Option<u64>,
    dts: Option<u64>,
    vlog: Vec<(u64, u64)>,
    deps: HashSet<u64>,
    alloc: Option<(u64, u64)>,
    vnext: u64,
    vfree: u64,
    /// `(durts, ring end)` of logged commits not yet replayed.
    outstanding: VecDeque<(u64, u64)>,
    snapshot: Vec<(usize, u64)>,
    pending_abort: Option<u64>,
    abort_unfenced: bool,
    ready_at: u64,
    /// `(time, step)` at which the worker blocked.
    blocked: Option<(u64, u64)>,
    woke_at: Option<u64>,
    done: bool,
    rec: Option<TxRecord>,
    acc: [u64; 6],
    rolled: u64,
    iso_ns: u64,
    fence_ns: u64,
    dur_steps: u64,
    dur_ns: u64,
    had_pred: bool,
    replay: Option<ReplayJob>,
}

impl Worker {
    fn new(source: Option<Box<dyn TxSource>>) -> Self {
        Self {
            source,
            seq: 0,
            tx: None,
            sgl: false,
            prog: &[],
            pc: 0,
            body_pos: 0,
            attempt: 0,
            in_htm: false,
            begin_time: 0,
            stamp: 0,
            spht_ts: 0,
            durts: None,
            dts: None,
            vlog: Vec::new(),
            deps: HashSet::new(),
            alloc: None,
            vnext: 0,
            vfree: 0,
            outstanding: VecDeque::new(),
            snapshot: Vec::new(),
            pending_abort: None,
            abort_unfenced: false,
            ready_at: 0,
            blocked: None,
            woke_at: None,
            done: false,
            rec: None,
            acc: [0; 6],
            rolled: 0,
            iso_ns: 0,
            fence_ns: 0,
            dur_steps: 0,
            dur_ns: 0,
            had_pred: false,
            replay: None,
        }
    }

    fn read_only(&self) -> bool {
        self.tx.as_ref().is_some_and(|t| t.read_only)
    }
}

/// One simulated machine running one engine.
#[derive(Debug, Clone)]
pub struct Sim {
    cfg: Config,
    engine: Engine,
    explore: bool,
    threads: usize,
    htm: Htm,
    pm: Pm,
    layout: LogLayout,
    clock: SimClock,
    now: u64,
    cost: u64,
    suspend_half: u64,
    active: Vec<u64>,
    nondurable: Vec<u64>,
    spht: Vec<SphtSlot>,
    next_durts: u64,
    tail: u64,
    heads: Vec<u64>,
    replay_owner: Option<usize>,
    workers: Vec<Worker>,
    history: History,
    metrics: MetricsRecord,
    inv: Invariants,
    crash: Option<Vec<CrashPoint>>,
    crash_seq: u64,
    time_limit: Option<u64>,
    error: Option<SimError>,
}

impl Sim {
    /// Builds a machine with one worker per transaction source (plus the
    /// background replayer when enabled).
    pub fn new(cfg: &Config, sources: Vec<Box<dyn TxSource>>) -> Self {
        let threads = sources.len();
        assert!((1..=MAX_THREADS).contains(&threads), "1..={MAX_THREADS} workers required");
        let engine = cfg.sim.engine;
        let format = match engine.kind {
            EngineKind::Dumbo => LogFormat::MarkerArray,
            EngineKind::Spht | EngineKind::NaiveCombo => LogFormat::InlineScan,
            EngineKind::HtmSgl => LogFormat::None,
        };
        let pl = LogLayout::pm_layout(
            cfg.pm.line_size,
            cfg.pm.heap_bytes,
            cfg.pm.log_bytes,
            cfg.pm.marker_slots.max(1),
            threads as u32,
            format,
        );
        let explore = cfg.sim.time_mode == TimeModeCfg::Deterministic;
        let completion = if explore { FlushCompletion::OnFence } else { FlushCompletion::AfterLatency };
        let mode = if explore { TimeMode::Deterministic { tick: cfg.sim.tick.max(1) } } else { TimeMode::Virtual };
        let mut workers: Vec<Worker> = sources.into_iter().map(|s| Worker::new(Some(s))).collect();
        if cfg.sim.background_replay && engine.is_durable() {
            workers.push(Worker::new(None));
        }
        let mut cfg = cfg.clone();
        cfg.sim.threads = threads;
        Self {
            engine,
            explore,
            threads,
            htm: Htm::new(pl.heap_bytes, pl.line_size, threads, cfg.htm.capacity, cfg.htm.victim_policy),
            pm: Pm::new(pl, cfg.pm.flush_latency_ns, completion),
            layout: LogLayout::new(&pl),
            clock: SimClock::new(mode),
            now: 0,
            cost: 0,
            suspend_half: cfg.suspend_pair_ns() / 2,
            active: vec![0; threads],
            nondurable: vec![0; threads],
            spht: vec![SphtSlot::Idle; threads],
            next_durts: 0,
            tail: 0,
            heads: vec![0; threads],
            replay_owner: None,
            workers,
            history: History::default(),
            metrics: MetricsRecord::default(),
            inv: Invariants::default(),
            crash: None,
            crash_seq: 0,
            time_limit: None,
            error: None,
            cfg,
        }
    }

    /// Records a [`CrashPoint`] at every flush issue, fence and commit return.
    pub fn enable_crash_capture(&mut self) {
        self.cfg.sim.record_history = true;
        self.crash.get_or_insert_with(Vec::new);
    }

    pub fn take_crash_points(&mut self) -> Vec<CrashPoint> {
        self.crash.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn engine(&self) -> Engine {
        self.engine
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn metrics(&self) -> &MetricsRecord {
        &self.metrics
    }

    pub fn invariants(&self) -> &Invariants {
        &self.inv
    }

    pub fn htm(&self) -> &Htm {
        &self.htm
    }

    pub fn pm(&self) -> &Pm {
        &self.pm
    }

    pub fn pm_mut(&mut self) -> &mut Pm {
        &mut self.pm
    }

    pub fn layout(&self) -> &LogLayout {
        &self.layout
    }

    pub fn error(&self) -> Option<&SimError> {
        self.error.as_ref()
    }

    pub fn steps(&self) -> u64 {
        self.clock.steps()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// The volatile heap as the application sees it.
    pub fn heap(&self) -> &[u64] {
        self.htm.heap()
    }

    /// The image a clean shutdown would leave.
    pub fn shutdown_image(&self) -> CrashImage {
        self.pm.shutdown_image()
    }

    /// State identity for exploration, ignoring metrics and DES timing.
    /// Step times are rank-normalized unless the engine persists physical
    /// timestamps, whose raw values then stay significant.
    pub fn fingerprint(&self) -> Option<u128> {
        if !self.explore || self.crash.is_some() || self.pm.flush_log_enabled() || self.cfg.pm.clock_skew_ns != 0 {
            return None;
        }
        let mut fp = Fingerprint::new(!matches!(self.engine.kind, EngineKind::Spht | EngineKind::NaiveCombo));
        for w in &self.workers {
            match &w.source {
                Some(src) => fp.word(src.fingerprint()?),
                None => fp.word(u64::MAX),
            }
            fp.seq([w.seq, w.sgl as u64, w.prog.as_ptr() as u64, w.prog.len() as u64, w.pc as u64, w.body_pos as u64]);
            match &w.tx {
                Some(t) => {
                    fp.word(1 + t.read_only as u64);
                    fp.seq(t.accesses.iter().flat_map(|a| match *a {
                        Access::Read(x) => [0, x, 0],
                        Access::Write(x, v) => [1, x, v],
                    }));
                }
                None => fp.word(0),
            }
            fp.seq([w.attempt as u64, w.in_htm as u64, w.done as u64, w.blocked.is_some() as u64, w.abort_unfenced as u64]);
            fp.time(w.begin_time);
            fp.time(w.stamp);
            fp.time(w.spht_ts);
            fp.seq([
                w.durts.map_or(0, |d| d + 1),
                w.dts.map_or(0, |d| d + 1),
                w.pending_abort.map_or(0, |d| d + 1),
                w.vnext,
                w.vfree,
            ]);
            fp.seq(w.alloc.map_or(vec![], |(a, b)| vec![a, b]));
            fp.seq(w.vlog.iter().flat_map(|&(a, v)| [a, v]));
            fp.set(w.deps.iter().map(|&d| [d]));
            fp.seq(w.outstanding.iter().flat_map(|&(a, b)| [a, b]));
            fp.word(w.snapshot.len() as u64);
            for &(p, t) in &w.snapshot {
                fp.word(p as u64);
                fp.time(t);
            }
            match &w.replay {
                Some(j) => {
                    fp.seq([j.phase as u64, j.tail]);
                    fp.seq(j.heads.iter().copied());
                }
                None => fp.word(u64::MAX),
            }
            match &w.rec {
                Some(r) => r.fingerprint(&mut fp),
                None => fp.word(u64::MAX),
            }
        }
        for t in 0..self.threads {
            fp.time(self.active[t]);
            fp.time(self.nondurable[t]);
            match self.spht[t] {
                SphtSlot::Idle => fp.word(0),
                SphtSlot::Pending(l) => {
                    fp.word(1);
                    fp.time(l);
                }
                SphtSlot::Committed(c) => {
                    fp.word(2);
                    fp.time(c);
                }
            }
        }
        fp.seq([self.next_durts, self.tail, self.replay_owner.map_or(0, |o| o as u64 + 1), self.error.is_some() as u64]);
        fp.seq(self.heads.iter().copied());
        fp.word(self.history.records.len() as u64);
        for r in &self.history.records {
            r.fingerprint(&mut fp);
        }
        self.inv.fingerprint(&mut fp);
        self.htm.fingerprint(&mut fp);
        self.pm.fingerprint(&mut fp);
        Some(fp.finish())
    }

    pub fn all_done(&self) -> bool {
        self.workers.iter().all(|w| w.done)
    }

    /// Workers that can take a step now.
    pub fn runnable(&self) -> Vec<usize> {
        if self.error.is_some() {
            return Vec::new();
        }
        (0..self.workers.len())
            .filter(|&w| !self.workers[w].done && (self.workers[w].blocked.is_none() || self.guard(w)))
            .collect()
    }

    fn blocked_count(&self) -> usize {
        self.workers.iter().filter(|w| !w.done && w.blocked.is_some()).count()
    }

    /// Lets in-flight flushes complete when nobody can run. Returns whether
    /// anything changed.
    pub fn settle(&mut self) -> bool {
        let Some(t) = self.pm.pending().iter().map(|p| p.completes_at).min() else {
            return false;
        };
        if self.explore {
            self.pm.quiesce(self.now);
        } else {
            self.now = self.now.max(t);
            self.pm.advance(self.now);
        }
        true
    }

    /// Runs with uniformly random scheduling choices.
    pub fn run_random(&mut self, seed: u64, max_steps: u64) -> Result<(), SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            if let Some(e) = &self.error {
                return Err(e.clone());
            }
            if self.all_done() {
                break;
            }
            if self.clock.steps() >= max_steps {
                return Err(SimError::StepLimit(max_steps));
            }
            let choices = self.runnable();
            if choices.is_empty() {
                if self.settle() {
                    continue;
                }
                return Err(SimError::Deadlock { step: self.clock.steps(), blocked: self.blocked_count() });
            }
            let w = choices[rng.random_range(0..choices.len())];
            self.step(w);
        }
        self.finish();
        Ok(())
    }

    /// Discrete-event run: always steps the worker that is ready earliest.
    /// With `time_limit`, workers stop starting transactions once virtual
    /// time passes it.
    pub fn run_des(&mut self, time_limit: Option<u64>, max_steps: u64) -> Result<(), SimError> {
        self.time_limit = time_limit;
        let spin = self.cfg.sim.costs.spin_ns;
        loop {
            if let Some(e) = &self.error {
                return Err(e.clone());
            }
            if self.all_done() {
                break;
            }
            if self.clock.steps() >= max_steps {
                return Err(SimError::StepLimit(max_steps));
            }
            let mut best: Option<(u64, usize)> = None;
            for w in 0..self.workers.len() {
                if self.workers[w].done {
                    continue;
                }
                let ready = if self.workers[w].blocked.is_some() {
                    if !self.guard(w) {
                        self.workers[w].woke_at = None;
                        continue;
                    }
                    let now = self.now;
                    let woke = *self.workers[w].woke_at.get_or_insert(now);
                    self.workers[w].ready_at.max(woke + spin)
                } else {
                    self.workers[w].ready_at
                };
                if best.is_none_or(|(r, _)| ready < r) {
                    best = Some((ready, w));
                }
            }
            match best {
                Some((_, w)) => self.step(w),
                None => {
                    if !self.settle() {
                        return Err(SimError::Deadlock { step: self.clock.steps(), blocked: self.blocked_count() });
                    }
                }
            }
        }
        self.finish();
        Ok(())
    }

    fn finish(&mut self) {
        let end = self.workers.iter().map(|w| w.ready_at).fold(self.now, u64::max);
        self.metrics.elapsed_ns = end;
    }

    fn clock_read(&self, w: usize) -> u64 {
        self.now + (w as u64 % 2) * self.cfg.pm.clock_skew_ns
    }

    fn durable_engine(&self) -> bool {
        self.engine.is_durable()
    }

    fn inline(&self) -> bool {
        matches!(self.engine.kind, EngineKind::Spht | EngineKind::NaiveCombo)
    }

    fn charge(&mut self, w: usize, b: Bucket, ns: u64) {
        self.cost += ns;
        self.workers[w].acc[b as usize] += ns;
    }

    fn capture(&mut self, site: CrashSite) {
        if self.crash.is_none() {
            return;
        }
        let mut history = self.history.clone();
        for wk in &self.workers {
            if let Some(r) = &wk.rec {
                history.records.push(r.clone());
            }
        }
        let state = self.pm.crash_state(self.crash_seq);
        self.crash_seq += 1;
        if let Some(points) = self.crash.as_mut() {
            points.push(CrashPoint { site, state, history });
        }
    }

    /// Time stamped on flushes and marker durability. Exploration keeps every
    /// stored time at a step boundary.
    fn stamp_at(&self) -> u64 {
        if self.explore {
            self.now
        } else {
            self.now + self.cost
        }
    }

    fn flush_lines(&mut self, w: usize, region: RegionId, lines: impl IntoIterator<Item = u64>) {
        for l in lines {
            let at = self.stamp_at();
            let t = self.pm.flush_line_async(w, region, l, at).expect("flush within region");
            if !t.is_complete() {
                self.capture(CrashSite::Flush);
            }
        }
    }

    /// Drains the worker's flushes; returns the wait in ns.
    fn fence(&mut self, w: usize, b: Bucket) -> u64 {
        if self.pm.has_pending(w) {
            self.capture(CrashSite::Fence);
        }
        let at = self.stamp_at();
        let done = self.pm.drain_fence(w, at);
        let wait = done.saturating_sub(at);
        self.charge(w, b, wait);
        wait
    }

    fn write_words(&mut self, region: RegionId, addr: u64, words: &[u64]) {
        for (i, v) in words.iter().enumerate() {
            self.pm.write_word(region, addr + i as u64 * WORD, *v).expect("write within region");
        }
    }

    fn slot_free(&self, d: u64) -> bool {
        d < self.tail + self.layout.marker_slots
    }

    fn write_abort_marker(&mut self, w: usize, d: u64) {
        let addr = self.layout.marker_addr(d);
        self.write_words(RegionId::DurMarkers, addr, &MarkerEntry::abort(d).encode());
        self.flush_lines(w, RegionId::DurMarkers, [addr / self.layout.line_size]);
        self.workers[w].abort_unfenced = true;
    }

    fn log_bytes(&self, n: u64) -> u64 {
        if self.inline() {
            LogLayout::inline_record_bytes(n)
        } else {
            n * ENTRY_BYTES
        }
    }

    fn space_ok(&self, w: usize) -> bool {
        let wk = &self.workers[w];
        let bytes = self.log_bytes(wk.vlog.len() as u64);
        bytes > self.layout.ring_bytes() || wk.vnext + bytes - wk.vfree <= self.layout.ring_bytes()
    }

    fn spht_bound(&self) -> u64 {
        self.spht
            .iter()
            .map(|s| match s {
                SphtSlot::Idle => u64::MAX,
                SphtSlot::Pending(l) => *l,
                SphtSlot::Committed(c) => *c,
            })
            .min()
            .unwrap_or(u64::MAX)
    }

    /// Next inline record that is safe to replay live.
    fn spht_next(&self, heads: &[u64]) -> Option<(usize, MarkerEntry)> {
        let bound = self.spht_bound();
        let mut best: Option<(usize, MarkerEntry)> = None;
        for (t, h) in heads.iter().enumerate() {
            if let Ok(Some(m)) = inline_candidate(&self.pm, &self.layout, t, *h) {
                if m.durts < bound && best.is_none_or(|(_, b)| m.durts < b.durts) {
                    best = Some((t, m));
                }
            }
        }
        best
    }

    fn replay_ready(&self) -> bool {
        if self.replay_owner.is_some() {
            return false;
        }
        match self.pm.layout().log_format {
            LogFormat::MarkerArray => {
                matches!(classify(&self.pm, &self.layout, self.tail), Ok(SlotClass::Commit(_) | SlotClass::Abort))
            }
            LogFormat::InlineScan => self.spht_next(&self.heads).is_some(),
            LogFormat::None => false,
        }
    }

    fn snapshot_passed(&self, w: usize, kind: WaitKind) -> bool {
        let words = match kind {
            WaitKind::Iso | WaitKind::Quiesce => &self.active,
            WaitKind::Dur => &self.nondurable,
        };
        self.workers[w].snapshot.iter().all(|&(p, v)| words[p] != v)
    }

    fn spht_clear(&self, w: usize) -> bool {
        let ts = self.workers[w].spht_ts;
        self.spht.iter().enumerate().all(|(p, s)| {
            p == w
                || match s {
                    SphtSlot::Idle => true,
                    SphtSlot::Pending(l) => *l >= ts,
                    SphtSlot::Committed(c) => *c >= ts,
                }
        })
    }

    fn sgl_free_for(&self, w: usize) -> bool {
        self.htm.sgl_holder().is_none_or(|h| h == w)
    }

    /// Whether a blocked worker's op would now make progress.
    fn guard(&self, w: usize) -> bool {
        let wk = &self.workers[w];
        if wk.replay.is_some() {
            return true;
        }
        if wk.source.is_none() {
            return self.replay_ready() || self.workers[..self.threads].iter().all(|x| x.done);
        }
        let Some(op) = wk.prog.get(wk.pc) else { return true };
        match *op {
            Op::WaitSglFree | Op::AcquireSgl | Op::PublishActiveChecked => self.sgl_free_for(w),
            Op::WaitSnapshot(k) => self.snapshot_passed(w, k),
            Op::SphtWait => self.spht_clear(w),
            Op::EnsureLogSpace => self.space_ok(w) || self.replay_ready(),
            Op::EnsureMarkerSlot => wk.durts.is_none_or(|d| self.slot_free(d)) || self.replay_ready(),
            Op::FencePendingAbort => wk.pending_abort.is_none_or(|d| self.slot_free(d)) || self.replay_ready(),
            _ => true,
        }
    }

    fn wait_bucket(op: Op) -> Bucket {
        match op {
            Op::WaitSnapshot(WaitKind::Iso | WaitKind::Quiesce) => Bucket::IsolationWait,
            Op::WaitSnapshot(WaitKind::Dur) | Op::SphtWait => Bucket::DurabilityWait,
            Op::EnsureLogSpace => Bucket::RedoFlushWait,
            Op::EnsureMarkerSlot | Op::FencePendingAbort => Bucket::MarkerFlush,
            _ => Bucket::PlainExec,
        }
    }

    fn on_unblock(&mut self, w: usize, waited: u64, steps: u64) {
        let Some(&op) = self.workers[w].prog.get(self.workers[w].pc) else { return };
        if self.workers[w].source.is_none() {
            return;
        }
        let b = Self::wait_bucket(op);
        let wk = &mut self.workers[w];
        wk.acc[b as usize] += waited;
        match op {
            Op::WaitSnapshot(WaitKind::Iso) => wk.iso_ns += waited,
            Op::WaitSnapshot(WaitKind::Dur) | Op::SphtWait => {
                wk.dur_ns += waited;
                wk.dur_steps += steps;
            }
            _ => {}
        }
    }

    /// Executes one scheduler step of worker `w`.
    pub fn step(&mut self, w: usize) {
        let spin = self.cfg.sim.costs.spin_ns;
        let wk = &self.workers[w];
        let ready = match (wk.blocked, wk.woke_at) {
            (Some(_), Some(t)) => wk.ready_at.max(t + spin),
            _ => wk.ready_at,
        };
        self.now = self.clock.begin_step(ready);
        self.pm.advance(self.now);
        self.cost = 0;
        if let Some((t0, s0)) = self.workers[w].blocked.take() {
            self.workers[w].woke_at = None;
            let steps = self.clock.steps().saturating_sub(s0 + 1);
            self.on_unblock(w, self.now.saturating_sub(t0), steps);
        }
        let mut first = true;
        loop {
            if self.workers[w].done || self.error.is_some() {
                break;
            }
            let flow = if self.workers[w].replay.is_some() {
                self.replay_phase(w)
            } else if self.workers[w].source.is_none() {
                self.background(w)
            } else {
                if self.workers[w].pc >= self.workers[w].prog.len() && !self.fetch(w) {
                    break;
                }
                let op = self.workers[w].prog[self.workers[w].pc];
                self.exec(w, op, first)
            };
            match flow {
                Flow::Next => self.workers[w].pc += 1,
                Flow::End => {
                    self.workers[w].pc += 1;
                    break;
                }
                Flow::Stay => break,
                Flow::Block => {
                    self.workers[w].blocked = Some((self.now + self.cost, self.clock.steps()));
                    break;
                }
                Flow::Abort(code) => {
                    self.abort(w, code);
                    break;
                }
                Flow::Fetch => {
                    if self.fetch(w) {
                        break;
                    }
                }
            }
            first = false;
        }
        let end = self.now + self.cost;
        let wk = &mut self.workers[w];
        wk.ready_at = wk.ready_at.max(end);
        self.metrics.busy_ns += self.cost;
    }

    /// Loads the next transaction. Returns `true` if one was started (the
    /// step ends) and `false` if the worker moved on to its final program.
    fn fetch(&mut self, w: usize) -> bool {
        let expired = self.time_limit.is_some_and(|t| self.now >= t);
        let wk = &mut self.workers[w];
        if wk.prog.as_ptr() == FINAL.as_ptr() {
            wk.done = true;
            return false;
        }
        let next = if expired { None } else { wk.source.as_mut().and_then(|s| s.next_tx()) };
        match next {
            Some(tx) => {
                let ro = tx.read_only;
                let htm = uses_htm(self.engine, ro);
                wk.tx = Some(tx);
                wk.attempt = 0;
                wk.rolled = 0;
                wk.acc = [0; 6];
                wk.sgl = htm && self.cfg.htm.max_retries == 0;
                wk.prog = program(self.engine, ro, wk.sgl);
                wk.pc = 0;
                wk.body_pos = 0;
                true
            }
            None => {
                wk.tx = None;
                wk.prog = FINAL;
                wk.pc = 0;
                false
            }
        }
    }

    fn background(&mut self, w: usize) -> Flow {
        if self.replay_ready() {
            self.start_replay(w);
            return self.replay_phase(w);
        }
        if self.workers[..self.threads].iter().all(|x| x.done) {
            self.workers[w].done = true;
            return Flow::Stay;
        }
        Flow::Block
    }

    fn start_replay(&mut self, w: usize) {
        self.replay_owner = Some(w);
        self.workers[w].replay = Some(ReplayJob { phase: 0, tail: self.tail, heads: self.heads.clone() });
    }

    fn replay_bucket(&self, w: usize) -> Bucket {
        self.workers[w].prog.get(self.workers[w].pc).map_or(Bucket::MarkerFlush, |op| Self::wait_bucket(*op))
    }

    /// Live replay: apply, fence, persist the tail (or heads), fence, reclaim.
    fn replay_phase(&mut self, w: usize) -> Flow {
        let b = self.replay_bucket(w);
        let ls = self.layout.line_size;
        loop {
            let Some(job) = self.workers[w].replay.clone() else { return Flow::Stay };
            match job.phase {
                0 => {
                    let mut lines = BTreeSet::new();
                    let mut applied = 0u64;
                    let mut job = job;
                    match self.pm.layout().log_format {
                        LogFormat::MarkerArray => loop {
                            match classify(&self.pm, &self.layout, job.tail) {
                                Ok(SlotClass::Commit(m)) => {
                                    let entries = match marker_entries(&self.pm, &self.layout, &m) {
                                        Ok(e) => e,
                                        Err(e) => {
                                            self.error = Some(e.into());
                                            return Flow::Stay;
                                        }
                                    };
                                    for (a, v) in entries {
                                        self.pm.write_word(RegionId::Heap, a, v).expect("heap address checked");
                                        lines.insert(a / ls);
                                        applied += 1;
                                    }
                                    job.tail += 1;
                                }
                                Ok(SlotClass::Abort) => job.tail += 1,
                                Ok(SlotClass::Unmarked) => break,
                                Err(e) => {
                                    self.error = Some(e.into());
                                    return Flow::Stay;
                                }
                            }
                        },
                        LogFormat::InlineScan => {
                            while let Some((t, m)) = self.spht_next(&job.heads) {
                                let entries = match inline_entries(&self.pm, &self.layout, t, job.heads[t], m.num_entries)
                                {
                                    Ok(e) => e,
                                    Err(e) => {
                                        self.error = Some(e.into());
                                        return Flow::Stay;
                                    }
                                };
                                for (a, v) in entries {
                                    self.pm.write_word(RegionId::Heap, a, v).expect("heap address checked");
                                    lines.insert(a / ls);
                                    applied += 1;
                                }
                                job.heads[t] += LogLayout::inline_record_bytes(m.num_entries);
                            }
                        }
                        LogFormat::None => {}
                    }
                    let c = self.cfg.sim.costs.copy_entry_ns + self.cfg.sim.costs.write_ns;
                    self.charge(w, b, applied * c);
                    self.flush_lines(w, RegionId::Heap, lines);
                    job.phase = 1;
                    self.workers[w].replay = Some(job);
                }
                1 => {
                    self.fence(w, b);
                    let mut lines = Vec::new();
                    match self.pm.layout().log_format {
                        LogFormat::MarkerArray => {
                            self.write_words(RegionId::DurMarkers, TAIL_ADDR, &[job.tail]);
                            self.flush_lines(w, RegionId::DurMarkers, [TAIL_ADDR / ls]);
                        }
                        _ => {
                            for t in 0..self.threads {
                                if job.heads[t] != self.heads[t] {
                                    let a = self.layout.head_addr(t);
                                    self.write_words(RegionId::RedoLogs, a, &[job.heads[t]]);
                                    lines.push(a / ls);
                                }
                            }
                            self.flush_lines(w, RegionId::RedoLogs, lines);
                        }
                    }
                    if let Some(j) = self.workers[w].replay.as_mut() {
                        j.phase = 2;
                    }
                }
                _ => {
                    self.fence(w, b);
                    self.tail = job.tail;
                    self.heads = job.heads;
                    let inline = self.inline();
                    let tail = self.tail;
                    for t in 0..self.threads {
                        let head = self.heads[t];
                        let x = &mut self.workers[t];
                        if inline {
                            x.vfree = head;
                        } else {
                            while x.outstanding.front().is_some_and(|(d, _)| *d < tail) {
                                x.vfree = x.outstanding.pop_front().map(|(_, e)| e).unwrap_or(x.vfree);
                            }
                        }
                    }
                    self.replay_owner = None;
                    self.workers[w].replay = None;
                    self.metrics.live_replays += 1;
                    return Flow::Stay;
                }
            }
            if !self.explore {
                return Flow::Stay;
            }
        }
    }

    fn abort(&mut self, w: usize, code: AbortCode) {
        if self.htm.ctx(w).in_flight() {
            self.htm.htm_abort(w);
        }
        self.metrics.aborts[code.index()] += 1;
        let record = self.cfg.sim.record_history;
        if let Some(mut rec) = self.workers[w].rec.take() {
            rec.abort = Some((self.now, code));
            if record {
                self.history.records.push(rec);
            }
        }
        self.active[w] = 0;
        self.nondurable[w] = 0;
        self.spht[w] = SphtSlot::Idle;
        if let Some(d) = self.workers[w].durts.take() {
            if self.slot_free(d) {
                self.write_abort_marker(w, d);
            } else {
                self.workers[w].pending_abort = Some(d);
            }
        }
        let max_retries = self.cfg.htm.max_retries;
        let engine = self.engine;
        let wk = &mut self.workers[w];
        if let Some((vs, _)) = wk.alloc.take() {
            wk.vnext = vs;
        }
        wk.vlog.clear();
        wk.deps.clear();
        wk.snapshot.clear();
        wk.in_htm = false;
        wk.rolled += wk.acc.iter().sum::<u64>();
        wk.acc = [0; 6];
        wk.attempt += 1;
        let ro = wk.read_only();
        if uses_htm(engine, ro) && wk.attempt >= max_retries {
            wk.sgl = true;
        }
        wk.prog = program(engine, ro, wk.sgl);
        wk.pc = 0;
        wk.body_pos = 0;
    }

    /// Records the point where an update's writes and durability key meet.
    fn commit_point(&mut self, w: usize, dts: u64) {
        let wk = &mut self.workers[w];
        wk.dts = Some(dts);
        let writes: BTreeSet<u64> = wk.vlog.iter().map(|e| e.0).collect();
        self.inv.on_commit(dts, &wk.deps, writes);
    }

    fn body(&mut self, w: usize, first: bool) -> Flow {
        let len = self.workers[w].tx.as_ref().map_or(0, |t| t.accesses.len());
        let pos = self.workers[w].body_pos;
        if pos >= len {
            return Flow::Next;
        }
        if !first {
            return Flow::Stay;
        }
        let quantum = if self.explore { 1 } else { self.cfg.sim.quantum_ops.max(1) };
        let end = (pos + quantum).min(len);
        let costs = self.cfg.sim.costs.clone();
        let record = self.cfg.sim.record_history;
        let track_deps = self.durable_engine();
        for i in pos..end {
            let acc = self.workers[w].tx.as_ref().expect("body without transaction").accesses[i];
            let in_htm = self.workers[w].in_htm;
            match acc {
                Access::Read(a) => {
                    let v = if in_htm {
                        match self.htm.tx_read(w, a) {
                            Ok(v) => v,
                            Err(c) => return Flow::Abort(c),
                        }
                    } else {
                        self.htm.read_nontx(w, a)
                    };
                    self.charge(w, Bucket::PlainExec, costs.read_ns);
                    let wk = &mut self.workers[w];
                    if track_deps && !wk.vlog.iter().any(|e| e.0 == a) {
                        if let Some(d) = self.inv.writer_of(a) {
                            wk.deps.insert(d);
                        }
                    }
                    if record {
                        if let Some(r) = wk.rec.as_mut() {
                            r.reads.push((a, v));
                        }
                    }
                }
                Access::Write(a, v) => {
                    if self.workers[w].read_only() {
                        self.error = Some(SimError::WriteInReadOnly { thread: w, addr: a });
                        return Flow::Stay;
                    }
                    if in_htm {
                        if let Err(c) = self.htm.tx_write(w, a, v) {
                            return Flow::Abort(c);
                        }
                    } else {
                        self.htm.write_nontx(w, a, v);
                    }
                    self.charge(w, Bucket::PlainExec, costs.write_ns);
                    let wk = &mut self.workers[w];
                    wk.vlog.push((a, v));
                    if record {
                        if let Some(r) = wk.rec.as_mut() {
                            r.writes.push((a, v));
                        }
                    }
                }
            }
            self.workers[w].body_pos = i + 1;
        }
        if self.workers[w].body_pos == len {
            Flow::End
        } else {
            Flow::Stay
        }
    }

    fn copy_redo(&mut self, w: usize) {
        let (vstart, _) = self.workers[w].alloc.expect("log space allocated");
        let base = if self.inline() { vstart + MARKER_BYTES } else { vstart };
        let ls = self.layout.line_size;
        let mut lines = BTreeSet::new();
        let entries = std::mem::take(&mut self.workers[w].vlog);
        for (i, (a, v)) in entries.iter().enumerate() {
            let p = self.layout.ring_addr(w, base + i as u64 * ENTRY_BYTES);
            self.write_words(RegionId::RedoLogs, p, &[*a, *v]);
            lines.insert(p / ls);
        }
        let n = entries.len() as u64;
        self.workers[w].vlog = entries;
        self.charge(w, Bucket::RedoFlushWait, n * self.cfg.sim.costs.copy_entry_ns);
        self.flush_lines(w, RegionId::RedoLogs, lines);
        if let Some(r) = self.workers[w].rec.as_mut() {
            r.log_pos = Some(vstart);
        }
    }

    /// Checks that the transaction's redo entries are durable.
    fn check_redo_durable(&mut self, w: usize, base: u64) {
        let ok = self.workers[w].vlog.iter().enumerate().all(|(i, (a, v))| {
            let p = self.layout.ring_addr(w, base + i as u64 * ENTRY_BYTES);
            self.pm.read_durable(RegionId::RedoLogs, p) == Ok(*a) && self.pm.read_durable(RegionId::RedoLogs, p + WORD) == Ok(*v)
        });
        self.inv.on_redo_check(ok);
    }

    fn exec(&mut self, w: usize, op: Op, first: bool) -> Flow {
        let costs = &self.cfg.sim.costs;
        let (publish, atomic) = (costs.publish_ns, costs.atomic_ns);
        match op {
            Op::WaitSglFree => {
                if self.sgl_free_for(w) {
                    Flow::Next
                } else {
                    Flow::Block
                }
            }
            Op::AcquireSgl => {
                if !self.sgl_free_for(w) {
                    return Flow::Block;
                }
                self.htm.acquire_sgl(w);
                self.charge(w, Bucket::PlainExec, atomic);
                Flow::Next
            }
            Op::ReleaseSgl => {
                self.htm.release_sgl(w);
                self.charge(w, Bucket::PlainExec, atomic);
                Flow::Next
            }
            Op::FencePendingAbort => {
                if let Some(d) = self.workers[w].pending_abort {
                    if self.slot_free(d) {
                        self.write_abort_marker(w, d);
                        self.workers[w].pending_abort = None;
                    } else if self.replay_ready() {
                        self.start_replay(w);
                        return self.replay_phase(w);
                    } else {
                        return Flow::Block;
                    }
                }
                if self.workers[w].abort_unfenced {
                    self.workers[w].abort_unfenced = false;
                    if self.fence(w, Bucket::MarkerFlush) > 0 && !self.explore {
                        return Flow::End;
                    }
                }
                Flow::Next
            }
            Op::ReadBeginTime => {
                let t = self.clock_read(w);
                let now = self.now;
                let wk = &mut self.workers[w];
                wk.begin_time = t;
                wk.durts = None;
                wk.dts = None;
                wk.vlog.clear();
                wk.deps.clear();
                wk.alloc = None;
                wk.snapshot.clear();
                wk.body_pos = 0;
                wk.in_htm = false;
                wk.iso_ns = 0;
                wk.fence_ns = 0;
                wk.dur_ns = 0;
                wk.dur_steps = 0;
                wk.had_pred = false;
                let ro = wk.read_only();
                wk.rec = Some(TxRecord::new(w, wk.seq, wk.attempt, ro, wk.sgl, now));
                Flow::Next
            }
            Op::PublishActive => {
                self.active[w] = self.workers[w].begin_time;
                self.charge(w, Bucket::PlainExec, publish);
                Flow::Next
            }
            Op::PublishActiveChecked => {
                if !self.sgl_free_for(w) {
                    return Flow::Block;
                }
                let t = self.clock_read(w);
                self.workers[w].begin_time = t;
                if let Some(r) = self.workers[w].rec.as_mut() {
                    r.begin = self.now;
                }
                self.active[w] = t;
                self.charge(w, Bucket::PlainExec, publish);
                Flow::Next
            }
            Op::HtmBegin(track) => {
                self.metrics.htm_attempts += 1;
                let c = self.cfg.sim.costs.begin_ns;
                self.charge(w, Bucket::PlainExec, c);
                match self.htm.htm_begin(w, track) {
                    Ok(()) => {
                        self.workers[w].in_htm = true;
                        Flow::Next
                    }
                    Err(c) => Flow::Abort(c),
                }
            }
            Op::Body => self.body(w, first),
            Op::InvokeCommit => {
                let now = self.now;
                let wk = &mut self.workers[w];
                if let Some(r) = wk.rec.as_mut() {
                    r.commit_invoke = Some(now);
                    if !wk.in_htm {
                        r.htm_commit = Some(now);
                    }
                }
                Flow::Next
            }
            Op::Suspend => {
                let h = self.suspend_half;
                self.charge(w, Bucket::IsolationWait, h);
                match self.htm.suspend(w) {
                    Ok(()) => Flow::Next,
                    Err(c) => Flow::Abort(c),
                }
            }
            Op::Resume => {
                let h = self.suspend_half;
                self.charge(w, Bucket::IsolationWait, h);
                match self.htm.resume(w) {
                    Ok(()) => Flow::Next,
                    Err(c) => Flow::Abort(c),
                }
            }
            Op::PublishInactive => {
                self.active[w] = 0;
                self.charge(w, Bucket::PlainExec, publish);
                Flow::Next
            }
            Op::StampCommit => {
                self.workers[w].stamp = self.clock_read(w);
                Flow::Next
            }
            Op::EnsureLogSpace => {
                let n = self.workers[w].vlog.len() as u64;
                let bytes = self.log_bytes(n);
                let ring = self.layout.ring_bytes();
                if bytes > ring {
                    self.error = Some(SimError::TxTooLarge { thread: w, bytes, capacity: ring });
                    return Flow::Stay;
                }
                if self.space_ok(w) {
                    let wk = &mut self.workers[w];
                    wk.alloc = Some((wk.vnext, bytes));
                    wk.vnext += bytes;
                    Flow::Next
                } else if self.replay_ready() {
                    self.start_replay(w);
                    self.replay_phase(w)
                } else {
                    Flow::Block
                }
            }
            Op::CopyRedoAsync | Op::CopyRedoSync => {
                self.copy_redo(w);
                Flow::Next
            }
            Op::AcquireDurTs => {
                let d = self.next_durts;
                self.next_durts += 1;
                self.workers[w].durts = Some(d);
                if let Some(r) = self.workers[w].rec.as_mut() {
                    r.durts = Some(d);
                }
                self.charge(w, Bucket::PlainExec, atomic);
                if self.workers[w].sgl {
                    self.commit_point(w, d);
                }
                Flow::Next
            }
            Op::IsoSnapshot | Op::QuiesceSnapshot => {
                let take = op == Op::QuiesceSnapshot || self.cfg.sim.isolation_wait;
                let snap: Vec<(usize, u64)> = if take {
                    (0..self.threads).filter(|&p| p != w && self.active[p] != 0).map(|p| (p, self.active[p])).collect()
                } else {
                    Vec::new()
                };
                self.workers[w].snapshot = snap;
                Flow::Next
            }
            Op::DurSnapshot => {
                let lim = self.workers[w].begin_time + self.cfg.pm.clock_skew_ns;
                let snap: Vec<(usize, u64)> = (0..self.threads)
                    .filter(|&p| p != w && self.nondurable[p] != 0 && self.nondurable[p] < lim)
                    .map(|p| (p, self.nondurable[p]))
                    .collect();
                let wk = &mut self.workers[w];
                wk.had_pred |= !snap.is_empty();
                wk.snapshot = snap;
                Flow::Next
            }
            Op::WaitSnapshot(k) => {
                if !self.snapshot_passed(w, k) {
                    return Flow::Block;
                }
                self.workers[w].snapshot.clear();
                Flow::Next
            }
            Op::PublishNonDurable => {
                self.nondurable[w] = match self.cfg.sim.nondurable_stamp {
                    NonDurableStamp::Commit => self.workers[w].stamp,
                    NonDurableStamp::PostWait => self.clock_read(w),
                };
                self.charge(w, Bucket::PlainExec, publish);
                Flow::Next
            }
            Op::HtmCommit => {
                let c = self.cfg.sim.costs.commit_ns;
                self.charge(w, Bucket::PlainExec, c);
                if let Err(code) = self.htm.htm_commit(w) {
                    return Flow::Abort(code);
                }
                self.metrics.htm_commits += 1;
                let (now, durable, kind) = (self.now, self.durable_engine(), self.engine.kind);
                let wk = &mut self.workers[w];
                wk.in_htm = false;
                if let Some(r) = wk.rec.as_mut() {
                    r.htm_commit = Some(now);
                }
                if durable && !wk.read_only() {
                    let dts = match kind {
                        EngineKind::Dumbo => wk.durts.expect("durTs before commit"),
                        _ => wk.spht_ts,
                    };
                    self.commit_point(w, dts);
                }
                Flow::Next
            }
            Op::Fence(kind) => {
                let b = match kind {
                    FenceKind::Redo => Bucket::RedoFlushWait,
                    FenceKind::Marker => Bucket::MarkerFlush,
                };
                let wait = self.fence(w, b);
                match kind {
                    FenceKind::Redo => self.workers[w].fence_ns += wait,
                    FenceKind::Marker => {
                        let at = self.stamp_at();
                        if let Some(d) = self.workers[w].dts {
                            self.inv.on_marker_durable(d, at);
                        }
                        if let Some(r) = self.workers[w].rec.as_mut() {
                            r.marker_durable = Some(at);
                        }
                    }
                }
                if self.explore {
                    Flow::Next
                } else {
                    Flow::End
                }
            }
            Op::EnsureMarkerSlot => {
                let d = self.workers[w].durts.expect("durTs before marker");
                if self.slot_free(d) {
                    Flow::Next
                } else if self.replay_ready() {
                    self.start_replay(w);
                    self.replay_phase(w)
                } else {
                    Flow::Block
                }
            }
            Op::WriteMarker => {
                let d = self.workers[w].durts.expect("durTs before marker");
                let (vstart, bytes) = self.workers[w].alloc.expect("log space allocated");
                self.check_redo_durable(w, vstart);
                let n = self.workers[w].vlog.len() as u64;
                let m = MarkerEntry::commit(d, self.layout.ring_addr(w, vstart), n);
                let addr = self.layout.marker_addr(d);
                self.write_words(RegionId::DurMarkers, addr, &m.encode());
                self.charge(w, Bucket::MarkerFlush, publish);
                self.flush_lines(w, RegionId::DurMarkers, [addr / self.layout.line_size]);
                self.workers[w].outstanding.push_back((d, vstart + bytes));
                Flow::Next
            }
            Op::WriteInlineMarker => {
                let (vstart, _) = self.workers[w].alloc.expect("log space allocated");
                self.check_redo_durable(w, vstart + MARKER_BYTES);
                let n = self.workers[w].vlog.len() as u64;
                let m = MarkerEntry::commit(self.workers[w].spht_ts, vstart, n);
                let addr = self.layout.ring_addr(w, vstart);
                self.write_words(RegionId::RedoLogs, addr, &m.encode());
                self.charge(w, Bucket::MarkerFlush, publish);
                self.flush_lines(w, RegionId::RedoLogs, [addr / self.layout.line_size]);
                Flow::Next
            }
            Op::PublishClear => {
                self.nondurable[w] = 0;
                self.workers[w].durts = None;
                self.charge(w, Bucket::PlainExec, publish);
                Flow::Next
            }
            Op::SphtSetPending => {
                self.spht[w] = SphtSlot::Pending(self.workers[w].begin_time);
                self.charge(w, Bucket::PlainExec, publish);
                Flow::Next
            }
            Op::SphtReadClock => {
                let ts = self.clock_read(w);
                self.workers[w].spht_ts = ts;
                let ro = self.workers[w].read_only();
                if !ro {
                    if let Some(r) = self.workers[w].rec.as_mut() {
                        r.durts = Some(ts);
                    }
                    if self.workers[w].sgl {
                        self.commit_point(w, ts);
                    }
                }
                Flow::Next
            }
            Op::SphtAdvertise => {
                self.spht[w] = SphtSlot::Committed(self.workers[w].spht_ts);
                self.charge(w, Bucket::PlainExec, publish);
                Flow::Next
            }
            Op::SphtWait => {
                if self.spht_clear(w) {
                    Flow::Next
                } else {
                    Flow::Block
                }
            }
            Op::SphtClear => {
                self.spht[w] = SphtSlot::Idle;
                self.charge(w, Bucket::PlainExec, publish);
                Flow::Next
            }
            Op::Yield => Flow::End,
            Op::Ack => self.ack(w),
            Op::Done => {
                self.workers[w].done = true;
                Flow::Stay
            }
        }
    }

    fn ack(&mut self, w: usize) -> Flow {
        let now = self.now;
        let latency = self.pm.flush_latency();
        let durable = self.durable_engine();
        let wk = &mut self.workers[w];
        let ro = wk.read_only();
        let label = wk.tx.as_ref().map_or(0, |t| t.label as usize);
        if durable {
            self.inv.on_return(&wk.deps);
        }
        let m = &mut self.metrics;
        m.commits += 1;
        if ro {
            m.ro_commits += 1;
            m.ro_dur_wait_steps += wk.dur_steps;
            m.ro_dur_wait_ns += wk.dur_ns;
            if wk.had_pred {
                m.ro_with_predecessor += 1;
            } else if wk.dur_ns > 0 || wk.dur_steps > 0 {
                m.ro_unexpected_waits += 1;
            }
        } else {
            m.update_commits += 1;
            m.update_dur_wait_ns += wk.dur_ns;
            m.redo_fence_wait_ns += wk.fence_ns;
            if wk.iso_ns >= latency && latency > 0 {
                m.long_iso_commits += 1;
                if wk.fence_ns == 0 {
                    m.long_iso_free_fence += 1;
                }
            }
        }
        m.commits_by_label[label.min(metrics::LABELS - 1)] += 1;
        if wk.sgl {
            m.sgl_runs += 1;
        }
        for b in 0..5 {
            m.buckets[b] += wk.acc[b];
        }
        m.buckets[Bucket::RolledBack as usize] += wk.rolled;
        wk.acc = [0; 6];
        wk.rolled = 0;
        wk.seq += 1;
        wk.tx = None;
        if let Some(mut rec) = wk.rec.take() {
            rec.ack = Some(now);
            rec.dur_wait_steps = wk.dur_steps;
            rec.dur_wait_ns = wk.dur_ns;
            rec.had_predecessor = wk.had_pred;
            if self.cfg.sim.record_history {
                self.history.records.push(rec);
            }
        }
        self.capture(CrashSite::Ack);
        Flow::Fetch
    }
}

impl Explorable for Sim {
    fn choices(&self) -> Vec<usize> {
        self.runnable()
    }

    fn step(&mut self, choice: usize) {
        Sim::step(self, choice);
    }

    fn is_done(&self) -> bool {
        self.all_done() || self.error.is_some()
    }

    fn settle(&mut self) -> bool {
        Sim::settle(self)
    }

    fn fingerprint(&self) -> Option<u128> {
        Sim::fingerprint(self)
    }
}
