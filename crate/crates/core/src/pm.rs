//! Emulated persistent memory.
//!
//! Every region keeps a dense durable array plus a sparse overlay of lines
//! whose volatile content may differ from it. Flushes snapshot a line and
//! become durable either after the configured latency (virtual time) or only
//! at a fence by the issuing thread (exploration). A crash keeps durable
//! content only, optionally enumerating every subset of in-flight flushes.

use std::collections::HashMap;

use crate::error::PmError;
use crate::explore::Fingerprint;

pub const WORD: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionId {
    Heap = 0,
    RedoLogs = 1,
    DurMarkers = 2,
}

impl RegionId {
    pub const ALL: [RegionId; 3] = [RegionId::Heap, RegionId::RedoLogs, RegionId::DurMarkers];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: u32) -> Option<RegionId> {
        match i {
            0 => Some(RegionId::Heap),
            1 => Some(RegionId::RedoLogs),
            2 => Some(RegionId::DurMarkers),
            _ => None,
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            RegionId::Heap => "heap.img",
            RegionId::RedoLogs => "redo.img",
            RegionId::DurMarkers => "markers.img",
        }
    }
}

/// When in-flight flushes become durable outside of a crash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlushCompletion {
    /// `issue + latency`, applied as virtual time passes.
    AfterLatency,
    /// Only at a fence by the issuing thread.
    OnFence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPolicy {
    DropAll,
    EnumerateSubsets,
}

#[derive(Debug, Clone)]
struct Overlay {
    data: Box<[u64]>,
    dirty: bool,
    in_flight: u32,
}

/// A line-granular PM region.
#[derive(Debug, Clone)]
pub struct Region {
    id: RegionId,
    line_words: usize,
    durable: Vec<u64>,
    overlay: HashMap<u64, Overlay>,
}

impl Region {
    fn new(id: RegionId, size_bytes: u64, line_size: u64) -> Self {
        assert!(line_size >= WORD && line_size.is_multiple_of(WORD), "line size must be a multiple of 8");
        assert!(size_bytes.is_multiple_of(line_size), "region size must be a multiple of the line size");
        Self {
            id,
            line_words: (line_size / WORD) as usize,
            durable: vec![0; (size_bytes / WORD) as usize],
            overlay: HashMap::new(),
        }
    }

    pub fn id(&self) -> RegionId {
        self.id
    }

    pub fn size_bytes(&self) -> u64 {
        self.durable.len() as u64 * WORD
    }

    pub fn lines(&self) -> u64 {
        (self.durable.len() / self.line_words) as u64
    }

    fn check(&self, addr: u64) -> Result<usize, PmError> {
        if !addr.is_multiple_of(WORD) {
            return Err(PmError::Misaligned { addr });
        }
        if addr >= self.size_bytes() {
            return Err(PmError::OutOfRange { region: self.id, addr, size: self.size_bytes() });
        }
        Ok((addr / WORD) as usize)
    }

    fn line_of_word(&self, w: usize) -> u64 {
        (w / self.line_words) as u64
    }

    fn line_range(&self, line: u64) -> std::ops::Range<usize> {
        let s = line as usize * self.line_words;
        s..s + self.line_words
    }

    pub fn read_durable(&self, addr: u64) -> Result<u64, PmError> {
        let w = self.check(addr)?;
        Ok(self.durable[w])
    }

    pub fn read_volatile(&self, addr: u64) -> Result<u64, PmError> {
        let w = self.check(addr)?;
        let line = self.line_of_word(w);
        Ok(match self.overlay.get(&line) {
            Some(o) => o.data[w % self.line_words],
            None => self.durable[w],
        })
    }

    fn write(&mut self, addr: u64, value: u64) -> Result<(), PmError> {
        let w = self.check(addr)?;
        let line = self.line_of_word(w);
        let range = self.line_range(line);
        let lw = self.line_words;
        let durable = &self.durable;
        let o = self.overlay.entry(line).or_insert_with(|| Overlay {
            data: durable[range].to_vec().into_boxed_slice(),
            dirty: false,
            in_flight: 0,
        });
        o.data[w % lw] = value;
        o.dirty = true;
        Ok(())
    }

    fn apply(&mut self, line: u64, data: &[u64]) {
        let range = self.line_range(line);
        self.durable[range].copy_from_slice(data);
    }

    pub fn durable_words(&self) -> &[u64] {
        &self.durable
    }
}

/// Handle for an in-flight flush.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlushTicket {
    pub id: u64,
    /// `None` when the flushed line was clean.
    pub completes_at: Option<u64>,
}

impl FlushTicket {
    pub fn is_complete(&self) -> bool {
        self.completes_at.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct PendingFlush {
    pub id: u64,
    pub thread: usize,
    pub region: RegionId,
    pub line: u64,
    pub issued_at: u64,
    pub completes_at: u64,
    data: Box<[u64]>,
}

/// One completed flush, for the optional flush log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlushRecord {
    pub id: u64,
    pub thread: usize,
    pub region: RegionId,
    pub line: u64,
    pub issued_at: u64,
    pub applied_at: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PmStats {
    pub flushes_issued: u64,
    pub clean_flushes: u64,
    pub injected_latency_ns: u64,
    pub fences: u64,
}

/// Static description of a device, stored in image headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PmLayout {
    pub line_size: u64,
    pub heap_bytes: u64,
    pub log_bytes: u64,
    pub marker_bytes: u64,
    pub marker_slots: u64,
    pub threads: u32,
    pub log_format: LogFormat,
}

/// How commit records are organised on the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    /// Global circular marker array indexed by logical durTs.
    MarkerArray = 0,
    /// Per-thread logs with inline commit records, replayed by scanning.
    InlineScan = 1,
    /// Nothing is logged.
    None = 2,
}

impl LogFormat {
    pub fn from_u32(v: u32) -> Option<LogFormat> {
        match v {
            0 => Some(LogFormat::MarkerArray),
            1 => Some(LogFormat::InlineScan),
            2 => Some(LogFormat::None),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LogFormat::MarkerArray => "marker-array",
            LogFormat::InlineScan => "inline-scan",
            LogFormat::None => "none",
        }
    }
}

/// The emulated device.
#[derive(Debug, Clone)]
pub struct Pm {
    layout: PmLayout,
    regions: [Region; 3],
    latency: u64,
    completion: FlushCompletion,
    pending: Vec<PendingFlush>,
    next_ticket: u64,
    stats: PmStats,
    flush_log: Option<Vec<FlushRecord>>,
}

impl Pm {
    pub fn new(layout: PmLayout, latency_ns: u64, completion: FlushCompletion) -> Self {
        let ls = layout.line_size;
        Self {
            regions: [
                Region::new(RegionId::Heap, layout.heap_bytes, ls),
                Region::new(RegionId::RedoLogs, layout.log_bytes, ls),
                Region::new(RegionId::DurMarkers, layout.marker_bytes, ls),
            ],
            layout,
            latency: latency_ns,
            completion,
            pending: Vec::new(),
            next_ticket: 0,
            stats: PmStats::default(),
            flush_log: None,
        }
    }

    pub fn layout(&self) -> &PmLayout {
        &self.layout
    }

    pub fn line_size(&self) -> u64 {
        self.layout.line_size
    }

    pub fn flush_latency(&self) -> u64 {
        self.latency
    }

    pub fn region(&self, id: RegionId) -> &Region {
        &self.regions[id.index()]
    }

    pub fn stats(&self) -> PmStats {
        self.stats
    }

    /// Contents and in-flight flushes; flush ids only matter by order.
    pub fn fingerprint(&self, fp: &mut Fingerprint) {
        for r in &self.regions {
            fp.sparse(&r.durable);
            let mut lines: Vec<u64> = r.overlay.keys().copied().collect();
            lines.sort_unstable();
            fp.word(lines.len() as u64);
            for l in lines {
                let o = &r.overlay[&l];
                fp.word(l);
                fp.word(o.dirty as u64 | (o.in_flight as u64) << 1);
                fp.sparse(&o.data);
            }
        }
        fp.word(self.pending.len() as u64);
        for p in &self.pending {
            fp.word(p.thread as u64);
            fp.word(p.region.index() as u64);
            fp.word(p.line);
            fp.sparse(&p.data);
        }
    }

    pub fn flush_log_enabled(&self) -> bool {
        self.flush_log.is_some()
    }

    pub fn enable_flush_log(&mut self) {
        self.flush_log.get_or_insert_with(Vec::new);
    }

    pub fn flush_log(&self) -> &[FlushRecord] {
        self.flush_log.as_deref().unwrap_or(&[])
    }

    pub fn line_of(&self, addr: u64) -> u64 {
        addr / self.layout.line_size
    }

    pub fn write_word(&mut self, region: RegionId, addr: u64, value: u64) -> Result<(), PmError> {
        self.regions[region.index()].write(addr, value)
    }

    pub fn read_volatile(&self, region: RegionId, addr: u64) -> Result<u64, PmError> {
        self.regions[region.index()].read_volatile(addr)
    }

    pub fn read_durable(&self, region: RegionId, addr: u64) -> Result<u64, PmError> {
        self.regions[region.index()].read_durable(addr)
    }

    pub fn is_line_dirty(&self, region: RegionId, line: u64) -> bool {
        self.regions[region.index()].overlay.get(&line).is_some_and(|o| o.dirty)
    }

    /// Issues an asynchronous write-back of one line.
    pub fn flush_line_async(
        &mut self,
        thread: usize,
        region: RegionId,
        line: u64,
        now: u64,
    ) -> Result<FlushTicket, PmError> {
        let r = &mut self.regions[region.index()];
        if line >= r.lines() {
            return Err(PmError::LineOutOfRange { region, line });
        }
        let id = self.next_ticket;
        self.next_ticket += 1;
        self.stats.flushes_issued += 1;
        let Some(o) = r.overlay.get_mut(&line).filter(|o| o.dirty) else {
            self.stats.clean_flushes += 1;
            return Ok(FlushTicket { id, completes_at: None });
        };
        o.dirty = false;
        o.in_flight += 1;
        let data = o.data.clone();
        let completes_at = now + self.latency;
        self.stats.injected_latency_ns += self.latency;
        self.pending.push(PendingFlush { id, thread, region, line, issued_at: now, completes_at, data });
        Ok(FlushTicket { id, completes_at: Some(completes_at) })
    }

    /// Flushes every line overlapping `[addr, addr + len)`.
    pub fn flush_range_async(
        &mut self,
        thread: usize,
        region: RegionId,
        addr: u64,
        len: u64,
        now: u64,
    ) -> Result<u32, PmError> {
        if len == 0 {
            return Ok(0);
        }
        let first = self.line_of(addr);
        let last = self.line_of(addr + len - 1);
        let mut issued = 0;
        for line in first..=last {
            if !self.flush_line_async(thread, region, line, now)?.is_complete() {
                issued += 1;
            }
        }
        Ok(issued)
    }

    /// Waits for all of `thread`'s flushes and returns the time at which the
    /// fence completes.
    ///
    /// With [`FlushCompletion::AfterLatency`] the flushes are not applied here;
    /// they land when [`Pm::advance`] reaches their completion time, which the
    /// caller must not resume before.
    pub fn drain_fence(&mut self, thread: usize, now: u64) -> u64 {
        self.stats.fences += 1;
        match self.completion {
            FlushCompletion::AfterLatency => self
                .pending
                .iter()
                .filter(|p| p.thread == thread)
                .map(|p| p.completes_at)
                .fold(now, u64::max),
            FlushCompletion::OnFence => {
                self.apply_where(now, |p| p.thread == thread);
                now
            }
        }
    }

    /// Applies every flush whose completion time is `<= now`.
    pub fn advance(&mut self, now: u64) {
        if self.completion == FlushCompletion::AfterLatency && !self.pending.is_empty() {
            self.apply_where(now, |p| p.completes_at <= now);
        }
    }

    /// Completes everything in flight, as a clean shutdown would.
    pub fn quiesce(&mut self, now: u64) {
        self.apply_where(now, |_| true);
    }

    /// Lands the selected flushes. A landed flush supersedes older in-flight
    /// flushes of the same line, so a stale copy never overwrites newer data.
    fn apply_where(&mut self, now: u64, pred: impl Fn(&PendingFlush) -> bool) {
        // Few flushes are ever in flight, so a linear map is fastest.
        let mut newest: Vec<((RegionId, u64), u64)> = Vec::new();
        for p in self.pending.iter().filter(|p| pred(p)) {
            match newest.iter_mut().find(|(k, _)| *k == (p.region, p.line)) {
                Some(e) => e.1 = e.1.max(p.id),
                None => newest.push(((p.region, p.line), p.id)),
            }
        }
        if newest.is_empty() {
            return;
        }
        let mut keep = Vec::with_capacity(self.pending.len());
        for p in std::mem::take(&mut self.pending) {
            let Some(&(_, top)) = newest.iter().find(|(k, _)| *k == (p.region, p.line)) else {
                keep.push(p);
                continue;
            };
            if p.id > top {
                keep.push(p);
                continue;
            }
            let r = &mut self.regions[p.region.index()];
            if p.id == top {
                r.apply(p.line, &p.data);
            }
            if let Some(o) = r.overlay.get_mut(&p.line) {
                o.in_flight -= 1;
                if !o.dirty && o.in_flight == 0 {
                    r.overlay.remove(&p.line);
                }
            }
            if let Some(log) = self.flush_log.as_mut() {
                log.push(FlushRecord {
                    id: p.id,
                    thread: p.thread,
                    region: p.region,
                    line: p.line,
                    issued_at: p.issued_at,
                    applied_at: now,
                });
            }
        }
        self.pending = keep;
    }

    pub fn pending(&self) -> &[PendingFlush] {
        &self.pending
    }

    pub fn has_pending(&self, thread: usize) -> bool {
        self.pending.iter().any(|p| p.thread == thread)
    }

    /// Writes a durable word directly. Only recovery replay may do this.
    pub fn recovery_write(&mut self, region: RegionId, addr: u64, value: u64) -> Result<(), PmError> {
        let w = self.regions[region.index()].check(addr)?;
        let r = &mut self.regions[region.index()];
        r.durable[w] = value;
        let line = r.line_of_word(w);
        if let Some(o) = r.overlay.get_mut(&line) {
            o.data[w % r.line_words] = value;
        }
        Ok(())
    }

    /// Captures the durable state and the in-flight flushes at a crash point.
    pub fn crash_state(&self, crash_point: u64) -> CrashState {
        CrashState {
            crash_point,
            layout: self.layout,
            regions: std::array::from_fn(|i| self.regions[i].durable.clone()),
            pending: self
                .pending
                .iter()
                .map(|p| (p.id, p.region, p.line, p.data.clone()))
                .collect(),
        }
    }

    /// One image (drop-all) or every subset of in-flight flushes.
    pub fn crash(&self, policy: CrashPolicy) -> Vec<CrashImage> {
        let state = self.crash_state(0);
        match policy {
            CrashPolicy::DropAll => vec![state.image(0)],
            CrashPolicy::EnumerateSubsets => state.images().collect(),
        }
    }

    /// The image a clean shutdown would leave: every volatile line persisted.
    pub fn shutdown_image(&self) -> CrashImage {
        let mut pm = self.clone();
        for r in pm.regions.iter_mut() {
            let lines: Vec<(u64, Box<[u64]>)> = r.overlay.iter().map(|(l, o)| (*l, o.data.clone())).collect();
            for (l, d) in lines {
                r.apply(l, &d);
            }
            r.overlay.clear();
        }
        pm.pending.clear();
        let mut img = pm.crash_state(u64::MAX).image(0);
        img.survived.clear();
        img
    }
}

/// Durable state plus in-flight flushes at one crash point.
#[derive(Debug, Clone)]
pub struct CrashState {
    pub crash_point: u64,
    pub layout: PmLayout,
    regions: [Vec<u64>; 3],
    pending: Vec<(u64, RegionId, u64, Box<[u64]>)>,
}

impl CrashState {
    pub fn in_flight(&self) -> usize {
        self.pending.len()
    }

    pub fn image_count(&self) -> u64 {
        1u64 << self.pending.len()
    }

    /// Image in which exactly the in-flight flushes selected by `mask`
    /// survived, applied in issue order.
    pub fn image(&self, mask: u64) -> CrashImage {
        self.image_where(|i| i < 64 && mask >> i & 1 == 1)
    }

    fn image_where(&self, keep: impl Fn(usize) -> bool) -> CrashImage {
        let mut regions = self.regions.clone();
        let lw = (self.layout.line_size / WORD) as usize;
        let mut survived = Vec::new();
        for (i, (id, region, line, data)) in self.pending.iter().enumerate() {
            if keep(i) {
                let s = *line as usize * lw;
                regions[region.index()][s..s + lw].copy_from_slice(data);
                survived.push(*id);
            }
        }
        CrashImage { layout: self.layout, crash_point: self.crash_point, survived, regions }
    }

    /// In-flight flushes that target `region`.
    pub fn in_flight_in(&self, region: RegionId) -> usize {
        self.pending.iter().filter(|p| p.1 == region).count()
    }

    /// Every subset of the in-flight flushes to `region`, with all other
    /// in-flight flushes dropped. Enough when only that region is inspected.
    pub fn region_images(&self, region: RegionId) -> impl Iterator<Item = CrashImage> + '_ {
        let idx: Vec<usize> = (0..self.pending.len()).filter(|&i| self.pending[i].1 == region).collect();
        assert!(idx.len() < 32, "too many in-flight flushes to enumerate");
        (0..1u64 << idx.len()).map(move |m| {
            let keep: Vec<usize> = idx.iter().enumerate().filter(|(b, _)| m >> b & 1 == 1).map(|(_, &i)| i).collect();
            self.image_where(|i| keep.contains(&i))
        })
    }

    /// Lazily yields all `2^k` images.
    pub fn images(&self) -> impl Iterator<Item = CrashImage> + '_ {
        assert!(self.pending.len() < 32, "too many in-flight flushes to enumerate");
        (0..self.image_count()).map(move |m| self.image(m))
    }
}

/// Durable-only snapshot of all regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashImage {
    pub layout: PmLayout,
    pub crash_point: u64,
    /// Ticket ids of in-flight flushes that were deemed complete.
    pub survived: Vec<u64>,
    regions: [Vec<u64>; 3],
}

impl CrashImage {
    pub fn from_regions(layout: PmLayout, regions: [Vec<u64>; 3]) -> Self {
        Self { layout, crash_point: 0, survived: Vec::new(), regions }
    }

    pub fn words(&self, region: RegionId) -> &[u64] {
        &self.regions[region.index()]
    }

    pub fn words_mut(&mut self, region: RegionId) -> &mut Vec<u64> {
        &mut self.regions[region.index()]
    }

    pub fn read(&self, region: RegionId, addr: u64) -> Result<u64, PmError> {
        let words = &self.regions[region.index()];
        let size = words.len() as u64 * WORD;
        if !addr.is_multiple_of(WORD) {
            return Err(PmError::Misaligned { addr });
        }
        words
            .get((addr / WORD) as usize)
            .copied()
            .ok_or(PmError::OutOfRange { region, addr, size })
    }
}

/// Read access to some durable view (an image or a live device).
pub trait DurableView {
    fn layout(&self) -> &PmLayout;
    fn read(&self, region: RegionId, addr: u64) -> Result<u64, PmError>;
}

impl DurableView for CrashImage {
    fn layout(&self) -> &PmLayout {
        &self.layout
    }
    fn read(&self, region: RegionId, addr: u64) -> Result<u64, PmError> {
        CrashImage::read(self, region, addr)
    }
}

impl DurableView for Pm {
    fn layout(&self) -> &PmLayout {
        &self.layout
    }
    fn read(&self, region: RegionId, addr: u64) -> Result<u64, PmError> {
        self.read_durable(region, addr)
    }
}
