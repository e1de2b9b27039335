//! Log replay and crash recovery.
//!
//! Two replayers share the same redo entry format:
//! * [`replay_until`] walks the circular marker array from the persisted tail
//!   in durTs order, skipping abort markers and stopping after `n` unmarked
//!   holes;
//! * [`scan_replay`] serves per-thread logs with inline commit records and,
//!   after every replayed transaction, rescans all thread heads for the
//!   smallest durTs.

use crate::error::ReplayError;
use crate::layout::{read_marker, LogLayout, MarkerEntry, MarkerKind, ENTRY_BYTES, MARKER_BYTES, TAIL_ADDR};
use crate::pm::{CrashImage, DurableView, LogFormat, RegionId, WORD};

/// Replay work in PM access units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReplayCost {
    pub marker_reads: u64,
    pub entry_reads: u64,
    pub heap_writes: u64,
}

impl ReplayCost {
    pub fn total(&self) -> u64 {
        self.marker_reads + self.entry_reads + self.heap_writes
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub format: LogFormat,
    /// Persisted tail the marker-array replay started from.
    pub base_tail: u64,
    /// Persisted per-thread heads the scan replay started from.
    pub base_heads: Vec<u64>,
    /// durTs values replayed, in replay order.
    pub replayed: Vec<u64>,
    pub aborts: Vec<u64>,
    pub unmarked: Vec<u64>,
    /// One past the last consumed durTs (marker array).
    pub next_tail: u64,
    pub next_heads: Vec<u64>,
    pub cost: ReplayCost,
}

impl ReplayReport {
    fn new(format: LogFormat) -> Self {
        Self {
            format,
            base_tail: 0,
            base_heads: Vec::new(),
            replayed: Vec::new(),
            aborts: Vec::new(),
            unmarked: Vec::new(),
            next_tail: 0,
            next_heads: Vec::new(),
            cost: ReplayCost::default(),
        }
    }
}

/// Classification of one marker slot for a given durTs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotClass {
    Commit(MarkerEntry),
    Abort,
    Unmarked,
}

pub fn read_tail<V: DurableView + ?Sized>(view: &V) -> Result<u64, ReplayError> {
    Ok(view.read(RegionId::DurMarkers, TAIL_ADDR)?)
}

/// Classifies the slot owned by `durts`: valid only if the stored durTs
/// matches exactly (an older epoch's entry is expired).
pub fn classify<V: DurableView + ?Sized>(view: &V, layout: &LogLayout, durts: u64) -> Result<SlotClass, ReplayError> {
    let m = read_marker(RegionId::DurMarkers, layout.marker_addr(durts), |r, a| view.read(r, a))?;
    Ok(match m.kind {
        MarkerKind::Commit if m.durts == durts => SlotClass::Commit(m),
        MarkerKind::Abort if m.durts == durts => SlotClass::Abort,
        _ => SlotClass::Unmarked,
    })
}

fn check_heap(layout: &LogLayout, addr: u64) -> Result<(), ReplayError> {
    if !addr.is_multiple_of(WORD) || addr >= layout.heap_bytes {
        return Err(ReplayError::BadHeapAddr { addr });
    }
    Ok(())
}

/// Redo entries referenced by a commit marker.
pub fn marker_entries<V: DurableView + ?Sized>(
    view: &V,
    layout: &LogLayout,
    m: &MarkerEntry,
) -> Result<Vec<(u64, u64)>, ReplayError> {
    if m.num_entries == 0 {
        return Ok(Vec::new());
    }
    let capacity = layout.ring_bytes() / ENTRY_BYTES;
    if m.num_entries > capacity {
        return Err(ReplayError::OversizedMarker { durts: m.durts, entries: m.num_entries, capacity });
    }
    let (t, off) = layout
        .locate(m.log_start)
        .ok_or(ReplayError::BadLogStart { durts: m.durts, offset: m.log_start })?;
    let mut out = Vec::with_capacity(m.num_entries as usize);
    for i in 0..m.num_entries {
        let a = layout.ring_addr(t, off + i * ENTRY_BYTES);
        let addr = view.read(RegionId::RedoLogs, a)?;
        let value = view.read(RegionId::RedoLogs, a + WORD)?;
        check_heap(layout, addr)?;
        out.push((addr, value));
    }
    Ok(out)
}

/// Replays valid commit markers from the persisted tail upward, stopping
/// after `n` unmarked holes. Entries are handed to `sink` in replay order.
pub fn replay_until<V: DurableView + ?Sized>(
    view: &V,
    n: u64,
    sink: &mut dyn FnMut(u64, u64),
) -> Result<ReplayReport, ReplayError> {
    let layout = LogLayout::new(view.layout());
    let mut rep = ReplayReport::new(LogFormat::MarkerArray);
    let tail = read_tail(view)?;
    rep.base_tail = tail;
    let mut d = tail;
    let mut holes = 0;
    while holes < n.max(1) {
        rep.cost.marker_reads += 1;
        match classify(view, &layout, d)? {
            SlotClass::Commit(m) => {
                for (addr, value) in marker_entries(view, &layout, &m)? {
                    rep.cost.entry_reads += 1;
                    rep.cost.heap_writes += 1;
                    sink(addr, value);
                }
                rep.replayed.push(d);
            }
            SlotClass::Abort => rep.aborts.push(d),
            SlotClass::Unmarked => {
                rep.unmarked.push(d);
                holes += 1;
            }
        }
        d += 1;
    }
    rep.next_tail = rep.replayed.last().map_or(tail, |x| x + 1).max(rep.aborts.last().map_or(tail, |x| x + 1));
    Ok(rep)
}

/// The inline record at a thread's head, if it is a valid commit record.
pub fn inline_candidate<V: DurableView + ?Sized>(
    view: &V,
    layout: &LogLayout,
    t: usize,
    head: u64,
) -> Result<Option<MarkerEntry>, ReplayError> {
    if layout.ring_bytes() < MARKER_BYTES {
        return Ok(None);
    }
    let m = read_marker(RegionId::RedoLogs, layout.ring_addr(t, head), |r, a| view.read(r, a))?;
    let fits = LogLayout::inline_record_bytes(m.num_entries) <= layout.ring_bytes();
    Ok((m.kind == MarkerKind::Commit && m.log_start == head && fits).then_some(m))
}

pub fn inline_entries<V: DurableView + ?Sized>(
    view: &V,
    layout: &LogLayout,
    t: usize,
    head: u64,
    n: u64,
) -> Result<Vec<(u64, u64)>, ReplayError> {
    let mut out = Vec::with_capacity(n as usize);
    for i in 0..n {
        let a = layout.ring_addr(t, head + MARKER_BYTES + i * ENTRY_BYTES);
        let addr = view.read(RegionId::RedoLogs, a)?;
        let value = view.read(RegionId::RedoLogs, a + WORD)?;
        check_heap(layout, addr)?;
        out.push((addr, value));
    }
    Ok(out)
}

/// Scan-based replay over per-thread logs with inline commit records.
pub fn scan_replay<V: DurableView + ?Sized>(view: &V, sink: &mut dyn FnMut(u64, u64)) -> Result<ReplayReport, ReplayError> {
    let layout = LogLayout::new(view.layout());
    let mut rep = ReplayReport::new(LogFormat::InlineScan);
    let threads = layout.threads as usize;
    let mut heads = Vec::with_capacity(threads);
    for t in 0..threads {
        heads.push(view.read(RegionId::RedoLogs, layout.head_addr(t))?);
    }
    rep.base_heads = heads.clone();
    loop {
        let mut best: Option<(u64, usize, MarkerEntry)> = None;
        for (t, head) in heads.iter().enumerate() {
            rep.cost.marker_reads += 1;
            if let Some(m) = inline_candidate(view, &layout, t, *head)? {
                if best.is_none_or(|(d, _, _)| m.durts < d) {
                    best = Some((m.durts, t, m));
                }
            }
        }
        let Some((d, t, m)) = best else { break };
        for (addr, value) in inline_entries(view, &layout, t, heads[t], m.num_entries)? {
            rep.cost.entry_reads += 1;
            rep.cost.heap_writes += 1;
            sink(addr, value);
        }
        rep.replayed.push(d);
        heads[t] += LogLayout::inline_record_bytes(m.num_entries);
    }
    rep.next_heads = heads;
    Ok(rep)
}

/// A recovered durable heap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recovered {
    pub heap: Vec<u64>,
    pub report: ReplayReport,
}

/// Replays `img` according to its log format.
pub fn recover(img: &CrashImage) -> Result<Recovered, ReplayError> {
    let mut heap = img.words(RegionId::Heap).to_vec();
    let mut sink = |addr: u64, value: u64| heap[(addr / WORD) as usize] = value;
    let report = match img.layout.log_format {
        LogFormat::MarkerArray => replay_until(img, img.layout.threads as u64, &mut sink)?,
        LogFormat::InlineScan => scan_replay(img, &mut sink)?,
        LogFormat::None => ReplayReport::new(LogFormat::None),
    };
    Ok(Recovered { heap, report })
}

/// The image left behind after recovery: heap replayed and replay positions
/// persisted.
pub fn recover_image(img: &CrashImage) -> Result<(CrashImage, ReplayReport), ReplayError> {
    let r = recover(img)?;
    let mut out = img.clone();
    *out.words_mut(RegionId::Heap) = r.heap;
    let layout = LogLayout::new(&img.layout);
    match img.layout.log_format {
        LogFormat::MarkerArray => out.words_mut(RegionId::DurMarkers)[(TAIL_ADDR / WORD) as usize] = r.report.next_tail,
        LogFormat::InlineScan => {
            for (t, h) in r.report.next_heads.iter().enumerate() {
                out.words_mut(RegionId::RedoLogs)[(layout.head_addr(t) / WORD) as usize] = *h;
            }
        }
        LogFormat::None => {}
    }
    Ok((out, r.report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pm::PmLayout;

    fn image(slots: u64, threads: u32, format: LogFormat) -> CrashImage {
        let l: PmLayout = LogLayout::pm_layout(128, 1024, 4096, slots, threads, format);
        let regions = [
            vec![0; (l.heap_bytes / 8) as usize],
            vec![0; (l.log_bytes / 8) as usize],
            vec![0; (l.marker_bytes / 8) as usize],
        ];
        CrashImage::from_regions(l, regions)
    }

    fn put(img: &mut CrashImage, region: RegionId, addr: u64, v: u64) {
        img.words_mut(region)[(addr / 8) as usize] = v;
    }

    fn put_marker(img: &mut CrashImage, m: MarkerEntry) {
        let l = LogLayout::new(&img.layout);
        let a = l.marker_addr(m.durts);
        for (i, w) in m.encode().iter().enumerate() {
            put(img, RegionId::DurMarkers, a + 8 * i as u64, *w);
        }
    }

    fn put_entries(img: &mut CrashImage, t: usize, v: u64, entries: &[(u64, u64)]) -> u64 {
        let l = LogLayout::new(&img.layout);
        for (i, (a, x)) in entries.iter().enumerate() {
            let p = l.ring_addr(t, v + 16 * i as u64);
            put(img, RegionId::RedoLogs, p, *a);
            put(img, RegionId::RedoLogs, p + 8, *x);
        }
        l.ring_addr(t, v)
    }

    #[test]
    fn empty_array_stops_after_n_holes() {
        let img = image(8, 3, LogFormat::MarkerArray);
        let rep = replay_until(&img, 3, &mut |_, _| {}).unwrap();
        assert!(rep.replayed.is_empty());
        assert_eq!(rep.unmarked, vec![0, 1, 2]);
    }

    #[test]
    fn hole_between_markers_is_skipped() {
        let mut img = image(8, 2, LogFormat::MarkerArray);
        let s3 = put_entries(&mut img, 0, 0, &[(8, 33)]);
        let s5 = put_entries(&mut img, 1, 0, &[(16, 55)]);
        put(&mut img, RegionId::DurMarkers, TAIL_ADDR, 3);
        put_marker(&mut img, MarkerEntry::commit(3, s3, 1));
        put_marker(&mut img, MarkerEntry::commit(5, s5, 1));
        let r = recover(&img).unwrap();
        assert_eq!(r.report.replayed, vec![3, 5]);
        assert_eq!(r.report.unmarked[0], 4);
        assert_eq!(r.heap[1], 33);
        assert_eq!(r.heap[2], 55);
    }

    #[test]
    fn abort_marker_is_not_a_hole() {
        let mut img = image(8, 1, LogFormat::MarkerArray);
        put_marker(&mut img, MarkerEntry::abort(0));
        let s = put_entries(&mut img, 0, 0, &[(0, 9)]);
        put_marker(&mut img, MarkerEntry::commit(1, s, 1));
        let rep = replay_until(&img, 1, &mut |_, _| {}).unwrap();
        assert_eq!(rep.aborts, vec![0]);
        assert_eq!(rep.replayed, vec![1]);
        assert_eq!(rep.next_tail, 2);
    }

    #[test]
    fn expired_epoch_is_unmarked() {
        let mut img = image(4, 1, LogFormat::MarkerArray);
        put(&mut img, RegionId::DurMarkers, TAIL_ADDR, 4);
        put_marker(&mut img, MarkerEntry::commit(0, 0, 0));
        let rep = replay_until(&img, 1, &mut |_, _| {}).unwrap();
        assert_eq!(rep.unmarked, vec![4]);
        assert!(rep.replayed.is_empty());
    }

    #[test]
    fn oversized_marker_is_corruption() {
        let mut img = image(4, 1, LogFormat::MarkerArray);
        put_marker(&mut img, MarkerEntry::commit(0, 128, 1 << 20));
        assert!(matches!(recover(&img), Err(ReplayError::OversizedMarker { .. })));
    }

    #[test]
    fn same_address_twice_keeps_second() {
        let mut img = image(4, 1, LogFormat::MarkerArray);
        let s = put_entries(&mut img, 0, 0, &[(8, 1), (8, 2)]);
        put_marker(&mut img, MarkerEntry::commit(0, s, 2));
        assert_eq!(recover(&img).unwrap().heap[1], 2);
    }

    #[test]
    fn only_abort_markers_leave_heap_unchanged() {
        let mut img = image(4, 2, LogFormat::MarkerArray);
        put(&mut img, RegionId::Heap, 0, 77);
        put_marker(&mut img, MarkerEntry::abort(0));
        put_marker(&mut img, MarkerEntry::abort(1));
        let r = recover(&img).unwrap();
        assert_eq!(r.heap, img.words(RegionId::Heap));
    }

    #[test]
    fn recovery_is_idempotent() {
        let mut img = image(8, 2, LogFormat::MarkerArray);
        let s = put_entries(&mut img, 0, 0, &[(8, 1), (16, 2)]);
        put_marker(&mut img, MarkerEntry::commit(0, s, 2));
        let (once, _) = recover_image(&img).unwrap();
        let (twice, _) = recover_image(&once).unwrap();
        assert_eq!(once.words(RegionId::Heap), twice.words(RegionId::Heap));
    }

    fn put_inline(img: &mut CrashImage, t: usize, v: u64, ts: u64, entries: &[(u64, u64)]) -> u64 {
        let l = LogLayout::new(&img.layout);
        put_entries(img, t, v + 32, entries);
        let a = l.ring_addr(t, v);
        for (i, w) in MarkerEntry::commit(ts, v, entries.len() as u64).encode().iter().enumerate() {
            put(img, RegionId::RedoLogs, a + 8 * i as u64, *w);
        }
        v + LogLayout::inline_record_bytes(entries.len() as u64)
    }

    #[test]
    fn scan_replay_follows_global_order() {
        let mut img = image(4, 2, LogFormat::InlineScan);
        let v = put_inline(&mut img, 0, 0, 10, &[(8, 1)]);
        put_inline(&mut img, 0, v, 30, &[(8, 3)]);
        put_inline(&mut img, 1, 0, 20, &[(8, 2)]);
        let r = recover(&img).unwrap();
        assert_eq!(r.report.replayed, vec![10, 20, 30]);
        assert_eq!(r.heap[1], 3);
        assert_eq!(r.report.cost.marker_reads, 4 * 2);
    }

    #[test]
    fn scan_rejects_stale_record() {
        let mut img = image(4, 1, LogFormat::InlineScan);
        let l = LogLayout::new(&img.layout);
        put_inline(&mut img, 0, 0, 10, &[(8, 1)]);
        put(&mut img, RegionId::RedoLogs, l.head_addr(0), l.ring_bytes());
        let r = recover(&img).unwrap();
        assert!(r.report.replayed.is_empty());
    }
}
