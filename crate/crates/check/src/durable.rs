//! Durable consistency of recovered states and the full-scan marker oracle.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use dumbolab_core::layout::LogLayout;
use dumbolab_core::pm::{CrashImage, LogFormat, RegionId, WORD};
use dumbolab_core::replay::{classify, read_tail, Recovered, SlotClass};
use dumbolab_core::{History, TxRecord};

use crate::isolation::ReadFrom;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DurableViolation {
    /// Replay applied a durTs no committed update transaction holds.
    Phantom { durts: u64 },
    /// A recovered transaction read from one that was lost.
    NotReadClosed { recovered: String, lost: String },
    /// A transaction whose commit returned is missing after recovery.
    LostAcked { tx: String },
    /// An acknowledged transaction read from a transaction that was lost.
    LostSource { acked: String, lost: String },
    /// The recovered heap is not the replay of the recovered set.
    HeapMismatch { addr: u64, expected: u64, found: u64 },
    Recovery(String),
}

impl fmt::Display for DurableViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Phantom { durts } => write!(f, "replayed durTs {durts} belongs to no committed transaction"),
            Self::NotReadClosed { recovered, lost } => write!(f, "{recovered} recovered but its source {lost} was lost"),
            Self::LostAcked { tx } => write!(f, "acknowledged {tx} was not recovered"),
            Self::LostSource { acked, lost } => write!(f, "acknowledged {acked} read from lost {lost}"),
            Self::HeapMismatch { addr, expected, found } => {
                write!(f, "heap word {addr:#x} is {found}, replaying the recovered set gives {expected}")
            }
            Self::Recovery(e) => write!(f, "recovery failed: {e}"),
        }
    }
}

/// Committed update transactions whose effects a recovery kept: replayed
/// now, or replayed before the crash by live replay (below the persisted
/// tail or the persisted per-thread heads).
pub fn recovered_set<'h>(h: &'h History, rec: &Recovered) -> Result<Vec<&'h TxRecord>, DurableViolation> {
    let rep = &rec.report;
    let updates: Vec<&TxRecord> = h.committed().filter(|r| r.is_update() && r.durts.is_some()).collect();
    let by_durts: HashMap<u64, &TxRecord> = updates.iter().map(|r| (r.durts.unwrap(), *r)).collect();
    let mut out = Vec::new();
    for &d in &rep.replayed {
        out.push(*by_durts.get(&d).ok_or(DurableViolation::Phantom { durts: d })?);
    }
    for r in &updates {
        let earlier = match rep.format {
            LogFormat::MarkerArray => r.durts.unwrap() < rep.base_tail,
            LogFormat::InlineScan => r.log_pos.is_some_and(|p| p < rep.base_heads[r.thread]),
            LogFormat::None => false,
        };
        if earlier && !rep.replayed.contains(&r.durts.unwrap()) {
            out.push(r);
        }
    }
    out.sort_by_key(|r| r.durts);
    Ok(out)
}

/// (a) the recovered set is committed and closed under read-from, (b) every
/// acknowledged transaction and its sources survive, (c) the heap equals
/// the replay of the recovered set in durTs order.
pub fn check_durable_consistency(h: &History, rec: &Recovered) -> Vec<DurableViolation> {
    let set = match recovered_set(h, rec) {
        Ok(s) => s,
        Err(v) => return vec![v],
    };
    let key = |r: &TxRecord| (r.thread, r.seq);
    let kept: BTreeSet<(usize, u64)> = set.iter().map(|r| key(r)).collect();
    let rf = ReadFrom::new(h);
    let mut out = Vec::new();
    for r in &set {
        for w in rf.sources_of(r) {
            if w.is_update() && !kept.contains(&key(w)) {
                out.push(DurableViolation::NotReadClosed { recovered: r.name(), lost: w.name() });
            }
        }
    }
    for r in h.records.iter().filter(|r| r.acked()) {
        if r.is_update() && !r.writes.is_empty() && !kept.contains(&key(r)) {
            out.push(DurableViolation::LostAcked { tx: r.name() });
        }
        for w in rf.sources_of(r) {
            if !kept.contains(&key(w)) {
                out.push(DurableViolation::LostSource { acked: r.name(), lost: w.name() });
            }
        }
    }
    let mut expect = vec![0u64; rec.heap.len()];
    for r in &set {
        for (a, v) in r.final_writes() {
            expect[(a / WORD) as usize] = v;
        }
    }
    if let Some(i) = (0..expect.len()).find(|&i| expect[i] != rec.heap[i]) {
        out.push(DurableViolation::HeapMismatch { addr: i as u64 * WORD, expected: expect[i], found: rec.heap[i] });
    }
    out
}

/// Recovers `img` and checks the result against `h`.
pub fn check_image(h: &History, img: &CrashImage) -> Vec<DurableViolation> {
    match dumbolab_core::replay::recover(img) {
        Ok(rec) => check_durable_consistency(h, &rec),
        Err(e) => vec![DurableViolation::Recovery(e.to_string())],
    }
}

/// What a full scan of every live marker slot finds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanOracle {
    pub tail: u64,
    /// Valid commit markers, ascending.
    pub commits: Vec<u64>,
    pub aborts: Vec<u64>,
    /// Unmarked slots below the highest valid marker.
    pub holes_below_last: u64,
}

/// Reads every slot of the window `[tail, tail + M)` without any stop rule.
pub fn full_scan(img: &CrashImage) -> Result<ScanOracle, String> {
    let layout = LogLayout::new(&img.layout);
    let tail = read_tail(img).map_err(|e| e.to_string())?;
    let mut commits = Vec::new();
    let mut aborts = Vec::new();
    let mut unmarked = Vec::new();
    for d in tail..tail + layout.marker_slots {
        match classify(img, &layout, d).map_err(|e| e.to_string())? {
            SlotClass::Commit(_) => commits.push(d),
            SlotClass::Abort => aborts.push(d),
            SlotClass::Unmarked => unmarked.push(d),
        }
    }
    let last = commits.iter().chain(&aborts).max().copied();
    let holes_below_last = last.map_or(0, |l| unmarked.iter().filter(|&&u| u < l).count() as u64);
    Ok(ScanOracle { tail, commits, aborts, holes_below_last })
}

/// Heap words of an image, for callers comparing heaps directly.
pub fn heap_of(img: &CrashImage) -> &[u64] {
    img.words(RegionId::Heap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dumbolab_core::layout::{MarkerEntry, ENTRY_BYTES, TAIL_ADDR};
    use dumbolab_core::replay::recover;

    fn layout() -> dumbolab_core::pm::PmLayout {
        LogLayout::pm_layout(128, 1024, 4096, 8, 2, LogFormat::MarkerArray)
    }

    type Tx<'a> = (u64, usize, &'a [(u64, u64)]);

    /// An image with commit markers for the given `(durts, thread, writes)`.
    fn image(txs: &[Tx]) -> CrashImage {
        let pl = layout();
        let l = LogLayout::new(&pl);
        let mut img = CrashImage::from_regions(
            pl,
            [vec![0; (pl.heap_bytes / WORD) as usize], vec![0; (pl.log_bytes / WORD) as usize], vec![0; (pl.marker_bytes / WORD) as usize]],
        );
        let mut pos = [0u64; 2];
        for &(d, t, writes) in txs {
            let start = pos[t];
            for (i, &(a, v)) in writes.iter().enumerate() {
                let at = l.ring_addr(t, start + i as u64 * ENTRY_BYTES);
                img.words_mut(RegionId::RedoLogs)[(at / WORD) as usize] = a;
                img.words_mut(RegionId::RedoLogs)[(at / WORD) as usize + 1] = v;
            }
            pos[t] += writes.len() as u64 * ENTRY_BYTES;
            let m = MarkerEntry::commit(d, l.ring_base(t) + start, writes.len() as u64).encode();
            let at = (l.marker_addr(d) / WORD) as usize;
            img.words_mut(RegionId::DurMarkers)[at..at + 4].copy_from_slice(&m);
        }
        img.words_mut(RegionId::DurMarkers)[(TAIL_ADDR / WORD) as usize] = 0;
        img
    }

    fn tx(thread: usize, seq: u64, durts: u64, begin: u64, reads: &[(u64, u64)], writes: &[(u64, u64)]) -> TxRecord {
        let mut r = TxRecord::new(thread, seq, 0, false, false, begin);
        r.commit_invoke = Some(begin + 1);
        r.htm_commit = Some(begin + 2);
        r.ack = Some(begin + 3);
        r.durts = Some(durts);
        r.reads = reads.to_vec();
        r.writes = writes.to_vec();
        r
    }

    #[test]
    fn clean_image_recovers_all_committed() {
        let h = History { records: vec![tx(0, 0, 0, 1, &[], &[(0, 10)]), tx(1, 0, 1, 10, &[(0, 10)], &[(8, 11)])] };
        let img = image(&[(0, 0, &[(0, 10)]), (1, 1, &[(8, 11)])]);
        let rec = recover(&img).unwrap();
        assert_eq!(recovered_set(&h, &rec).unwrap().len(), 2);
        assert!(check_durable_consistency(&h, &rec).is_empty());
    }

    #[test]
    fn lost_read_from_predecessor_is_named() {
        // T1 read from T0, T1's marker survived, T0's did not.
        let mut h = History { records: vec![tx(0, 0, 0, 1, &[], &[(0, 10)]), tx(1, 0, 1, 10, &[(0, 10)], &[(8, 11)])] };
        h.records[0].ack = None;
        h.records[1].ack = None;
        let img = image(&[(1, 1, &[(8, 11)])]);
        let v = check_durable_consistency(&h, &recover(&img).unwrap());
        assert!(v.contains(&DurableViolation::NotReadClosed { recovered: "T1.0#0".into(), lost: "T0.0#0".into() }), "{v:?}");
    }

    #[test]
    fn lost_acknowledged_and_phantoms() {
        let h = History { records: vec![tx(0, 0, 0, 1, &[], &[(0, 10)])] };
        let v = check_durable_consistency(&h, &recover(&image(&[])).unwrap());
        assert_eq!(v, vec![DurableViolation::LostAcked { tx: "T0.0#0".into() }]);
        let v = check_durable_consistency(&History::default(), &recover(&image(&[(0, 0, &[(0, 10)])])).unwrap());
        assert_eq!(v, vec![DurableViolation::Phantom { durts: 0 }]);
    }

    #[test]
    fn heap_must_match_the_recovered_set() {
        let h = History { records: vec![tx(0, 0, 0, 1, &[], &[(0, 10)])] };
        let mut rec = recover(&image(&[(0, 0, &[(0, 10)])])).unwrap();
        rec.heap[1] = 99;
        assert_eq!(check_durable_consistency(&h, &rec), vec![DurableViolation::HeapMismatch { addr: 8, expected: 0, found: 99 }]);
    }

    #[test]
    fn full_scan_sees_past_holes() {
        let img = image(&[(0, 0, &[(0, 1)]), (3, 1, &[(8, 2)])]);
        let o = full_scan(&img).unwrap();
        assert_eq!(o.commits, vec![0, 3]);
        assert_eq!(o.holes_below_last, 2);
        // With two threads the stop rule gives up after two holes.
        assert_eq!(recover(&img).unwrap().report.replayed, vec![0]);
    }
}
