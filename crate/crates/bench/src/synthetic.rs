//! Prefilled logs for the replay benchmark: every thread's log holds
//! committed transactions with a uniform number of writes to uniform heap
//! words, in both log formats.

use std::ops::RangeInclusive;
use std::time::{Duration, Instant};

use dumbolab_core::layout::{LogLayout, MarkerEntry, ENTRY_BYTES, MARKER_BYTES};
use dumbolab_core::pm::{CrashImage, LogFormat, RegionId, WORD};
use dumbolab_core::replay::{replay_until, scan_replay, ReplayCost, ReplayReport};
use dumbolab_core::error::ReplayError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub threads: usize,
    pub seed: u64,
    pub heap_bytes: u64,
    pub log_bytes: u64,
    pub line_size: u64,
    pub writes: RangeInclusive<u64>,
}

impl SyntheticSpec {
    pub fn new(threads: usize, seed: u64) -> Self {
        Self { threads, seed, heap_bytes: 128 << 20, log_bytes: 128 << 20, line_size: 128, writes: 1..=20 }
    }
}

/// The same committed transactions laid out for the marker-array replayer
/// and for the scan-based replayer.
#[derive(Debug, Clone)]
pub struct SyntheticReplay {
    pub marker: CrashImage,
    pub scan: CrashImage,
    /// Write count of each transaction, in durTs order.
    pub write_counts: Vec<u8>,
}

impl SyntheticReplay {
    pub fn txs(&self) -> usize {
        self.write_counts.len()
    }
}

fn plan(spec: &SyntheticSpec, ring_bytes: u64) -> Vec<(usize, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut used = vec![0u64; spec.threads];
    let mut out = Vec::new();
    loop {
        let t = rng.random_range(0..spec.threads);
        let k = rng.random_range(spec.writes.clone());
        let need = LogLayout::inline_record_bytes(k);
        if used[t] + need > ring_bytes {
            return out;
        }
        used[t] += need;
        out.push((t, k));
    }
}

/// Fills per-thread logs until the first transaction that does not fit.
pub fn gen_synthetic_replay(spec: &SyntheticSpec) -> SyntheticReplay {
    assert!(spec.threads > 0 && *spec.writes.start() > 0 && *spec.writes.end() < 256);
    let threads = spec.threads as u32;
    let probe = LogLayout::new(&LogLayout::pm_layout(spec.line_size, spec.heap_bytes, spec.log_bytes, 1, threads, LogFormat::MarkerArray));
    let txs = plan(spec, probe.ring_bytes());
    // A few spare slots so the stop rule sees its holes past the last commit.
    let slots = txs.len() as u64 + spec.threads as u64;
    let marker_pm = LogLayout::pm_layout(spec.line_size, spec.heap_bytes, spec.log_bytes, slots, threads, LogFormat::MarkerArray);
    let l = LogLayout::new(&marker_pm);
    let scan_layout = LogLayout::pm_layout(spec.line_size, spec.heap_bytes, spec.log_bytes, 1, threads, LogFormat::InlineScan);
    let words = |b: u64| vec![0u64; (b / WORD) as usize];
    let mut marker = CrashImage::from_regions(marker_pm, [words(marker_pm.heap_bytes), words(marker_pm.log_bytes), words(marker_pm.marker_bytes)]);
    let mut scan = CrashImage::from_regions(scan_layout, [words(scan_layout.heap_bytes), words(scan_layout.log_bytes), words(scan_layout.marker_bytes)]);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let heap_words = spec.heap_bytes / WORD;
    let mut marker_pos = vec![0u64; spec.threads];
    let mut scan_pos = vec![0u64; spec.threads];
    let mut write_counts = Vec::with_capacity(txs.len());
    for (d, &(t, k)) in txs.iter().enumerate() {
        let d = d as u64;
        let m0 = marker_pos[t];
        let s0 = scan_pos[t];
        for i in 0..k {
            let addr = rng.random_range(0..heap_words) * WORD;
            let value = (d << 8) | (i + 1);
            let m = (l.ring_addr(t, m0 + i * ENTRY_BYTES) / WORD) as usize;
            marker.words_mut(RegionId::RedoLogs)[m..m + 2].copy_from_slice(&[addr, value]);
            let s = (l.ring_addr(t, s0 + MARKER_BYTES + i * ENTRY_BYTES) / WORD) as usize;
            scan.words_mut(RegionId::RedoLogs)[s..s + 2].copy_from_slice(&[addr, value]);
        }
        let slot = (l.marker_addr(d) / WORD) as usize;
        let entry = MarkerEntry::commit(d, l.ring_base(t) + m0, k).encode();
        marker.words_mut(RegionId::DurMarkers)[slot..slot + 4].copy_from_slice(&entry);
        let rec = (l.ring_addr(t, s0) / WORD) as usize;
        scan.words_mut(RegionId::RedoLogs)[rec..rec + 4].copy_from_slice(&MarkerEntry::commit(d, s0, k).encode());
        marker_pos[t] += k * ENTRY_BYTES;
        scan_pos[t] += LogLayout::inline_record_bytes(k);
        write_counts.push(k as u8);
    }
    SyntheticReplay { marker, scan, write_counts }
}

/// One replayer's work on a synthetic image.
#[derive(Debug, Clone)]
pub struct ReplayRun {
    pub replayed: u64,
    pub cost: ReplayCost,
    pub wall: Duration,
}

impl ReplayRun {
    /// PM accesses per replayed transaction.
    pub fn cost_per_tx(&self) -> f64 {
        self.cost.total() as f64 / self.replayed.max(1) as f64
    }

    pub fn ns_per_tx(&self) -> f64 {
        self.wall.as_nanos() as f64 / self.replayed.max(1) as f64
    }
}

fn timed(
    heap_words: usize,
    f: impl FnOnce(&mut dyn FnMut(u64, u64)) -> Result<ReplayReport, ReplayError>,
) -> Result<ReplayRun, ReplayError> {
    let mut heap = vec![0u64; heap_words];
    let t0 = Instant::now();
    let rep = f(&mut |a, v| heap[(a / WORD) as usize] = v)?;
    let wall = t0.elapsed();
    Ok(ReplayRun { replayed: rep.replayed.len() as u64, cost: rep.cost, wall })
}

/// Replays both images into a fresh heap: `(marker array, scan)`.
pub fn measure_replay(s: &SyntheticReplay) -> Result<(ReplayRun, ReplayRun), ReplayError> {
    let threads = s.marker.layout.threads as u64;
    let heap_words = s.marker.words(RegionId::Heap).len();
    let marker = timed(heap_words, |sink| replay_until(&s.marker, threads, sink))?;
    let scan = timed(heap_words, |sink| scan_replay(&s.scan, sink))?;
    Ok((marker, scan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dumbolab_core::replay::recover;

    fn small(threads: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec { heap_bytes: 1 << 16, log_bytes: 1 << 18, ..SyntheticSpec::new(threads, seed) }
    }

    #[test]
    fn both_formats_recover_the_same_heap() {
        for threads in [1, 2, 5] {
            let s = gen_synthetic_replay(&small(threads, 3));
            let a = recover(&s.marker).unwrap();
            let b = recover(&s.scan).unwrap();
            assert_eq!(a.report.replayed.len(), s.txs());
            assert_eq!(b.report.replayed, a.report.replayed);
            assert_eq!(a.heap, b.heap);
            assert!(a.heap.iter().any(|&w| w != 0));
        }
    }

    #[test]
    fn logs_fill_to_capacity() {
        let spec = small(4, 1);
        let s = gen_synthetic_replay(&spec);
        let ring = LogLayout::new(&s.scan.layout).ring_bytes();
        // The first record that did not fit was at most 20 writes long.
        let per_thread_min = ring - LogLayout::inline_record_bytes(20);
        let total: u64 = s.write_counts.iter().map(|&k| LogLayout::inline_record_bytes(k as u64)).sum();
        assert!(total > per_thread_min, "{total} bytes in {} txs", s.txs());
        assert!(total <= 4 * ring);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = gen_synthetic_replay(&small(3, 9));
        let b = gen_synthetic_replay(&small(3, 9));
        assert_eq!(a.marker, b.marker);
        assert_eq!(a.scan, b.scan);
        assert_ne!(a.marker, gen_synthetic_replay(&small(3, 10)).marker);
    }

    #[test]
    fn scan_cost_grows_with_threads_and_marker_cost_does_not() {
        let cost = |t| {
            let (m, s) = measure_replay(&gen_synthetic_replay(&small(t, 5))).unwrap();
            (m.cost_per_tx(), s.cost_per_tx())
        };
        let (m2, s2) = cost(2);
        let (m8, s8) = cost(8);
        assert!(s8 > s2 + 5.0);
        assert!((m8 - m2).abs() / m2 < 0.1);
    }
}
