//! Byte layout of the redo-log and durability-marker regions.
//!
//! The redo region is split into one window per worker thread. The first
//! line of a window is a header (word 0 holds the inline-scan replay head);
//! the rest is a ring of 16-byte `(addr, value)` entries addressed by a
//! monotonically growing virtual offset.
//!
//! The marker region starts with one header line (word 0 holds the persisted
//! replay tail) followed by `M` 32-byte marker slots.

use crate::pm::{LogFormat, PmLayout, RegionId, WORD};

pub const ENTRY_BYTES: u64 = 16;
pub const MARKER_BYTES: u64 = 32;
pub const TAIL_ADDR: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MarkerKind {
    Empty = 0,
    Commit = 1,
    Abort = 2,
}

/// A marker slot / inline commit record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarkerEntry {
    pub kind: MarkerKind,
    pub durts: u64,
    pub log_start: u64,
    pub num_entries: u64,
}

impl MarkerEntry {
    pub fn commit(durts: u64, log_start: u64, num_entries: u64) -> Self {
        Self { kind: MarkerKind::Commit, durts, log_start, num_entries }
    }

    pub fn abort(durts: u64) -> Self {
        Self { kind: MarkerKind::Abort, durts, log_start: 0, num_entries: 0 }
    }

    pub fn encode(&self) -> [u64; 4] {
        [self.kind as u64, self.durts, self.log_start, self.num_entries]
    }

    pub fn decode(w: [u64; 4]) -> Self {
        let kind = match w[0] & 0xff {
            1 => MarkerKind::Commit,
            2 => MarkerKind::Abort,
            _ => MarkerKind::Empty,
        };
        Self { kind, durts: w[1], log_start: w[2], num_entries: w[3] }
    }
}

/// Derived addressing for one device layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogLayout {
    pub line_size: u64,
    pub threads: u64,
    pub window_bytes: u64,
    pub marker_slots: u64,
    pub heap_bytes: u64,
}

impl LogLayout {
    pub fn new(pm: &PmLayout) -> Self {
        let threads = pm.threads.max(1) as u64;
        let window_bytes = pm.log_bytes / threads / pm.line_size * pm.line_size;
        Self {
            line_size: pm.line_size,
            threads,
            window_bytes,
            marker_slots: pm.marker_slots,
            heap_bytes: pm.heap_bytes,
        }
    }

    /// Marker region size for `slots` slots.
    pub fn marker_region_bytes(line_size: u64, slots: u64) -> u64 {
        line_size + (slots * MARKER_BYTES).div_ceil(line_size) * line_size
    }

    /// Builds a full device layout, checking that the pieces fit.
    pub fn pm_layout(
        line_size: u64,
        heap_bytes: u64,
        log_bytes: u64,
        marker_slots: u64,
        threads: u32,
        log_format: LogFormat,
    ) -> PmLayout {
        assert!(line_size >= MARKER_BYTES && line_size.is_multiple_of(MARKER_BYTES), "line size must be a multiple of 32");
        let round = |b: u64| b.div_ceil(line_size) * line_size;
        PmLayout {
            line_size,
            heap_bytes: round(heap_bytes),
            log_bytes: round(log_bytes),
            marker_bytes: Self::marker_region_bytes(line_size, marker_slots),
            marker_slots,
            threads,
            log_format,
        }
    }

    pub fn window_start(&self, t: usize) -> u64 {
        t as u64 * self.window_bytes
    }

    pub fn ring_base(&self, t: usize) -> u64 {
        self.window_start(t) + self.line_size
    }

    pub fn ring_bytes(&self) -> u64 {
        self.window_bytes.saturating_sub(self.line_size)
    }

    /// Physical address of the byte at virtual ring offset `v` of thread `t`.
    pub fn ring_addr(&self, t: usize, v: u64) -> u64 {
        self.ring_base(t) + v % self.ring_bytes()
    }

    pub fn head_addr(&self, t: usize) -> u64 {
        self.window_start(t)
    }

    /// Maps a physical entry address back to `(thread, ring offset)`.
    pub fn locate(&self, addr: u64) -> Option<(usize, u64)> {
        if self.window_bytes == 0 {
            return None;
        }
        let t = addr / self.window_bytes;
        if t >= self.threads {
            return None;
        }
        let off = addr - self.window_start(t as usize);
        if off < self.line_size || !(off - self.line_size).is_multiple_of(ENTRY_BYTES) {
            return None;
        }
        Some((t as usize, off - self.line_size))
    }

    pub fn slot(&self, durts: u64) -> u64 {
        durts % self.marker_slots
    }

    pub fn epoch(&self, durts: u64) -> u64 {
        durts / self.marker_slots
    }

    pub fn marker_addr(&self, durts: u64) -> u64 {
        self.line_size + self.slot(durts) * MARKER_BYTES
    }

    pub fn marker_line(&self, durts: u64) -> u64 {
        self.marker_addr(durts) / self.line_size
    }

    /// Bytes an inline record with `n` entries occupies (32-byte aligned).
    pub fn inline_record_bytes(n: u64) -> u64 {
        MARKER_BYTES + (n * ENTRY_BYTES).div_ceil(MARKER_BYTES) * MARKER_BYTES
    }
}

/// Reads a marker-shaped record at `addr` of `region` through `read`.
pub fn read_marker<E>(
    region: RegionId,
    addr: u64,
    mut read: impl FnMut(RegionId, u64) -> Result<u64, E>,
) -> Result<MarkerEntry, E> {
    let mut w = [0u64; 4];
    for (i, x) in w.iter_mut().enumerate() {
        *x = read(region, addr + i as u64 * WORD)?;
    }
    Ok(MarkerEntry::decode(w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(slots: u64) -> LogLayout {
        LogLayout::new(&LogLayout::pm_layout(128, 4096, 4096, slots, 2, LogFormat::MarkerArray))
    }

    #[test]
    fn slot_math() {
        let l = layout(8);
        assert_eq!((l.slot(0), l.epoch(0)), (0, 0));
        assert_eq!((l.slot(11), l.epoch(11)), (3, 1));
        let l = layout(1024);
        assert_eq!(l.marker_addr(0), 128);
        assert_eq!(l.marker_line(3), 1);
        assert_eq!(l.marker_line(4), 2);
    }

    #[test]
    fn marker_roundtrip() {
        let m = MarkerEntry::commit(7, 0x1000, 3);
        assert_eq!(MarkerEntry::decode(m.encode()), m);
        assert_eq!(MarkerEntry::decode([0; 4]).kind, MarkerKind::Empty);
        assert_eq!(MarkerEntry::decode(MarkerEntry::abort(4).encode()).kind, MarkerKind::Abort);
    }

    #[test]
    fn windows_and_rings() {
        let l = layout(8);
        assert_eq!(l.window_bytes, 2048);
        assert_eq!(l.ring_bytes(), 1920);
        assert_eq!(l.ring_addr(1, 0), 2048 + 128);
        assert_eq!(l.ring_addr(1, 1920), 2048 + 128);
        assert_eq!(l.locate(2048 + 128 + 32), Some((1, 32)));
        assert_eq!(l.locate(2048), None);
        assert_eq!(l.locate(1 << 20), None);
    }

    #[test]
    fn inline_records_are_32_aligned() {
        assert_eq!(LogLayout::inline_record_bytes(0), 32);
        assert_eq!(LogLayout::inline_record_bytes(1), 64);
        assert_eq!(LogLayout::inline_record_bytes(2), 64);
        assert_eq!(LogLayout::inline_record_bytes(3), 96);
    }
}
