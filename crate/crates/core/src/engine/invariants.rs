//! Online ordering checks evaluated while the engines run.

use std::collections::{HashMap, HashSet};

use crate::explore::Fingerprint;

/// Counters for the ordering invariants. Every `*_violations` field must stay
/// zero for a correct engine.
#[derive(Debug, Clone, Default)]
pub struct Invariants {
    pub redo_checks: u64,
    /// A commit marker was written while some of its redo entries were not
    /// durable yet.
    pub redo_violations: u64,
    pub dep_checks: u64,
    /// A transaction that depends on another (read-from or write-write) got
    /// a smaller durability timestamp than it.
    pub dep_violations: u64,
    /// Commits whose durability timestamp is below an earlier commit's.
    /// Legal for independent transactions under logical tickets.
    pub global_inversions: u64,
    /// A transaction returned while something it read from was not durable.
    pub wait_violations: u64,
    /// `(durability timestamp, time its marker became durable)` per commit.
    pub marker_durable: Vec<(u64, u64)>,
    last_writer: HashMap<u64, u64>,
    durable: HashSet<u64>,
    max_committed: Option<u64>,
}

impl Invariants {
    pub fn fingerprint(&self, fp: &mut Fingerprint) {
        fp.seq([
            self.redo_checks,
            self.redo_violations,
            self.dep_checks,
            self.dep_violations,
            self.global_inversions,
            self.wait_violations,
        ]);
        // Only the persistence order of markers is observable.
        let mut md = self.marker_durable.clone();
        md.sort_unstable_by_key(|&(d, at)| (at, d));
        fp.seq(md.into_iter().map(|(d, _)| d));
        fp.set(self.last_writer.iter().map(|(&a, &d)| [a, d]));
        fp.set(self.durable.iter().map(|&d| [d]));
        fp.word(self.max_committed.map_or(0, |m| m + 1));
    }

    /// Writer of the value currently visible at `addr`, if any.
    pub fn writer_of(&self, addr: u64) -> Option<u64> {
        self.last_writer.get(&addr).copied()
    }

    /// Called at the point where a transaction's writes become visible.
    pub fn on_commit(&mut self, dts: u64, read_deps: &HashSet<u64>, writes: impl IntoIterator<Item = u64>) {
        for &r in read_deps {
            self.dep_checks += 1;
            if r >= dts {
                self.dep_violations += 1;
            }
        }
        for a in writes {
            if let Some(prev) = self.last_writer.insert(a, dts) {
                self.dep_checks += 1;
                if prev >= dts {
                    self.dep_violations += 1;
                }
            }
        }
        if self.max_committed.is_some_and(|m| m > dts) {
            self.global_inversions += 1;
        }
        self.max_committed = Some(self.max_committed.map_or(dts, |m| m.max(dts)));
    }

    pub fn on_redo_check(&mut self, ok: bool) {
        self.redo_checks += 1;
        if !ok {
            self.redo_violations += 1;
        }
    }

    pub fn on_marker_durable(&mut self, dts: u64, at: u64) {
        self.durable.insert(dts);
        self.marker_durable.push((dts, at));
    }

    pub fn is_durable(&self, dts: u64) -> bool {
        self.durable.contains(&dts)
    }

    /// Checks at return from commit that every read-from source is durable.
    pub fn on_return(&mut self, read_deps: &HashSet<u64>) {
        if read_deps.iter().any(|d| !self.durable.contains(d)) {
            self.wait_violations += 1;
        }
    }

    /// Adjacent pairs, in marker-durability order, whose timestamps descend.
    /// Zero means markers persisted in timestamp order.
    pub fn marker_descents(&self) -> u64 {
        let mut v = self.marker_durable.clone();
        v.sort_unstable_by_key(|&(d, at)| (at, d));
        v.windows(2).filter(|w| w[0].0 > w[1].0).count() as u64
    }

    pub fn merge(&mut self, o: &Invariants) {
        self.redo_checks += o.redo_checks;
        self.redo_violations += o.redo_violations;
        self.dep_checks += o.dep_checks;
        self.dep_violations += o.dep_violations;
        self.global_inversions += o.global_inversions;
        self.wait_violations += o.wait_violations;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dependency_order() {
        let mut inv = Invariants::default();
        inv.on_commit(3, &HashSet::new(), [8, 16]);
        assert_eq!(inv.writer_of(8), Some(3));
        inv.on_commit(5, &HashSet::from([3]), [8]);
        assert_eq!(inv.dep_violations, 0);
        inv.on_commit(4, &HashSet::new(), [8]);
        assert_eq!(inv.dep_violations, 1);
        assert_eq!(inv.global_inversions, 1);
    }

    #[test]
    fn descents() {
        let mut inv = Invariants::default();
        inv.on_marker_durable(0, 10);
        inv.on_marker_durable(2, 20);
        inv.on_marker_durable(1, 30);
        assert_eq!(inv.marker_descents(), 1);
        assert!(inv.is_durable(2));
        inv.on_return(&HashSet::from([2, 7]));
        assert_eq!(inv.wait_violations, 1);
    }
}
