//! History checkers: read-from, Property 1, snapshot isolation and opacity.
//!
//! Read-from is recovered from values: every written value names exactly one
//! transaction (retried attempts of one transaction rewrite the same
//! values), and `0` is the initial value of every word.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use dumbolab_core::{History, TxRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Si,
    Opacity,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Si => "SI",
            Level::Opacity => "opacity",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// `reader` read from `writer` although their intervals overlap.
    Property1 { reader: String, writer: String, addr: u64 },
    /// A read returned a value no committed transaction wrote.
    DirtyRead { reader: String, addr: u64, value: u64 },
    /// No single snapshot explains the reads.
    NoSnapshot { tx: String },
    /// Two concurrent committed transactions wrote the same word.
    LostUpdate { a: String, b: String, addr: u64 },
    NotSerializable,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Property1 { reader, writer, addr } => {
                write!(f, "{reader} read {addr:#x} from concurrent {writer}")
            }
            Violation::DirtyRead { reader, addr, value } => {
                write!(f, "{reader} read {value} at {addr:#x}, written by no committed transaction")
            }
            Violation::NoSnapshot { tx } => write!(f, "{tx} reads from no single snapshot"),
            Violation::LostUpdate { a, b, addr } => write!(f, "{a} and {b} are concurrent and both wrote {addr:#x}"),
            Violation::NotSerializable => f.write_str("no serialization respects real-time order"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail(Vec<Violation>),
    /// Too large for the exhaustive search.
    Unchecked { txs: usize },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    fn from(v: Vec<Violation>) -> Verdict {
        if v.is_empty() {
            Verdict::Pass
        } else {
            Verdict::Fail(v)
        }
    }
}

/// Largest number of transactions the opacity search accepts.
pub const OPACITY_LIMIT: usize = 14;

/// Index from written value to the committed record that wrote it.
pub struct ReadFrom<'h> {
    writer: HashMap<u64, &'h TxRecord>,
}

/// Where a read value came from.
#[derive(Debug, Clone, Copy)]
pub enum Source<'h> {
    Initial,
    Tx(&'h TxRecord),
    /// Written by no committed transaction.
    Unknown,
}

impl<'h> ReadFrom<'h> {
    pub fn new(h: &'h History) -> Self {
        let mut writer = HashMap::new();
        for r in h.committed() {
            for &(_, v) in &r.writes {
                writer.insert(v, r);
            }
        }
        Self { writer }
    }

    pub fn source(&self, value: u64) -> Source<'h> {
        if value == 0 {
            return Source::Initial;
        }
        self.writer.get(&value).map_or(Source::Unknown, |w| Source::Tx(w))
    }

    /// Committed transactions `r` read from, excluding itself.
    pub fn sources_of(&self, r: &TxRecord) -> Vec<&'h TxRecord> {
        let mut out: Vec<&TxRecord> = Vec::new();
        for &(_, v) in &r.reads {
            if let Source::Tx(w) = self.source(v) {
                if !same_tx(w, r) && !out.iter().any(|x| same_tx(x, w)) {
                    out.push(w);
                }
            }
        }
        out
    }
}

fn same_tx(a: &TxRecord, b: &TxRecord) -> bool {
    a.thread == b.thread && a.seq == b.seq
}

/// Reads not preceded by the transaction's own write to the same word.
fn external_reads(r: &TxRecord) -> Vec<(u64, u64)> {
    // Reads and writes are logged separately, so an own-write read shows
    // up as a read returning a value this transaction wrote.
    let own: HashMap<u64, Vec<u64>> = r.writes.iter().fold(HashMap::new(), |mut m, &(a, v)| {
        m.entry(a).or_default().push(v);
        m
    });
    r.reads
        .iter()
        .copied()
        .filter(|(a, v)| !own.get(a).is_some_and(|vs| vs.contains(v)))
        .collect()
}

fn interval(r: &TxRecord) -> (u64, u64) {
    (r.begin, r.commit_invoke.unwrap_or(u64::MAX))
}

/// Committed pairs connected by read-from whose `[begin, commit invocation]`
/// intervals overlap.
pub fn check_property1(h: &History) -> Vec<Violation> {
    let rf = ReadFrom::new(h);
    let mut out = Vec::new();
    for r in h.committed() {
        for &(addr, v) in &r.reads {
            match rf.source(v) {
                Source::Tx(w) if !same_tx(w, r) => {
                    let (rb, re) = interval(r);
                    let (wb, we) = interval(w);
                    if rb < we && wb < re {
                        out.push(Violation::Property1 { reader: r.name(), writer: w.name(), addr });
                    }
                }
                Source::Unknown => out.push(Violation::DirtyRead { reader: r.name(), addr, value: v }),
                _ => {}
            }
        }
    }
    out
}

pub fn check_isolation(h: &History, level: Level) -> Verdict {
    match level {
        Level::Si => check_si(h),
        Level::Opacity => check_opacity(h),
    }
}

/// Committed update transactions in visibility order.
fn commit_order(h: &History) -> Vec<&TxRecord> {
    let mut v: Vec<&TxRecord> = h.committed().filter(|r| !r.writes.is_empty()).collect();
    v.sort_by_key(|r| r.htm_commit);
    v
}

/// Snapshot isolation: each committed transaction has a snapshot point, a
/// prefix of the commit order taken between its begin and its commit
/// invocation, that explains its external reads and (first committer wins)
/// contains every earlier committer that wrote a word it also writes.
/// Property 1 is checked as well.
pub fn check_si(h: &History) -> Verdict {
    let mut out = check_property1(h);
    let order = commit_order(h);
    let mut states: Vec<HashMap<u64, u64>> = vec![HashMap::new()];
    for w in &order {
        let mut s = states.last().unwrap().clone();
        for (a, v) in w.final_writes() {
            s.insert(a, v);
        }
        states.push(s);
    }
    for r in h.committed() {
        let ext = external_reads(r);
        let lo = order.iter().filter(|w| w.htm_commit < Some(r.begin)).count();
        let hi = order.iter().filter(|w| w.htm_commit < r.commit_invoke).count().max(lo);
        let mine: Vec<u64> = r.final_writes().iter().map(|&(a, _)| a).collect();
        let rival = order
            .iter()
            .enumerate()
            .filter(|(_, w)| w.htm_commit < r.htm_commit && !same_tx(w, r))
            .filter_map(|(i, w)| w.final_writes().iter().find(|(a, _)| mine.contains(a)).map(|&(a, _)| (i, *w, a)))
            .next_back();
        let need = rival.map_or(0, |(i, _, _)| i + 1);
        let fits = |p: &usize| ext.iter().all(|&(a, v)| states[*p].get(&a).copied().unwrap_or(0) == v);
        if (lo.max(need)..=hi).any(|p| fits(&p)) {
            continue;
        }
        match rival {
            Some((_, w, addr)) if (lo..=hi).any(|p| fits(&p)) || need > hi => {
                out.push(Violation::LostUpdate { a: w.name(), b: r.name(), addr })
            }
            _ => out.push(Violation::NoSnapshot { tx: r.name() }),
        }
    }
    Verdict::from(out)
}

struct Node<'h> {
    rec: &'h TxRecord,
    committed: bool,
    reads: Vec<(u64, u64)>,
    writes: Vec<(u64, u64)>,
    /// Nodes that must be placed first.
    preds: u64,
}

/// Opacity: committed transactions and aborted attempts (which write
/// nothing) admit one total order that respects real-time order, where
/// real-time order runs from commit return (or abort) to the next begin, and
/// every read returns the latest preceding committed write.
pub fn check_opacity(h: &History) -> Verdict {
    let rf = ReadFrom::new(h);
    let mut dirty = Vec::new();
    for r in &h.records {
        for &(addr, v) in &r.reads {
            if matches!(rf.source(v), Source::Unknown) && !r.writes.iter().any(|&(a, x)| a == addr && x == v) {
                dirty.push(Violation::DirtyRead { reader: r.name(), addr, value: v });
            }
        }
    }
    if !dirty.is_empty() {
        return Verdict::Fail(dirty);
    }
    let relevant: Vec<&TxRecord> = h
        .records
        .iter()
        .filter(|r| {
            let done = r.committed() || r.abort.is_some();
            done && (r.committed() && !r.writes.is_empty() || !external_reads(r).is_empty())
        })
        .collect();
    if relevant.len() > OPACITY_LIMIT {
        return Verdict::Unchecked { txs: relevant.len() };
    }
    let end = |r: &TxRecord| -> u64 {
        match r.abort {
            Some((t, _)) => t,
            None => r.ack.unwrap_or(u64::MAX),
        }
    };
    let mut nodes: Vec<Node> = relevant
        .iter()
        .map(|r| Node {
            rec: r,
            committed: r.committed(),
            reads: external_reads(r),
            writes: if r.committed() { r.final_writes() } else { Vec::new() },
            preds: 0,
        })
        .collect();
    for i in 0..nodes.len() {
        for j in 0..nodes.len() {
            if i != j && end(nodes[j].rec) < nodes[i].rec.begin {
                nodes[i].preds |= 1 << j;
            }
        }
    }
    let mut state = BTreeMap::new();
    let mut memo = HashSet::new();
    if serialize(&nodes, 0, &mut state, &mut memo) {
        Verdict::Pass
    } else {
        Verdict::Fail(vec![Violation::NotSerializable])
    }
}

fn serialize(nodes: &[Node], placed: u64, state: &mut BTreeMap<u64, u64>, memo: &mut HashSet<(u64, Vec<(u64, u64)>)>) -> bool {
    if placed.count_ones() as usize == nodes.len() {
        return true;
    }
    let key = (placed, state.iter().map(|(&a, &v)| (a, v)).collect::<Vec<_>>());
    if memo.contains(&key) {
        return false;
    }
    for (i, n) in nodes.iter().enumerate() {
        let bit = 1u64 << i;
        if placed & bit != 0 || n.preds & !placed != 0 {
            continue;
        }
        if !n.reads.iter().all(|&(a, v)| state.get(&a).copied().unwrap_or(0) == v) {
            continue;
        }
        let saved: Vec<(u64, Option<u64>)> = n.writes.iter().map(|&(a, _)| (a, state.get(&a).copied())).collect();
        if n.committed {
            for &(a, v) in &n.writes {
                state.insert(a, v);
            }
        }
        if serialize(nodes, placed | bit, state, memo) {
            return true;
        }
        for (a, old) in saved.into_iter().rev() {
            match old {
                Some(v) => state.insert(a, v),
                None => state.remove(&a),
            };
        }
    }
    memo.insert(key);
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use dumbolab_core::TxRecord;

    fn rec(thread: usize, begin: u64, ci: u64, commit: u64, reads: &[(u64, u64)], writes: &[(u64, u64)]) -> TxRecord {
        let mut r = TxRecord::new(thread, 0, 0, writes.is_empty(), false, begin);
        r.commit_invoke = Some(ci);
        r.htm_commit = Some(commit);
        r.ack = Some(commit + 1);
        r.reads = reads.to_vec();
        r.writes = writes.to_vec();
        r
    }

    fn hist(v: Vec<TxRecord>) -> History {
        History { records: v }
    }

    #[test]
    fn empty_history_passes_both() {
        let h = History::default();
        assert!(check_si(&h).passed());
        assert!(check_opacity(&h).passed());
        assert!(check_property1(&h).is_empty());
    }

    #[test]
    fn serial_history_passes() {
        let h = hist(vec![rec(0, 1, 2, 3, &[(0, 0)], &[(0, 5)]), rec(1, 10, 11, 12, &[(0, 5)], &[(0, 6)])]);
        assert!(check_property1(&h).is_empty());
        assert!(check_si(&h).passed());
        assert!(check_opacity(&h).passed());
    }

    #[test]
    fn concurrent_read_from_is_a_property1_violation() {
        // T1 reads x = 5 written by T0, which was still running.
        let h = hist(vec![rec(0, 1, 6, 7, &[], &[(0, 5)]), rec(1, 2, 9, 10, &[(0, 5)], &[(8, 6)])]);
        let v = check_property1(&h);
        assert_eq!(v.len(), 1);
        assert!(matches!(&v[0], Violation::Property1 { reader, writer, .. } if reader == "T1.0#0" && writer == "T0.0#0"));
        assert!(!check_si(&h).passed());
    }

    #[test]
    fn write_skew_passes_si_and_fails_opacity() {
        let h = hist(vec![rec(0, 1, 4, 5, &[(8, 0)], &[(0, 1)]), rec(1, 2, 6, 7, &[(0, 0)], &[(8, 2)])]);
        assert_eq!(check_si(&h), Verdict::Pass);
        assert_eq!(check_opacity(&h), Verdict::Fail(vec![Violation::NotSerializable]));
    }

    #[test]
    fn non_repeatable_read_fails_si() {
        let r = rec(0, 1, 9, 9, &[(0, 0), (0, 1)], &[]);
        let h = hist(vec![r, rec(1, 2, 3, 4, &[], &[(0, 1)])]);
        assert!(!check_si(&h).passed());
        assert!(!check_opacity(&h).passed());
    }

    #[test]
    fn lost_update_fails_si() {
        let h = hist(vec![rec(0, 1, 4, 5, &[(0, 0)], &[(0, 1)]), rec(1, 2, 6, 7, &[(0, 0)], &[(0, 2)])]);
        assert!(matches!(check_si(&h), Verdict::Fail(v) if v.iter().any(|x| matches!(x, Violation::LostUpdate { .. }))));
    }

    #[test]
    fn dirty_and_own_reads() {
        let h = hist(vec![rec(0, 1, 2, 3, &[(0, 77)], &[])]);
        assert!(!check_opacity(&h).passed());
        assert!(!check_si(&h).passed());
        let h = hist(vec![rec(0, 1, 2, 3, &[(0, 4)], &[(0, 4)])]);
        assert!(check_opacity(&h).passed());
        assert!(check_si(&h).passed());
    }

    #[test]
    fn aborted_attempts_must_read_consistently() {
        let w = rec(1, 2, 3, 4, &[], &[(0, 1), (8, 2)]);
        let mut a = rec(0, 1, 9, 9, &[(0, 0), (8, 2)], &[]);
        a.htm_commit = None;
        a.ack = None;
        a.abort = Some((9, dumbolab_core::htm::AbortCode::Conflict));
        let h = hist(vec![a.clone(), w.clone()]);
        assert!(!check_opacity(&h).passed());
        a.reads = vec![(0, 0), (8, 0)];
        assert!(check_opacity(&hist(vec![a, w])).passed());
    }

    #[test]
    fn real_time_order_is_respected() {
        // T1 starts after T0 returned yet reads the older value.
        let h = hist(vec![rec(0, 1, 2, 3, &[], &[(0, 1)]), rec(1, 10, 11, 12, &[(0, 0)], &[])]);
        assert!(!check_opacity(&h).passed());
        assert!(!check_si(&h).passed());
    }

    #[test]
    fn oversized_histories_are_unchecked() {
        let v: Vec<TxRecord> = (0..OPACITY_LIMIT as u64 + 1).map(|i| rec(0, 10 * i + 1, 10 * i + 2, 10 * i + 3, &[], &[(0, i + 1)])).collect();
        assert_eq!(check_opacity(&hist(v)), Verdict::Unchecked { txs: OPACITY_LIMIT + 1 });
    }
}
