//! Exhaustive schedule exploration by state cloning.
//!
//! Every maximal schedule of an [`Explorable`] system is enumerated
//! depth-first, except that a branch point whose state fingerprint was seen
//! before is not expanded again. With [`Exec::Parallel`] the tree is first expanded
//! breadth-first into a frontier whose subtrees are explored concurrently.

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use xxhash_rust::xxh3::xxh3_128;

use crate::exec::Exec;

/// A system whose nondeterminism is a choice among runnable actors.
pub trait Explorable: Clone + Send {
    fn choices(&self) -> Vec<usize>;
    fn step(&mut self, choice: usize);
    fn is_done(&self) -> bool;
    /// Lets time-driven progress happen when no actor can move.
    fn settle(&mut self) -> bool {
        false
    }
    /// Identity of everything that can influence later steps or the final
    /// check. States with equal fingerprints are explored once.
    fn fingerprint(&self) -> Option<u128> {
        None
    }
}

/// Builds a state fingerprint.
///
/// Values fed through [`Fingerprint::time`] are replaced by their rank among
/// all times of the state (0 included) when normalization is on. That is
/// sound when behaviour only compares times with each other and every stored
/// time precedes the current step.
#[derive(Debug, Default)]
pub struct Fingerprint {
    words: Vec<u64>,
    /// Indices of time words.
    times: Vec<usize>,
    normalize: bool,
}

impl Fingerprint {
    pub fn new(normalize_times: bool) -> Self {
        Self { words: Vec::with_capacity(512), times: Vec::with_capacity(64), normalize: normalize_times }
    }

    pub fn word(&mut self, x: u64) {
        self.words.push(x);
    }

    /// A sequence, length-prefixed.
    pub fn seq(&mut self, xs: impl IntoIterator<Item = u64>) {
        let at = self.words.len();
        self.words.push(0);
        self.words.extend(xs);
        self.words[at] = (self.words.len() - at - 1) as u64;
    }

    /// The nonzero words of a fixed-size array, with their indices.
    pub fn sparse(&mut self, xs: &[u64]) {
        self.words.push(xs.len() as u64);
        let at = self.words.len();
        self.words.push(0);
        for (i, &x) in xs.iter().enumerate() {
            if x != 0 {
                self.words.extend([i as u64, x]);
            }
        }
        self.words[at] = ((self.words.len() - at - 1) / 2) as u64;
    }

    /// An unordered collection of tuples, hashed in sorted order.
    pub fn set<const N: usize>(&mut self, xs: impl IntoIterator<Item = [u64; N]>) {
        let at = self.words.len();
        self.words.push(0);
        for x in xs {
            self.words.extend(x);
        }
        let (chunks, _) = self.words[at + 1..].as_chunks_mut::<N>();
        chunks.sort_unstable();
        self.words[at] = ((self.words.len() - at - 1) / N) as u64;
    }

    pub fn time(&mut self, t: u64) {
        self.times.push(self.words.len());
        self.words.push(t);
    }

    pub fn opt_time(&mut self, t: Option<u64>) {
        self.word(t.is_some() as u64);
        self.time(t.unwrap_or(0));
    }

    pub fn finish(mut self) -> u128 {
        if self.normalize && !self.times.is_empty() {
            let max = self.times.iter().map(|&i| self.words[i]).max().unwrap_or(0);
            if max < 1 << 16 {
                // Step times are small: rank through a presence table.
                let mut rank = vec![0u32; max as usize + 1];
                for &i in &self.times {
                    rank[self.words[i] as usize] = 1;
                }
                rank[0] = 1;
                let mut r = 0;
                for x in rank.iter_mut() {
                    let present = *x;
                    *x = r;
                    r += present;
                }
                for &i in &self.times {
                    self.words[i] = rank[self.words[i] as usize] as u64;
                }
            } else {
                let mut ts: Vec<u64> = self.times.iter().map(|&i| self.words[i]).collect();
                ts.push(0);
                ts.sort_unstable();
                ts.dedup();
                for &i in &self.times {
                    self.words[i] = ts.binary_search(&self.words[i]).expect("collected time") as u64;
                }
            }
        }
        xxh3_128(bytemuck::cast_slice(&self.words))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreLimits {
    /// Stop after this many complete schedules.
    pub max_schedules: u64,
    /// Schedules longer than this are cut and counted separately.
    pub max_depth: usize,
}

impl Default for ExploreLimits {
    fn default() -> Self {
        Self { max_schedules: 2_000_000, max_depth: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub schedule: Vec<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExploreReport {
    pub schedules: u64,
    pub deadlocks: u64,
    pub depth_cuts: u64,
    /// Branch points and final states skipped because an equal state was
    /// already explored.
    pub merged: u64,
    pub failures: u64,
    /// The first few failing schedules.
    pub examples: Vec<Failure>,
    /// The schedule cap was hit before the tree was exhausted.
    pub truncated: bool,
}

impl ExploreReport {
    pub fn exhaustive(&self) -> bool {
        !self.truncated && self.depth_cuts == 0
    }

    pub fn clean(&self) -> bool {
        self.failures == 0 && self.deadlocks == 0
    }
}

const KEEP_EXAMPLES: usize = 8;

struct Shared<'a, F> {
    limits: ExploreLimits,
    check: &'a F,
    schedules: AtomicU64,
    deadlocks: AtomicU64,
    depth_cuts: AtomicU64,
    merged: AtomicU64,
    failures: AtomicU64,
    visited: Mutex<HashSet<u128>>,
    stop: AtomicBool,
    examples: Mutex<Vec<Failure>>,
}

impl<F> Shared<'_, F> {
    fn leaf<S>(&self, s: &S, trace: &[usize])
    where
        F: Fn(&S, &[usize]) -> Result<(), String>,
    {
        let n = self.schedules.fetch_add(1, Ordering::Relaxed) + 1;
        if n >= self.limits.max_schedules {
            self.stop.store(true, Ordering::Relaxed);
        }
        if let Err(message) = (self.check)(s, trace) {
            self.failures.fetch_add(1, Ordering::Relaxed);
            let mut ex = self.examples.lock().expect("examples lock");
            if ex.len() < KEEP_EXAMPLES {
                ex.push(Failure { schedule: trace.to_vec(), message });
            }
        }
    }

    /// Records `s` as visited; true if an equal state was visited before.
    fn seen<S: Explorable>(&self, s: &S) -> bool {
        s.fingerprint().is_some_and(|fp| !self.visited.lock().expect("visited lock").insert(fp))
    }

    /// Runs forced moves and classifies the node: `Some(choices)` if it
    /// branches, `None` if it was a leaf (already accounted).
    fn advance<S>(&self, s: &mut S, trace: &mut Vec<usize>) -> Option<Vec<usize>>
    where
        S: Explorable,
        F: Fn(&S, &[usize]) -> Result<(), String>,
    {
        loop {
            if s.is_done() {
                if self.seen(s) {
                    self.merged.fetch_add(1, Ordering::Relaxed);
                } else {
                    self.leaf(s, trace);
                }
                return None;
            }
            if trace.len() >= self.limits.max_depth {
                self.depth_cuts.fetch_add(1, Ordering::Relaxed);
                return None;
            }
            let c = s.choices();
            match c.len() {
                0 => {
                    if !s.settle() {
                        self.deadlocks.fetch_add(1, Ordering::Relaxed);
                        return None;
                    }
                }
                1 => {
                    s.step(c[0]);
                    trace.push(c[0]);
                }
                _ => {
                    if self.seen(s) {
                        self.merged.fetch_add(1, Ordering::Relaxed);
                        return None;
                    }
                    return Some(c);
                }
            }
        }
    }

    fn dfs<S>(&self, root: S, trace: Vec<usize>)
    where
        S: Explorable,
        F: Fn(&S, &[usize]) -> Result<(), String>,
    {
        let mut stack = vec![(root, trace)];
        while let Some((mut s, mut trace)) = stack.pop() {
            if self.stop.load(Ordering::Relaxed) {
                return;
            }
            let Some(choices) = self.advance(&mut s, &mut trace) else { continue };
            let (&first, rest) = choices.split_first().expect("branching node");
            for &c in rest.iter().rev() {
                let mut child = s.clone();
                let mut t = trace.clone();
                child.step(c);
                t.push(c);
                stack.push((child, t));
            }
            s.step(first);
            trace.push(first);
            stack.push((s, trace));
        }
    }
}

/// Enumerates all schedules of `root`, calling `check` on each final state
/// with the schedule that produced it.
pub fn explore<S, F>(root: S, limits: ExploreLimits, exec: Exec, check: F) -> ExploreReport
where
    S: Explorable,
    F: Fn(&S, &[usize]) -> Result<(), String> + Sync,
{
    let shared = Shared {
        limits,
        check: &check,
        schedules: AtomicU64::new(0),
        deadlocks: AtomicU64::new(0),
        depth_cuts: AtomicU64::new(0),
        merged: AtomicU64::new(0),
        failures: AtomicU64::new(0),
        visited: Mutex::new(HashSet::new()),
        stop: AtomicBool::new(false),
        examples: Mutex::new(Vec::new()),
    };
    match exec {
        Exec::Sequential => shared.dfs(root, Vec::new()),
        Exec::Parallel => {
            let target = 4 * rayon_threads();
            let mut frontier = vec![(root, Vec::new())];
            while !frontier.is_empty() && frontier.len() < target {
                let mut next = Vec::new();
                for (mut s, mut trace) in frontier {
                    if let Some(choices) = shared.advance(&mut s, &mut trace) {
                        for c in choices {
                            let mut child = s.clone();
                            let mut t = trace.clone();
                            child.step(c);
                            t.push(c);
                            next.push((child, t));
                        }
                    }
                }
                frontier = next;
            }
            exec.map(frontier, |(s, t)| shared.dfs(s, t));
        }
    }
    let examples = shared.examples.into_inner().expect("examples lock");
    let schedules = shared.schedules.into_inner();
    ExploreReport {
        schedules,
        deadlocks: shared.deadlocks.into_inner(),
        depth_cuts: shared.depth_cuts.into_inner(),
        merged: shared.merged.into_inner(),
        failures: shared.failures.into_inner(),
        examples,
        truncated: shared.stop.into_inner(),
    }
}

fn rayon_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two actors each taking `n` steps: C(2n, n) interleavings.
    #[derive(Clone)]
    struct Pair {
        left: [u32; 2],
        log: Vec<usize>,
    }

    impl Explorable for Pair {
        fn choices(&self) -> Vec<usize> {
            (0..2).filter(|&i| self.left[i] > 0).collect()
        }
        fn step(&mut self, c: usize) {
            self.left[c] -= 1;
            self.log.push(c);
        }
        fn is_done(&self) -> bool {
            self.left == [0, 0]
        }
    }

    #[test]
    fn counts_interleavings() {
        for exec in [Exec::Sequential, Exec::Parallel] {
            let r = explore(Pair { left: [3, 3], log: vec![] }, ExploreLimits::default(), exec, |s, t| {
                assert_eq!(s.log, t);
                Ok(())
            });
            assert_eq!(r.schedules, 20);
            assert!(r.exhaustive() && r.clean());
        }
    }

    #[test]
    fn reports_failures_and_truncation() {
        let r = explore(Pair { left: [2, 2], log: vec![] }, ExploreLimits::default(), Exec::Sequential, |s, _| {
            if s.log[0] == 1 {
                Err("right first".into())
            } else {
                Ok(())
            }
        });
        assert_eq!((r.schedules, r.failures), (6, 3));
        let r = explore(
            Pair { left: [4, 4], log: vec![] },
            ExploreLimits { max_schedules: 10, max_depth: 100 },
            Exec::Sequential,
            |_, _| Ok(()),
        );
        assert!(r.truncated);
    }

    /// `Pair` identified only by what is left to do.
    #[derive(Clone)]
    struct Counts(Pair);

    impl Explorable for Counts {
        fn choices(&self) -> Vec<usize> {
            self.0.choices()
        }
        fn step(&mut self, c: usize) {
            self.0.step(c);
        }
        fn is_done(&self) -> bool {
            self.0.is_done()
        }
        fn fingerprint(&self) -> Option<u128> {
            let mut fp = Fingerprint::new(false);
            fp.seq(self.0.left.iter().map(|&x| x as u64));
            Some(fp.finish())
        }
    }

    #[test]
    fn equal_states_are_explored_once() {
        for exec in [Exec::Sequential, Exec::Parallel] {
            let r = explore(Counts(Pair { left: [3, 3], log: vec![] }), ExploreLimits::default(), exec, |_, _| Ok(()));
            assert_eq!(r.schedules, 1);
            assert!(r.merged > 0 && r.exhaustive());
        }
    }

    fn times(ts: &[u64]) -> u128 {
        let mut fp = Fingerprint::new(true);
        for &t in ts {
            fp.time(t);
        }
        fp.finish()
    }

    #[test]
    fn times_hash_by_rank() {
        assert_eq!(times(&[5, 9, 5]), times(&[2, 3, 2]));
        assert_ne!(times(&[5, 9]), times(&[9, 5]));
        // Zero is a sentinel and keeps its own rank.
        assert_ne!(times(&[0, 3]), times(&[3, 5]));
        assert_eq!(times(&[0, 3]), times(&[0, 70_000]));
    }

    #[test]
    fn sets_ignore_order() {
        let f = |xs: &[[u64; 2]]| {
            let mut fp = Fingerprint::new(false);
            fp.set(xs.iter().copied());
            fp.word(7);
            fp.finish()
        };
        assert_eq!(f(&[[1, 2], [0, 5]]), f(&[[0, 5], [1, 2]]));
        assert_ne!(f(&[[1, 2], [0, 5]]), f(&[[1, 5], [0, 2]]));
    }
}
