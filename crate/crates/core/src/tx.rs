//! Transaction bodies fed to simulated workers.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Access {
    Read(u64),
    Write(u64, u64),
}

/// One transaction: a read-only flag and its heap accesses in program order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxSpec {
    pub read_only: bool,
    pub accesses: Vec<Access>,
    /// Free-form workload tag (e.g. the TPC-C-lite transaction type).
    pub label: u8,
}

impl TxSpec {
    pub fn update(accesses: Vec<Access>) -> Self {
        Self { read_only: false, accesses, label: 0 }
    }

    pub fn read_only(addrs: impl IntoIterator<Item = u64>) -> Self {
        Self { read_only: true, accesses: addrs.into_iter().map(Access::Read).collect(), label: 0 }
    }

    pub fn writes(&self) -> usize {
        self.accesses.iter().filter(|a| matches!(a, Access::Write(..))).count()
    }

    pub fn reads(&self) -> usize {
        self.accesses.len() - self.writes()
    }
}

/// A per-worker stream of transactions. Must be cloneable so simulator
/// states can be forked during exploration.
pub trait TxSource: Send + Sync {
    fn next_tx(&mut self) -> Option<TxSpec>;
    fn boxed_clone(&self) -> Box<dyn TxSource>;
    /// Identifies the remaining stream among clones of the same source.
    /// `None` disables state merging during exploration.
    fn fingerprint(&self) -> Option<u64> {
        None
    }
}

impl Clone for Box<dyn TxSource> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

impl std::fmt::Debug for dyn TxSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TxSource")
    }
}

/// A fixed list of transactions.
#[derive(Debug, Clone, Default)]
pub struct FixedProgram(pub VecDeque<TxSpec>);

impl FixedProgram {
    pub fn new(txs: impl IntoIterator<Item = TxSpec>) -> Self {
        Self(txs.into_iter().collect())
    }
}

impl TxSource for FixedProgram {
    fn next_tx(&mut self) -> Option<TxSpec> {
        self.0.pop_front()
    }

    fn boxed_clone(&self) -> Box<dyn TxSource> {
        Box::new(self.clone())
    }

    fn fingerprint(&self) -> Option<u64> {
        Some(self.0.len() as u64)
    }
}
