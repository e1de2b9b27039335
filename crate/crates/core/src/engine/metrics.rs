//! Throughput counters and latency buckets.

use crate::htm::AbortCode;

/// Where a committed transaction's time went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bucket {
    PlainExec = 0,
    IsolationWait = 1,
    RedoFlushWait = 2,
    DurabilityWait = 3,
    MarkerFlush = 4,
    RolledBack = 5,
}

impl Bucket {
    pub const ALL: [Bucket; 6] = [
        Bucket::PlainExec,
        Bucket::IsolationWait,
        Bucket::RedoFlushWait,
        Bucket::DurabilityWait,
        Bucket::MarkerFlush,
        Bucket::RolledBack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Bucket::PlainExec => "plain_exec",
            Bucket::IsolationWait => "isolation_wait",
            Bucket::RedoFlushWait => "redo_flush_wait",
            Bucket::DurabilityWait => "durability_wait",
            Bucket::MarkerFlush => "marker_flush",
            Bucket::RolledBack => "rolled_back",
        }
    }
}

pub const LABELS: usize = 8;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetricsRecord {
    pub commits: u64,
    pub ro_commits: u64,
    pub update_commits: u64,
    pub commits_by_label: [u64; LABELS],
    pub aborts: [u64; 6],
    pub htm_attempts: u64,
    pub htm_commits: u64,
    pub sgl_runs: u64,
    /// Virtual nanoseconds per [`Bucket`], summed over committed transactions.
    pub buckets: [u64; 6],
    pub busy_ns: u64,
    pub elapsed_ns: u64,
    pub ro_dur_wait_steps: u64,
    pub ro_dur_wait_ns: u64,
    pub ro_with_predecessor: u64,
    /// RO commits with no pre-begin non-durable peer that still waited.
    pub ro_unexpected_waits: u64,
    pub update_dur_wait_ns: u64,
    /// Commits whose isolation wait lasted at least one flush latency.
    pub long_iso_commits: u64,
    /// ... of which the post-commit redo fence did not wait at all.
    pub long_iso_free_fence: u64,
    pub redo_fence_wait_ns: u64,
    pub live_replays: u64,
}

impl MetricsRecord {
    pub fn abort_count(&self, code: AbortCode) -> u64 {
        self.aborts[code.index()]
    }

    pub fn total_aborts(&self) -> u64 {
        self.aborts.iter().sum()
    }

    pub fn bucket(&self, b: Bucket) -> u64 {
        self.buckets[b as usize]
    }

    pub fn merge(&mut self, o: &MetricsRecord) {
        self.commits += o.commits;
        self.ro_commits += o.ro_commits;
        self.update_commits += o.update_commits;
        for i in 0..LABELS {
            self.commits_by_label[i] += o.commits_by_label[i];
        }
        for i in 0..6 {
            self.aborts[i] += o.aborts[i];
            self.buckets[i] += o.buckets[i];
        }
        self.htm_attempts += o.htm_attempts;
        self.htm_commits += o.htm_commits;
        self.sgl_runs += o.sgl_runs;
        self.busy_ns += o.busy_ns;
        self.elapsed_ns = self.elapsed_ns.max(o.elapsed_ns);
        self.ro_dur_wait_steps += o.ro_dur_wait_steps;
        self.ro_dur_wait_ns += o.ro_dur_wait_ns;
        self.ro_with_predecessor += o.ro_with_predecessor;
        self.ro_unexpected_waits += o.ro_unexpected_waits;
        self.update_dur_wait_ns += o.update_dur_wait_ns;
        self.long_iso_commits += o.long_iso_commits;
        self.long_iso_free_fence += o.long_iso_free_fence;
        self.redo_fence_wait_ns += o.redo_fence_wait_ns;
        self.live_replays += o.live_replays;
    }

    /// Commits per second of virtual time.
    pub fn throughput(&self) -> f64 {
        if self.elapsed_ns == 0 {
            0.0
        } else {
            self.commits as f64 * 1e9 / self.elapsed_ns as f64
        }
    }

    /// Aborts of `code` per HTM attempt.
    pub fn abort_rate(&self, code: AbortCode) -> f64 {
        if self.htm_attempts == 0 {
            0.0
        } else {
            self.abort_count(code) as f64 / self.htm_attempts as f64
        }
    }

    /// Fraction of commits that went through the SGL.
    pub fn sgl_rate(&self) -> f64 {
        if self.commits == 0 {
            0.0
        } else {
            self.sgl_runs as f64 / self.commits as f64
        }
    }

    /// Bucket time relative to plain execution.
    pub fn overhead(&self, b: Bucket) -> f64 {
        let plain = self.bucket(Bucket::PlainExec);
        if plain == 0 {
            0.0
        } else {
            self.bucket(b) as f64 / plain as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_adds_and_takes_max_elapsed() {
        let mut a = MetricsRecord { commits: 2, elapsed_ns: 10, ..Default::default() };
        a.aborts[AbortCode::Conflict.index()] = 1;
        let b = MetricsRecord { commits: 3, elapsed_ns: 7, htm_attempts: 4, ..Default::default() };
        a.merge(&b);
        assert_eq!(a.commits, 5);
        assert_eq!(a.elapsed_ns, 10);
        assert_eq!(a.abort_rate(AbortCode::Conflict), 0.25);
        assert_eq!(a.throughput(), 5e8);
    }
}
