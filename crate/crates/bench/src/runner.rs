//! Benchmark cells: one engine, thread count and mix, run several times on
//! the discrete-event simulator.

use dumbolab_core::config::{Config, TimeModeCfg};
use dumbolab_core::error::SimError;
use dumbolab_core::htm::AbortCode;
use dumbolab_core::{Bucket, Exec, MetricsRecord, Sim};
use thiserror::Error;

use crate::workload::{Mix, TpccLite};

/// How long each run lasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunLength {
    /// Virtual nanoseconds; workers stop starting transactions after it.
    Duration(u64),
    /// Transactions per worker.
    Txs(u64),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Engine, isolation, thread count, seed and the PM/HTM parameters.
    pub sim: Config,
    pub mix: Mix,
    pub scale: f64,
    pub disjoint: bool,
    /// Warehouses; 0 means one per worker.
    pub warehouses: usize,
    pub length: RunLength,
    pub runs: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut sim = Config::default();
        sim.sim.record_history = false;
        Self {
            sim,
            mix: Mix::update_dominated(),
            scale: 1.0,
            disjoint: false,
            warehouses: 0,
            length: RunLength::Duration(5_000_000_000),
            runs: 3,
        }
    }
}

impl RunConfig {
    pub fn threads(&self) -> usize {
        self.sim.sim.threads
    }

    pub fn workload(&self, run: u32) -> TpccLite {
        let mut w = TpccLite::new(self.mix.clone(), self.scale, self.run_seed(run), self.sim.pm.heap_bytes, self.sim.pm.line_size);
        w.warehouses = if self.warehouses == 0 { self.threads() } else { self.warehouses };
        w.disjoint = self.disjoint;
        if let RunLength::Txs(n) = self.length {
            w.txs_per_thread = Some(n);
        }
        w
    }

    fn run_seed(&self, run: u32) -> u64 {
        self.sim.sim.seed.wrapping_add(run as u64)
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{engine} with {threads} threads, mix {mix}, run {run}: {source}")]
    Sim { engine: String, threads: usize, mix: String, run: u32, source: SimError },
    #[error("deterministic runs need a transaction count, not a duration")]
    DeterministicDuration,
}

/// Ordering-invariant counters summed over runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OrderingSummary {
    pub redo_violations: u64,
    pub dep_violations: u64,
    pub wait_violations: u64,
    pub global_inversions: u64,
    /// Runs in which some marker became durable before a smaller durTs.
    pub runs_with_descents: u64,
    pub marker_descents: u64,
}

impl OrderingSummary {
    pub fn clean(&self) -> bool {
        self.redo_violations + self.dep_violations + self.wait_violations == 0
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub engine: String,
    pub threads: usize,
    pub mix: String,
    pub runs: u32,
    /// Counters summed over runs; `elapsed_ns` is the summed run time.
    pub metrics: MetricsRecord,
    pub ordering: OrderingSummary,
}

impl BenchResult {
    pub fn commits_per_sec(&self) -> f64 {
        self.metrics.throughput()
    }

    /// Average virtual ns per committed transaction spent in `b`.
    pub fn bucket_per_commit(&self, b: Bucket) -> f64 {
        self.metrics.bucket(b) as f64 / self.metrics.commits.max(1) as f64
    }

    pub fn capacity_aborts(&self) -> u64 {
        self.metrics.abort_count(AbortCode::CapacityRead) + self.metrics.abort_count(AbortCode::CapacityWrite)
    }
}

fn one_run(rc: &RunConfig, run: u32) -> Result<(MetricsRecord, OrderingSummary), BenchError> {
    let mut cfg = rc.sim.clone();
    cfg.sim.seed = rc.run_seed(run);
    let sources = rc.workload(run).sources(cfg.sim.threads);
    let mut sim = Sim::new(&cfg, sources);
    let res = match (cfg.sim.time_mode, rc.length) {
        (TimeModeCfg::Deterministic, RunLength::Duration(_)) => return Err(BenchError::DeterministicDuration),
        (TimeModeCfg::Deterministic, RunLength::Txs(_)) => sim.run_random(cfg.sim.seed, u64::MAX),
        (TimeModeCfg::Virtual, RunLength::Duration(ns)) => sim.run_des(Some(ns), u64::MAX),
        (TimeModeCfg::Virtual, RunLength::Txs(_)) => sim.run_des(None, u64::MAX),
    };
    res.map_err(|source| BenchError::Sim {
        engine: cfg.sim.engine.to_string(),
        threads: cfg.sim.threads,
        mix: rc.mix.name.clone(),
        run,
        source,
    })?;
    let inv = sim.invariants();
    let descents = inv.marker_descents();
    let ord = OrderingSummary {
        redo_violations: inv.redo_violations,
        dep_violations: inv.dep_violations,
        wait_violations: inv.wait_violations,
        global_inversions: inv.global_inversions,
        runs_with_descents: u64::from(descents > 0),
        marker_descents: descents,
    };
    Ok((sim.metrics().clone(), ord))
}

/// Runs `rc.runs` independent runs and sums their counters.
pub fn run_benchmark(rc: &RunConfig, exec: Exec) -> Result<BenchResult, BenchError> {
    let runs = exec.map((0..rc.runs).collect(), |r| one_run(rc, r));
    let mut metrics = MetricsRecord::default();
    let mut ordering = OrderingSummary::default();
    let mut elapsed = 0;
    for r in runs {
        let (m, o) = r?;
        elapsed += m.elapsed_ns;
        metrics.merge(&m);
        ordering.redo_violations += o.redo_violations;
        ordering.dep_violations += o.dep_violations;
        ordering.wait_violations += o.wait_violations;
        ordering.global_inversions += o.global_inversions;
        ordering.runs_with_descents += o.runs_with_descents;
        ordering.marker_descents += o.marker_descents;
    }
    metrics.elapsed_ns = elapsed;
    Ok(BenchResult {
        engine: rc.sim.sim.engine.to_string(),
        threads: rc.threads(),
        mix: rc.mix.name.clone(),
        runs: rc.runs,
        metrics,
        ordering,
    })
}

/// Runs every cell; cells run in parallel when `exec` allows, runs within a
/// cell sequentially.
pub fn run_sweep(cells: Vec<RunConfig>, exec: Exec) -> Vec<Result<BenchResult, BenchError>> {
    exec.map(cells, |rc| run_benchmark(&rc, Exec::Sequential))
}
