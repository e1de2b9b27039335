//! Drivers: litmus exploration, crash sweeps and the hole-rule sweep.

use std::sync::atomic::{AtomicU64, Ordering};

use dumbolab_core::config::{Config, Engine, EngineKind, Isolation, TimeModeCfg};
use dumbolab_core::explore::{explore, ExploreLimits, ExploreReport};
use dumbolab_core::pm::RegionId;
use dumbolab_core::replay::replay_until;
use dumbolab_core::{Access, Exec, FixedProgram, Sim, TxSource, TxSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::durable::{check_image, full_scan};
use crate::isolation::{check_isolation, check_property1, Level, Verdict};
use crate::litmus::Litmus;

/// The isolation level an engine claims.
pub fn claimed_level(engine: Engine) -> Level {
    match (engine.kind, engine.isolation) {
        (EngineKind::Dumbo, Isolation::Si) | (EngineKind::NaiveCombo, _) => Level::Si,
        _ => Level::Opacity,
    }
}

/// Small deterministic-mode configuration for exhaustive runs.
pub fn explore_config(engine: Engine, threads: usize, heap_bytes: u64) -> Config {
    let mut c = Config::default();
    c.sim.engine = engine;
    c.sim.time_mode = TimeModeCfg::Deterministic;
    c.sim.threads = threads;
    c.sim.record_history = true;
    c.pm.heap_bytes = heap_bytes.max(c.pm.line_size);
    c.pm.log_bytes = threads as u64 * 4 * c.pm.line_size;
    c.pm.marker_slots = 8;
    c.htm.max_retries = 2;
    c
}

#[derive(Debug, Clone, Default)]
pub struct LitmusOutcome {
    pub name: String,
    pub engine: String,
    pub explore: ExploreReport,
    /// Schedules with at least one Property 1 violation.
    pub property1: u64,
    /// Whether the engine promises Property 1 (it has an isolation wait).
    pub property1_required: bool,
    /// Schedules failing the isolation check at the claimed level.
    pub isolation: u64,
    /// Schedules too large for the isolation check.
    pub unchecked: u64,
    /// Schedules breaking an online ordering invariant or the shutdown
    /// recovery.
    pub ordering: u64,
    /// Schedules whose markers persisted out of durTs order.
    pub marker_descents: u64,
    pub first_failure: Option<String>,
}

impl LitmusOutcome {
    pub fn clean(&self) -> bool {
        self.explore.clean()
            && (!self.property1_required || self.property1 == 0)
            && self.isolation == 0
            && self.unchecked == 0
            && self.ordering == 0
    }

    pub fn violations(&self) -> u64 {
        self.property1 + self.isolation
    }
}

/// Engines whose update commits wait for concurrent readers to finish, and
/// so promise that no reader overlaps a writer it observed.
pub fn requires_property1(cfg: &Config) -> bool {
    cfg.sim.isolation_wait && matches!(cfg.sim.engine.kind, EngineKind::Dumbo | EngineKind::NaiveCombo)
}

/// Explores every schedule of `litmus` under `cfg` and checks each final
/// history for Property 1 and the engine's isolation level.
pub fn explore_litmus(litmus: &Litmus, cfg: &Config, limits: ExploreLimits, exec: Exec) -> LitmusOutcome {
    let mut cfg = cfg.clone();
    cfg.sim.record_history = true;
    cfg.sim.time_mode = TimeModeCfg::Deterministic;
    let line = cfg.pm.line_size;
    cfg.pm.heap_bytes = cfg.pm.heap_bytes.max(litmus.heap_bytes(line));
    let engine = cfg.sim.engine;
    let level = claimed_level(engine);
    let p1_fails = matches!(engine.kind, EngineKind::Dumbo | EngineKind::NaiveCombo);
    let root = Sim::new(&cfg, litmus.sources(line));
    let [p1, iso, unchecked, ordering, descents] = std::array::from_fn(|_| AtomicU64::new(0));
    let report = explore(root, limits, exec, |sim: &Sim, _| {
        if let Some(e) = sim.error() {
            return Err(format!("engine error: {e}"));
        }
        let h = sim.history();
        let mut msg = Vec::new();
        let v = check_property1(h);
        if !v.is_empty() {
            p1.fetch_add(1, Ordering::Relaxed);
            if p1_fails {
                msg.push(format!("property 1: {}", v[0]));
            }
        }
        match check_isolation(h, level) {
            Verdict::Pass => {}
            Verdict::Fail(v) => {
                iso.fetch_add(1, Ordering::Relaxed);
                msg.push(format!("{level}: {}", v[0]));
            }
            Verdict::Unchecked { txs } => {
                unchecked.fetch_add(1, Ordering::Relaxed);
                msg.push(format!("{level} unchecked: {txs} transactions"));
            }
        }
        let inv = sim.invariants();
        if inv.redo_violations + inv.dep_violations + inv.wait_violations > 0 {
            ordering.fetch_add(1, Ordering::Relaxed);
            msg.push(format!("ordering invariants: {inv:?}"));
        } else if engine.is_durable() {
            match dumbolab_core::replay::recover(&sim.shutdown_image()) {
                Ok(r) if r.heap.as_slice() == sim.heap() => {}
                _ => {
                    ordering.fetch_add(1, Ordering::Relaxed);
                    msg.push("shutdown recovery differs from the heap".into());
                }
            }
        }
        if inv.marker_descents() > 0 {
            descents.fetch_add(1, Ordering::Relaxed);
        }
        if msg.is_empty() {
            Ok(())
        } else {
            Err(msg.join("; "))
        }
    });
    let first_failure = report.examples.first().map(|f| format!("{} (schedule {:?})", f.message, f.schedule));
    LitmusOutcome {
        name: litmus.name.clone(),
        engine: engine.to_string(),
        property1: p1.into_inner(),
        property1_required: requires_property1(&cfg),
        isolation: iso.into_inner(),
        unchecked: unchecked.into_inner(),
        ordering: ordering.into_inner(),
        marker_descents: descents.into_inner(),
        explore: report,
        first_failure,
    }
}

/// Random small update-heavy programs over `words` heap words. Written
/// values are unique across the whole run.
pub fn random_programs(seed: u64, threads: usize, txs: usize, words: u64, max_accesses: usize) -> Vec<Box<dyn TxSource>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..threads)
        .map(|t| {
            let specs: Vec<TxSpec> = (0..txs)
                .map(|i| {
                    let n = rng.random_range(1..=max_accesses);
                    let addr = |rng: &mut ChaCha8Rng| rng.random_range(0..words) * 8;
                    if rng.random_bool(0.25) {
                        TxSpec::read_only((0..n).map(|_| addr(&mut rng)).collect::<Vec<_>>())
                    } else {
                        let mut acc: Vec<Access> = (0..n)
                            .map(|j| {
                                let a = addr(&mut rng);
                                if rng.random_bool(0.5) {
                                    Access::Read(a)
                                } else {
                                    Access::Write(a, unique_value(t, i, j))
                                }
                            })
                            .collect();
                        if !acc.iter().any(|a| matches!(a, Access::Write(..))) {
                            acc.push(Access::Write(addr(&mut rng), unique_value(t, i, n)));
                        }
                        TxSpec::update(acc)
                    }
                })
                .collect();
            Box::new(FixedProgram::new(specs)) as Box<dyn TxSource>
        })
        .collect()
}

fn unique_value(thread: usize, tx: usize, j: usize) -> u64 {
    ((thread as u64 + 1) << 32) | ((tx as u64) << 8) | j as u64
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub runs: u64,
    pub crash_points: u64,
    pub images: u64,
    /// Images whose recovery failed durable consistency.
    pub failed: u64,
    /// Images that lost an acknowledged transaction.
    pub lost_acked: u64,
    pub first_failure: Option<String>,
}

impl SweepOutcome {
    fn merge(&mut self, o: SweepOutcome) {
        self.runs += o.runs;
        self.crash_points += o.crash_points;
        self.images += o.images;
        self.failed += o.failed;
        self.lost_acked += o.lost_acked;
        if self.first_failure.is_none() {
            self.first_failure = o.first_failure;
        }
    }
}

/// Crash sweep: one deterministic random schedule per seed, a crash point
/// at every flush, fence and commit return, and every subset of the
/// in-flight flushes at each point checked for durable consistency.
pub fn crash_sweep(cfg: &Config, sources: impl Fn(u64) -> Vec<Box<dyn TxSource>> + Sync, seeds: &[u64], exec: Exec) -> SweepOutcome {
    let runs = exec.map(seeds.to_vec(), |seed| {
        let mut cfg = cfg.clone();
        cfg.sim.time_mode = TimeModeCfg::Deterministic;
        let mut sim = Sim::new(&cfg, sources(seed));
        sim.enable_crash_capture();
        let mut out = SweepOutcome { runs: 1, ..Default::default() };
        if let Err(e) = sim.run_random(seed, 1_000_000) {
            out.failed += 1;
            out.first_failure = Some(format!("seed {seed}: {e}"));
            return out;
        }
        let mut points = sim.take_crash_points();
        let mut last = points.last().cloned().expect("at least one crash point");
        last.state = sim.pm().crash_state(u64::MAX);
        last.history = sim.history().clone();
        points.push(last);
        for p in &points {
            out.crash_points += 1;
            for img in p.state.images() {
                out.images += 1;
                let v = check_image(&p.history, &img);
                if !v.is_empty() {
                    out.failed += 1;
                    if v.iter().any(|x| matches!(x, crate::durable::DurableViolation::LostAcked { .. })) {
                        out.lost_acked += 1;
                    }
                    if out.first_failure.is_none() {
                        out.first_failure = Some(format!("seed {seed}, {:?} point {}: {}", p.site, p.state.crash_point, v[0]));
                    }
                }
            }
        }
        out
    });
    runs.into_iter().fold(SweepOutcome::default(), |mut a, o| {
        a.merge(o);
        a
    })
}

#[derive(Debug, Clone, Default)]
pub struct HoleOutcome {
    pub threads: usize,
    pub images: u64,
    /// Images where replay and the full scan disagree.
    pub disagreements: u64,
    /// Most unmarked holes below the last valid marker in any image.
    pub max_holes: u64,
    /// Images with at least one such hole.
    pub images_with_holes: u64,
    pub first_failure: Option<String>,
}

impl HoleOutcome {
    pub fn holds(&self) -> bool {
        self.disagreements == 0 && self.max_holes < self.threads as u64
    }
}

/// Runs a marker-array engine with `threads` workers over small random
/// programs and compares `replay_until(threads)` with the full scan on every
/// subset of in-flight marker-region flushes at every crash point.
pub fn hole_sweep(engine: Engine, threads: usize, seeds: &[u64], exec: Exec) -> HoleOutcome {
    assert_eq!(engine.kind, EngineKind::Dumbo, "the hole rule concerns the marker array");
    let parts = exec.map(seeds.to_vec(), |seed| {
        let mut cfg = explore_config(engine, threads, 16 * 128);
        cfg.pm.marker_slots = 4 * threads as u64;
        cfg.pm.log_bytes = threads as u64 * 8 * 128;
        let mut sim = Sim::new(&cfg, random_programs(seed, threads, 6, 24, 3));
        sim.enable_crash_capture();
        let mut out = HoleOutcome { threads, ..Default::default() };
        if let Err(e) = sim.run_random(seed, 1_000_000) {
            out.disagreements += 1;
            out.first_failure = Some(format!("seed {seed}: {e}"));
            return out;
        }
        for p in sim.take_crash_points() {
            for img in p.state.region_images(RegionId::DurMarkers) {
                out.images += 1;
                let oracle = match full_scan(&img) {
                    Ok(o) => o,
                    Err(e) => {
                        out.disagreements += 1;
                        out.first_failure.get_or_insert(format!("seed {seed}: {e}"));
                        continue;
                    }
                };
                let replayed = replay_until(&img, threads as u64, &mut |_, _| {}).map(|r| r.replayed);
                if replayed.as_ref().ok() != Some(&oracle.commits) {
                    out.disagreements += 1;
                    out.first_failure.get_or_insert(format!(
                        "seed {seed} point {}: replay {replayed:?}, full scan {:?}",
                        p.state.crash_point, oracle.commits
                    ));
                }
                out.max_holes = out.max_holes.max(oracle.holes_below_last);
                if oracle.holes_below_last > 0 {
                    out.images_with_holes += 1;
                }
            }
        }
        out
    });
    parts.into_iter().fold(HoleOutcome { threads, ..Default::default() }, |mut a, o| {
        a.images += o.images;
        a.disagreements += o.disagreements;
        a.max_holes = a.max_holes.max(o.max_holes);
        a.images_with_holes += o.images_with_holes;
        if a.first_failure.is_none() {
            a.first_failure = o.first_failure;
        }
        a
    })
}
