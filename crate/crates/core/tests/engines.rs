use dumbolab_core::config::{Config, Engine, TimeModeCfg};
use dumbolab_core::replay::recover;
use dumbolab_core::{Access, FixedProgram, Sim, TxSource, TxSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_cfg(engine: Engine, explore: bool) -> Config {
    let mut c = Config::default();
    c.sim.engine = engine;
    c.pm.heap_bytes = 4096;
    c.pm.log_bytes = 4 * 1024;
    c.pm.marker_slots = 8;
    c.htm.max_retries = 3;
    if explore {
        c.sim.time_mode = TimeModeCfg::Deterministic;
    }
    c
}

fn random_sources(seed: u64, threads: usize, txs: usize) -> Vec<Box<dyn TxSource>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..threads)
        .map(|t| {
            let specs: Vec<TxSpec> = (0..txs)
                .map(|i| {
                    let n = rng.random_range(1..6);
                    if rng.random_bool(0.4) {
                        TxSpec::read_only((0..n).map(|_| rng.random_range(0..32u64) * 8))
                    } else {
                        TxSpec::update(
                            (0..n)
                                .map(|j| {
                                    let a = rng.random_range(0..32u64) * 8;
                                    if rng.random_bool(0.5) {
                                        Access::Read(a)
                                    } else {
                                        Access::Write(a, ((t as u64) << 32) | ((i as u64) << 8) | j)
                                    }
                                })
                                .collect(),
                        )
                    }
                })
                .collect();
            Box::new(FixedProgram::new(specs)) as Box<dyn TxSource>
        })
        .collect()
}

fn check_finished(sim: &Sim) {
    let inv = sim.invariants();
    assert_eq!(inv.redo_violations, 0, "{}", sim.engine());
    assert_eq!(inv.dep_violations, 0, "{}", sim.engine());
    assert_eq!(inv.wait_violations, 0, "{}", sim.engine());
    if sim.engine().is_durable() {
        let rec = recover(&sim.shutdown_image()).expect("recovery");
        let diff: Vec<(usize, u64, u64)> =
            (0..rec.heap.len()).filter(|&i| rec.heap[i] != sim.heap()[i]).map(|i| (i, rec.heap[i], sim.heap()[i])).collect();
        assert!(diff.is_empty(), "{}: recovered heap differs at {diff:?}; {:?}", sim.engine(), rec.report);
    }
    let commits = sim.history().records.iter().filter(|r| r.acked()).count() as u64;
    assert_eq!(commits, sim.metrics().commits);
}

#[test]
fn every_engine_runs_random_workloads() {
    for engine in Engine::ALL {
        for seed in 0..20 {
            let cfg = small_cfg(engine, false);
            let mut sim = Sim::new(&cfg, random_sources(seed, 3, 12));
            sim.run_des(None, 1_000_000).unwrap_or_else(|e| panic!("{engine} seed {seed}: {e}"));
            assert_eq!(sim.metrics().commits, 36);
            check_finished(&sim);

            let cfg = small_cfg(engine, true);
            let mut sim = Sim::new(&cfg, random_sources(seed, 3, 12));
            sim.run_random(seed, 1_000_000).unwrap_or_else(|e| panic!("{engine} seed {seed}: {e}"));
            assert_eq!(sim.metrics().commits, 36);
            check_finished(&sim);
        }
    }
}

#[test]
fn log_wraps_and_live_replay_reclaims() {
    for engine in [Engine::DUMBO_SI, Engine::SPHT] {
        let mut cfg = small_cfg(engine, false);
        cfg.pm.log_bytes = 2 * 512;
        let mut sim = Sim::new(&cfg, random_sources(7, 2, 200));
        sim.run_des(None, 10_000_000).unwrap();
        assert!(sim.metrics().live_replays > 0, "{engine}");
        check_finished(&sim);
    }
}

#[test]
fn background_replayer_terminates() {
    let mut cfg = small_cfg(Engine::DUMBO_OPA, false);
    cfg.sim.background_replay = true;
    let mut sim = Sim::new(&cfg, random_sources(3, 2, 50));
    sim.run_des(None, 1_000_000).unwrap();
    check_finished(&sim);
}
