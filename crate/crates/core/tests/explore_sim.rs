use dumbolab_core::config::{Config, Engine, TimeModeCfg};
use dumbolab_core::explore::{explore, ExploreLimits};
use dumbolab_core::replay::recover;
use dumbolab_core::{Access, Exec, FixedProgram, Sim, TxSource, TxSpec};

fn cfg(engine: Engine) -> Config {
    let mut c = Config::default();
    c.sim.engine = engine;
    c.sim.time_mode = TimeModeCfg::Deterministic;
    c.pm.heap_bytes = 256;
    c.pm.log_bytes = 2 * 256;
    c.pm.marker_slots = 2;
    c.htm.max_retries = 1;
    c
}

fn two_threads() -> Vec<Box<dyn TxSource>> {
    vec![
        Box::new(FixedProgram::new([TxSpec::update(vec![Access::Read(8), Access::Write(0, 1)])])),
        Box::new(FixedProgram::new([
            TxSpec::update(vec![Access::Read(0), Access::Write(8, 2)]),
            TxSpec::read_only([0, 8]),
        ])),
    ]
}

#[test]
fn every_schedule_is_deadlock_free_and_recoverable() {
    for engine in Engine::ALL {
        let root = Sim::new(&cfg(engine), two_threads());
        let report = explore(root, ExploreLimits::default(), Exec::Parallel, |sim: &Sim, _| {
            if let Some(e) = sim.error() {
                return Err(e.to_string());
            }
            let inv = sim.invariants();
            if inv.redo_violations + inv.dep_violations + inv.wait_violations > 0 {
                return Err(format!("{inv:?}"));
            }
            if sim.metrics().commits != 3 {
                return Err(format!("{} commits", sim.metrics().commits));
            }
            if engine.is_durable() {
                let rec = recover(&sim.shutdown_image()).map_err(|e| e.to_string())?;
                if rec.heap.as_slice() != sim.heap() {
                    return Err("recovered heap differs".into());
                }
            }
            Ok(())
        });
        assert!(report.exhaustive(), "{engine}: {report:?}");
        assert!(report.clean(), "{engine}: {report:?}");
        assert!(report.schedules > 10, "{engine}: {report:?}");
        eprintln!("{engine}: {} schedules", report.schedules);
    }
}
