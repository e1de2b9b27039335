use dumbolab_bench::report::write_csv;
use dumbolab_bench::{gen_synthetic_replay, run_benchmark, Mix, RunConfig, RunLength, SyntheticSpec, TpccLite, TxType};
use dumbolab_core::config::TimeModeCfg;
use dumbolab_core::image::write_image;
use dumbolab_core::{Engine, Exec};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn type_counts(mix: &Mix, seed: u64, n: usize) -> [usize; 5] {
    let w = TpccLite::new(mix.clone(), 1.0, seed, 64 << 20, 128);
    let mut counts = [0; 5];
    let mut streams: Vec<_> = (0..4).map(|t| w.stream(t)).collect();
    for i in 0..n {
        counts[streams[i % 4].next_type() as usize] += 1;
    }
    counts
}

#[test]
fn realized_mix_is_within_two_percent() {
    for mix in [Mix::read_dominated(), Mix::update_dominated(), "payment=50,neworder=30,orderstatus=20".parse().unwrap()] {
        let n = 20_000;
        let counts = type_counts(&mix, 9, n);
        for (t, (&c, &p)) in TxType::ALL.iter().zip(counts.iter().zip(&mix.percent)) {
            let got = 100.0 * c as f64 / n as f64;
            assert!((got - p).abs() <= 2.0, "{} {t}: {got:.2}% vs {p}%", mix.name);
        }
    }
}

#[test]
fn synthetic_write_counts_are_uniform() {
    let spec = SyntheticSpec { heap_bytes: 8 << 20, log_bytes: 32 << 20, ..SyntheticSpec::new(2, 5) };
    let s = gen_synthetic_replay(&spec);
    assert!(s.write_counts.len() >= 100_000, "{}", s.write_counts.len());
    let mut hist = [0u64; 20];
    for &k in &s.write_counts[..100_000] {
        assert!((1..=20).contains(&k));
        hist[k as usize - 1] += 1;
    }
    let expected = 100_000.0 / 20.0;
    let stat: f64 = hist.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new(19.0).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi-square {stat:.2} >= {critical:.2}");
}

fn deterministic_cell(seed: u64) -> RunConfig {
    let mut rc = RunConfig { mix: Mix::update_dominated(), scale: 0.05, length: RunLength::Txs(15), runs: 2, ..Default::default() };
    rc.sim.sim.engine = Engine::DUMBO_SI;
    rc.sim.sim.threads = 3;
    rc.sim.sim.seed = seed;
    rc.sim.sim.time_mode = TimeModeCfg::Deterministic;
    rc
}

#[test]
fn same_seed_gives_identical_csv_bytes() {
    let csv = |seed| {
        let r = run_benchmark(&deterministic_cell(seed), Exec::Parallel).unwrap();
        let mut out = Vec::new();
        write_csv(&mut out, &[r]).unwrap();
        out
    };
    assert_eq!(csv(4), csv(4));
    assert_ne!(csv(4), csv(5));
}

#[test]
fn same_seed_gives_identical_images() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { heap_bytes: 1 << 20, log_bytes: 1 << 20, ..SyntheticSpec::new(4, 3) };
    let bytes = |name: &str| {
        let p = dir.path().join(name);
        write_image(&p, &gen_synthetic_replay(&spec).marker).unwrap();
        let mut files: Vec<_> = std::fs::read_dir(&p).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(bytes("a"), bytes("b"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metrics_are_conserved(seed in 0u64..1000, threads in 1usize..5, engine in 0usize..Engine::ALL.len()) {
        let mut rc = deterministic_cell(seed);
        rc.sim.sim.time_mode = TimeModeCfg::Virtual;
        rc.sim.sim.engine = Engine::ALL[engine];
        rc.sim.sim.threads = threads;
        rc.runs = 1;
        let r = run_benchmark(&rc, Exec::Sequential).unwrap();
        let m = &r.metrics;
        prop_assert_eq!(m.commits, threads as u64 * 15);
        prop_assert_eq!(m.commits, m.ro_commits + m.update_commits);
        prop_assert!(m.buckets.iter().sum::<u64>() <= threads as u64 * m.elapsed_ns);
    }

    #[test]
    fn streams_depend_only_on_seed(seed: u64, thread in 0usize..8) {
        let w = TpccLite::new(Mix::read_dominated(), 0.01, seed, 16 << 20, 128);
        let (mut a, mut b) = (w.stream(thread), w.stream(thread));
        for _ in 0..20 {
            prop_assert_eq!(a.generate(), b.generate());
        }
    }
}
