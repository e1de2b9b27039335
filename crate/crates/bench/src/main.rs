use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dumbolab_bench::report::{self, ReplayRow};
use dumbolab_bench::settings::{self, parse_override};
use dumbolab_bench::synthetic::{gen_synthetic_replay, measure_replay, SyntheticSpec};
use dumbolab_bench::{run_sweep, Mix, RunConfig};
use dumbolab_check::litmus::{builtin_corpus_dir, load_corpus};
use dumbolab_check::sweep::{crash_sweep, explore_config, explore_litmus, random_programs};
use dumbolab_core::explore::ExploreLimits;
use dumbolab_core::image::{read_image, write_image};
use dumbolab_core::replay::recover_image;
use dumbolab_core::{Engine, Exec};

#[derive(Parser)]
#[command(name = "dumbolab", version, about = "Durable HTM transaction engines on a simulated persistent-memory machine")]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set pm.flush_latency_ns=500`.
    #[arg(long = "set", value_parser = parse_override)]
    set: Vec<(String, String)>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        Ok(settings::load(self.config.as_deref(), |k| std::env::var(k).ok(), &self.set)?)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run TPC-C-lite benchmark cells and write CSV (and gnuplot data).
    Bench {
        #[command(flatten)]
        config: ConfigArgs,
        /// Engines to compare; defaults to the configured one.
        #[arg(long, value_delimiter = ',')]
        engines: Vec<String>,
        /// Thread counts; defaults to the configured one.
        #[arg(long, value_delimiter = ',')]
        threads: Vec<usize>,
        /// Mixes, separated by `;`; defaults to the configured one.
        #[arg(long, value_delimiter = ';')]
        mix: Vec<String>,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
        #[arg(long)]
        gnuplot: bool,
    },
    /// Explore the litmus corpus exhaustively, or sweep crash images.
    Check {
        #[arg(long, default_value = "dumbo-si")]
        engine: String,
        /// Directory of `.lit` files; defaults to the bundled corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Run the crash sweep instead of the litmus corpus.
        #[arg(long)]
        crash_sweep: bool,
        #[arg(long, default_value_t = 2_000_000)]
        max_schedules: u64,
        /// Seeds for the crash sweep.
        #[arg(long, default_value_t = 12)]
        seeds: u64,
    },
    /// Replay prefilled logs with both replayers.
    ReplayBench {
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        threads: Vec<usize>,
        /// Writes per transaction, `lo..hi` inclusive.
        #[arg(long, default_value = "1..20")]
        writes: String,
        #[arg(long, default_value_t = 128)]
        log_mb: u64,
        #[arg(long, default_value_t = 128)]
        heap_mb: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write `replay.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recover a crash image directory and report what was replayed.
    Recover {
        image_dir: PathBuf,
        /// Write the recovered image here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration.
    PrintConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn engine(name: &str) -> Result<Engine> {
    Engine::parse(name).with_context(|| format!("unknown engine `{name}`"))
}

fn parse_writes(s: &str) -> Result<std::ops::RangeInclusive<u64>> {
    let (lo, hi) = s.split_once("..").context("expected lo..hi")?;
    let (lo, hi): (u64, u64) = (lo.trim().parse()?, hi.trim_start_matches('=').trim().parse()?);
    if lo == 0 || hi < lo || hi > 255 {
        bail!("writes must satisfy 1 <= lo <= hi <= 255");
    }
    Ok(lo..=hi)
}

fn bench(
    base: RunConfig,
    engines: Vec<String>,
    threads: Vec<usize>,
    mixes: Vec<String>,
    out: PathBuf,
    gnuplot: bool,
    exec: Exec,
) -> Result<()> {
    let engines = if engines.is_empty() { vec![base.sim.sim.engine] } else { engines.iter().map(|e| engine(e)).collect::<Result<_>>()? };
    let threads = if threads.is_empty() { vec![base.threads()] } else { threads };
    let mixes: Vec<Mix> =
        if mixes.is_empty() { vec![base.mix.clone()] } else { mixes.iter().map(|m| m.parse()).collect::<Result<_, _>>()? };
    let mut cells = Vec::new();
    for m in &mixes {
        for &e in &engines {
            for &t in &threads {
                let mut rc = base.clone();
                rc.sim.sim.engine = e;
                rc.sim.sim.threads = t;
                rc.mix = m.clone();
                cells.push(rc);
            }
        }
    }
    let results: Vec<_> = run_sweep(cells, exec).into_iter().collect::<Result<_, _>>()?;
    for r in &results {
        println!(
            "{:<12} {:>3} threads {:<18} {:>12.0} commits/s  sgl {:>5.1}%  capacity aborts {}",
            r.engine,
            r.threads,
            r.mix,
            r.commits_per_sec(),
            100.0 * r.metrics.sgl_rate(),
            r.capacity_aborts()
        );
    }
    for f in report::emit_report(&results, &out, gnuplot)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn check(engine_name: &str, corpus: Option<PathBuf>, crash: bool, max_schedules: u64, seeds: u64, exec: Exec) -> Result<bool> {
    let e = engine(engine_name)?;
    if crash {
        let mut cfg = explore_config(e, 3, 16 * 128);
        cfg.pm.log_bytes = 3 * 8 * 128;
        let seeds: Vec<u64> = (0..seeds).collect();
        let o = crash_sweep(&cfg, |s| random_programs(s, 3, 5, 16, 3), &seeds, exec);
        println!(
            "{e}: {} runs, {} crash points, {} images, {} failed, {} lost an acknowledged transaction",
            o.runs, o.crash_points, o.images, o.failed, o.lost_acked
        );
        if let Some(f) = &o.first_failure {
            println!("  first failure: {f}");
        }
        return Ok(o.failed == 0);
    }
    let dir = corpus.unwrap_or_else(builtin_corpus_dir);
    let corpus = load_corpus(&dir)?;
    let limits = ExploreLimits { max_schedules, ..Default::default() };
    let mut ok = true;
    for l in &corpus {
        let cfg = explore_config(e, l.threads.len(), 0);
        let t0 = Instant::now();
        let o = explore_litmus(l, &cfg, limits, exec);
        let pass = o.clean() && o.explore.exhaustive();
        ok &= pass;
        println!(
            "{} {:<24} {:>9} schedules {:>9} merged  p1 {:>6}  iso {:>6}  ordering {:>4}{}  {:.1}s",
            if pass { "ok  " } else { "FAIL" },
            l.name,
            o.explore.schedules,
            o.explore.merged,
            o.property1,
            o.isolation,
            o.ordering,
            if o.explore.exhaustive() { "" } else { "  (truncated)" },
            t0.elapsed().as_secs_f64()
        );
        if let Some(f) = &o.first_failure {
            println!("     {f}");
        }
    }
    Ok(ok)
}

fn replay_bench(threads: Vec<usize>, writes: &str, log_mb: u64, heap_mb: u64, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let writes = parse_writes(writes)?;
    let mut rows = Vec::new();
    for t in threads {
        let spec = SyntheticSpec { heap_bytes: heap_mb << 20, log_bytes: log_mb << 20, writes: writes.clone(), ..SyntheticSpec::new(t, seed) };
        let s = gen_synthetic_replay(&spec);
        let (marker, scan) = measure_replay(&s)?;
        println!(
            "{t:>3} threads {:>8} txs  marker array {:>7.2} accesses/tx {:>8.1} ns/tx  scan {:>7.2} accesses/tx {:>8.1} ns/tx",
            s.txs(),
            marker.cost_per_tx(),
            marker.ns_per_tx(),
            scan.cost_per_tx(),
            scan.ns_per_tx()
        );
        rows.push(ReplayRow { threads: t, txs: s.txs(), marker, scan });
    }
    let csv = report::replay_csv(&rows)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        let p = dir.join("replay.csv");
        std::fs::write(&p, csv)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn recover(dir: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let img = read_image(&dir)?;
    let (rec, rep) = recover_image(&img)?;
    println!(
        "{}: {} threads, {} format, replayed {} transactions ({} abort markers, {} holes), cost {} PM accesses",
        dir.display(),
        img.layout.threads,
        img.layout.log_format.name(),
        rep.replayed.len(),
        rep.aborts.len(),
        rep.unmarked.len(),
        rep.cost.total()
    );
    if let Some(o) = out {
        write_image(&o, &rec)?;
        println!("wrote {}", o.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match cli.cmd {
        Cmd::Bench { config, engines, threads, mix, out, gnuplot } => bench(config.load()?, engines, threads, mix, out, gnuplot, exec),
        Cmd::Check { engine, corpus, crash_sweep, max_schedules, seeds } => {
            if !check(&engine, corpus, crash_sweep, max_schedules, seeds, exec)? {
                std::process::exit(1);
            }
            Ok(())
        }
        Cmd::ReplayBench { threads, writes, log_mb, heap_mb, seed, out } => replay_bench(threads, &writes, log_mb, heap_mb, seed, out),
        Cmd::Recover { image_dir, out } => recover(image_dir, out),
        Cmd::PrintConfig { config } => {
            print!("{}", settings::render(&config.load()?));
            Ok(())
        }
    }
}
