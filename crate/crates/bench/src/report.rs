//! CSV and gnuplot data output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dumbolab_core::htm::AbortCode;
use dumbolab_core::Bucket;
use thiserror::Error;

use crate::runner::BenchResult;
use crate::synthetic::ReplayRun;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("no records to report")]
    Empty,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

/// Column names of the benchmark CSV.
pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = ["engine", "threads", "mix", "commits_per_s"].map(String::from).into();
    h.extend(AbortCode::ALL.iter().map(|c| format!("abort_rate_{}", c.name())));
    h.push("sgl_rate".into());
    h.extend(Bucket::ALL.iter().map(|b| format!("{}_ns", b.name())));
    h
}

/// One CSV row; floats use fixed precision so equal runs give equal bytes.
pub fn csv_row(r: &BenchResult) -> Vec<String> {
    let mut row = vec![r.engine.clone(), r.threads.to_string(), r.mix.clone(), format!("{:.1}", r.commits_per_sec())];
    row.extend(AbortCode::ALL.iter().map(|&c| format!("{:.6}", r.metrics.abort_rate(c))));
    row.push(format!("{:.6}", r.metrics.sgl_rate()));
    row.extend(Bucket::ALL.iter().map(|&b| format!("{:.1}", r.bucket_per_commit(b))));
    row
}

pub fn write_csv<W: std::io::Write>(out: W, results: &[BenchResult]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header())?;
    for r in results {
        w.write_record(csv_row(r))?;
    }
    w.flush().map_err(|e| ReportError::Csv(e.into()))?;
    Ok(())
}

/// The overhead buckets (everything but plain execution) in hundredths of a
/// percent of plain execution, rounded so they add up to the rounded total.
pub fn breakdown(r: &BenchResult) -> ([u64; 5], u64) {
    let plain = r.metrics.bucket(Bucket::PlainExec).max(1) as f64;
    let exact: Vec<f64> = Bucket::ALL[1..].iter().map(|&b| r.metrics.bucket(b) as f64 * 10_000.0 / plain).collect();
    let total = exact.iter().sum::<f64>().round() as u64;
    let mut parts = [0u64; 5];
    for (p, e) in parts.iter_mut().zip(&exact) {
        *p = e.floor() as u64;
    }
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut missing = total.saturating_sub(parts.iter().sum());
    for i in order.into_iter().cycle() {
        if missing == 0 {
            break;
        }
        parts[i] += 1;
        missing -= 1;
    }
    (parts, total)
}

fn hundredths(x: u64) -> String {
    format!("{}.{:02}", x / 100, x % 100)
}

/// Gnuplot data: per mix, throughput against thread count with one column
/// per engine.
pub fn throughput_dat(results: &[BenchResult]) -> String {
    let mut by_mix: BTreeMap<&str, BTreeMap<usize, BTreeMap<&str, f64>>> = BTreeMap::new();
    let mut engines: Vec<&str> = Vec::new();
    for r in results {
        if !engines.contains(&r.engine.as_str()) {
            engines.push(&r.engine);
        }
        by_mix.entry(&r.mix).or_default().entry(r.threads).or_default().insert(&r.engine, r.commits_per_sec());
    }
    let mut s = String::new();
    for (mix, rows) in by_mix {
        let _ = writeln!(s, "# mix {mix}\n# threads {}", engines.join(" "));
        for (t, cells) in rows {
            let _ = write!(s, "{t}");
            for e in &engines {
                match cells.get(e) {
                    Some(v) => {
                        let _ = write!(s, " {v:.1}");
                    }
                    None => s.push_str(" NaN"),
                }
            }
            s.push('\n');
        }
        s.push_str("\n\n");
    }
    s
}

/// Gnuplot data for stacked overhead bars: one row per engine and thread
/// count, overheads in percent of plain execution.
pub fn breakdown_dat(results: &[BenchResult]) -> String {
    let mut s = String::from("# mix engine threads");
    for b in &Bucket::ALL[1..] {
        let _ = write!(s, " {}", b.name());
    }
    s.push_str(" total\n");
    for r in results {
        let (parts, total) = breakdown(r);
        let _ = write!(s, "{} {} {}", r.mix, r.engine, r.threads);
        for p in parts {
            let _ = write!(s, " {}", hundredths(p));
        }
        let _ = writeln!(s, " {}", hundredths(total));
    }
    s
}

/// Writes `results.csv` into `dir`, plus gnuplot data files when asked.
pub fn emit_report(results: &[BenchResult], dir: &Path, gnuplot: bool) -> Result<Vec<PathBuf>, ReportError> {
    if results.is_empty() {
        return Err(ReportError::Empty);
    }
    fs::create_dir_all(dir).map_err(io(dir))?;
    let csv_path = dir.join("results.csv");
    let f = fs::File::create(&csv_path).map_err(io(&csv_path))?;
    write_csv(f, results)?;
    let mut out = vec![csv_path];
    if gnuplot {
        for (name, body) in [("throughput.dat", throughput_dat(results)), ("breakdown.dat", breakdown_dat(results))] {
            let p = dir.join(name);
            fs::write(&p, body).map_err(io(&p))?;
            out.push(p);
        }
    }
    Ok(out)
}

/// One replay-bench measurement.
#[derive(Debug, Clone)]
pub struct ReplayRow {
    pub threads: usize,
    pub txs: usize,
    pub marker: ReplayRun,
    pub scan: ReplayRun,
}

pub fn replay_csv(rows: &[ReplayRow]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "threads",
        "txs",
        "marker_cost_per_tx",
        "scan_cost_per_tx",
        "marker_ns_per_tx",
        "scan_ns_per_tx",
    ])?;
    for r in rows {
        w.write_record([
            r.threads.to_string(),
            r.txs.to_string(),
            format!("{:.3}", r.marker.cost_per_tx()),
            format!("{:.3}", r.scan.cost_per_tx()),
            format!("{:.1}", r.marker.ns_per_tx()),
            format!("{:.1}", r.scan.ns_per_tx()),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
