//! Run configuration from defaults, a `key = value` file, `DUMBOLAB_*`
//! environment variables and command-line overrides, in that order.

use std::path::Path;

use dumbolab_core::config::{env_name, parse_lines, Config};
use dumbolab_core::error::ConfigError;
use thiserror::Error;

use crate::runner::{RunConfig, RunLength};
use crate::workload::MixError;

pub const ENV_PREFIX: &str = "DUMBOLAB_";

/// Benchmark keys on top of [`Config::KEYS`].
pub const BENCH_KEYS: &[&str] = &[
    "bench.mix",
    "bench.scale",
    "bench.disjoint",
    "bench.warehouses",
    "bench.duration_ms",
    "bench.txs",
    "bench.runs",
];

#[derive(Debug, Error)]
pub enum SettingsError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mix(#[from] MixError),
    #[error("bad value `{value}` for `{key}`")]
    Value { key: String, value: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub fn all_keys() -> impl Iterator<Item = &'static str> {
    Config::KEYS.iter().chain(BENCH_KEYS).copied()
}

fn bad(key: &str, value: &str) -> SettingsError {
    SettingsError::Value { key: key.into(), value: value.into() }
}

/// Applies one `key = value` pair.
pub fn set(rc: &mut RunConfig, key: &str, value: &str) -> Result<(), SettingsError> {
    let v = value.trim();
    let num = |v: &str| v.replace('_', "").parse::<u64>().map_err(|_| bad(key, v));
    match key {
        "bench.mix" => rc.mix = v.parse()?,
        "bench.scale" => rc.scale = v.parse::<f64>().ok().filter(|s| *s >= 0.0 && s.is_finite()).ok_or_else(|| bad(key, v))?,
        "bench.disjoint" => {
            rc.disjoint = match v {
                "true" | "1" | "yes" | "on" => true,
                "false" | "0" | "no" | "off" => false,
                _ => return Err(bad(key, v)),
            }
        }
        "bench.warehouses" => rc.warehouses = num(v)? as usize,
        "bench.duration_ms" => rc.length = RunLength::Duration(num(v)?.checked_mul(1_000_000).ok_or_else(|| bad(key, v))?),
        "bench.txs" => rc.length = RunLength::Txs(num(v)?),
        "bench.runs" => rc.runs = num(v).ok().filter(|r| *r > 0).ok_or_else(|| bad(key, v))? as u32,
        _ => rc.sim.set(key, v)?,
    }
    Ok(())
}

pub fn get(rc: &RunConfig, key: &str) -> Option<String> {
    Some(match key {
        "bench.mix" => rc.mix.name.clone(),
        "bench.scale" => rc.scale.to_string(),
        "bench.disjoint" => rc.disjoint.to_string(),
        "bench.warehouses" => rc.warehouses.to_string(),
        "bench.duration_ms" => match rc.length {
            RunLength::Duration(ns) => (ns / 1_000_000).to_string(),
            RunLength::Txs(_) => "none".into(),
        },
        "bench.txs" => match rc.length {
            RunLength::Txs(n) => n.to_string(),
            RunLength::Duration(_) => "none".into(),
        },
        "bench.runs" => rc.runs.to_string(),
        _ => return rc.sim.get(key),
    })
}

/// Layers a config file, the environment (through `env`) and explicit
/// overrides over the defaults.
pub fn load(
    file: Option<&Path>,
    env: impl Fn(&str) -> Option<String>,
    overrides: &[(String, String)],
) -> Result<RunConfig, SettingsError> {
    let mut rc = RunConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|source| SettingsError::Io { path: path.display().to_string(), source })?;
        for (k, v) in parse_lines(&text)? {
            set(&mut rc, &k, &v)?;
        }
    }
    for key in all_keys() {
        if let Some(v) = env(&env_name(ENV_PREFIX, key)) {
            set(&mut rc, key, &v)?;
        }
    }
    for (k, v) in overrides {
        set(&mut rc, k, v)?;
    }
    Ok(rc)
}

/// Every key with its current value, in a form [`load`] reads back.
pub fn render(rc: &RunConfig) -> String {
    let mut s = String::new();
    for key in all_keys() {
        if let Some(v) = get(rc, key) {
            if v != "none" {
                s.push_str(&format!("{key} = {v}\n"));
            }
        }
    }
    s
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dumbolab_core::Engine;

    #[test]
    fn layers_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.conf");
        std::fs::write(&f, "# comment\nengine = spht\ndumbo.threads = 8\nbench.mix = payment\n").unwrap();
        let env = |k: &str| match k {
            "DUMBOLAB_DUMBO_THREADS" => Some("16".to_string()),
            "DUMBOLAB_PM_FLUSH_LATENCY_NS" => Some("500".to_string()),
            _ => None,
        };
        let rc = load(Some(&f), env, &[("dumbo.threads".into(), "2".into())]).unwrap();
        assert_eq!(rc.sim.sim.engine, Engine::SPHT);
        assert_eq!(rc.sim.pm.flush_latency_ns, 500);
        assert_eq!(rc.threads(), 2);
        assert_eq!(rc.mix.name, "payment");
    }

    #[test]
    fn defaults_are_three_runs_of_five_seconds() {
        let rc = load(None, |_| None, &[]).unwrap();
        assert_eq!(rc.runs, 3);
        assert_eq!(rc.length, RunLength::Duration(5_000_000_000));
        assert!(!rc.sim.sim.background_replay);
    }

    #[test]
    fn render_round_trips() {
        let mut rc = RunConfig::default();
        set(&mut rc, "engine", "dumbo-opa").unwrap();
        set(&mut rc, "bench.txs", "40").unwrap();
        set(&mut rc, "bench.mix", "orderstatus=95,payment=5").unwrap();
        set(&mut rc, "htm.read_lines", "128").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c");
        std::fs::write(&f, render(&rc)).unwrap();
        let back = load(Some(&f), |_| None, &[]).unwrap();
        assert_eq!(render(&back), render(&rc));
        assert_eq!(back.sim, rc.sim);
        assert_eq!(back.length, RunLength::Txs(40));
    }

    #[test]
    fn errors_name_the_key() {
        let mut rc = RunConfig::default();
        assert!(set(&mut rc, "bench.runs", "0").unwrap_err().to_string().contains("bench.runs"));
        assert!(set(&mut rc, "no.such", "1").is_err());
        assert!(matches!(set(&mut rc, "bench.mix", "x=1"), Err(SettingsError::Mix(_))));
    }
}
