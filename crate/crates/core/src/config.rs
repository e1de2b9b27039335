//! Simulator configuration and its `key = value` text form.

use std::fmt;

use crate::error::ConfigError;
use crate::htm::{suspend_pair_cost, CapacityConfig, VictimPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EngineKind {
    Dumbo,
    Spht,
    NaiveCombo,
    HtmSgl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Isolation {
    Si,
    Opacity,
}

/// An engine as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Engine {
    pub kind: EngineKind,
    pub isolation: Isolation,
}

impl Engine {
    pub const DUMBO_SI: Engine = Engine { kind: EngineKind::Dumbo, isolation: Isolation::Si };
    pub const DUMBO_OPA: Engine = Engine { kind: EngineKind::Dumbo, isolation: Isolation::Opacity };
    pub const SPHT: Engine = Engine { kind: EngineKind::Spht, isolation: Isolation::Opacity };
    pub const NAIVE_COMBO: Engine = Engine { kind: EngineKind::NaiveCombo, isolation: Isolation::Si };
    pub const HTM_SGL: Engine = Engine { kind: EngineKind::HtmSgl, isolation: Isolation::Opacity };

    pub const ALL: [Engine; 5] = [Self::DUMBO_SI, Self::DUMBO_OPA, Self::SPHT, Self::NAIVE_COMBO, Self::HTM_SGL];

    pub fn name(&self) -> &'static str {
        match (self.kind, self.isolation) {
            (EngineKind::Dumbo, Isolation::Si) => "dumbo-si",
            (EngineKind::Dumbo, Isolation::Opacity) => "dumbo-opa",
            (EngineKind::Spht, _) => "spht",
            (EngineKind::NaiveCombo, _) => "naive-combo",
            (EngineKind::HtmSgl, _) => "htm-sgl",
        }
    }

    pub fn parse(s: &str) -> Option<Engine> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    /// Whether the engine persists anything at all.
    pub fn is_durable(&self) -> bool {
        self.kind != EngineKind::HtmSgl
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonDurableStamp {
    /// Timestamp read when commit is invoked, before the isolation wait.
    Commit,
    /// Timestamp read after the isolation wait, right before HTM commit.
    PostWait,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeModeCfg {
    Deterministic,
    Virtual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmConfig {
    pub line_size: u64,
    pub flush_latency_ns: u64,
    pub heap_bytes: u64,
    pub log_bytes: u64,
    pub marker_slots: u64,
    pub clock_skew_ns: u64,
}

impl Default for PmConfig {
    fn default() -> Self {
        Self {
            line_size: 128,
            flush_latency_ns: 310,
            heap_bytes: 128 << 20,
            log_bytes: 128 << 20,
            marker_slots: 1024,
            clock_skew_ns: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HtmConfig {
    pub capacity: CapacityConfig,
    pub max_retries: u32,
    pub victim_policy: VictimPolicy,
    pub suspend_cost_ns_1t: u64,
    pub suspend_cost_ns_64t: u64,
}

impl Default for HtmConfig {
    fn default() -> Self {
        Self {
            capacity: CapacityConfig::default(),
            max_retries: 10,
            victim_policy: VictimPolicy::RequesterWins,
            suspend_cost_ns_1t: 350,
            suspend_cost_ns_64t: 1500,
        }
    }
}

/// Per-operation virtual-time costs (nanoseconds).
#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    pub read_ns: u64,
    pub write_ns: u64,
    pub begin_ns: u64,
    pub commit_ns: u64,
    pub atomic_ns: u64,
    pub spin_ns: u64,
    pub publish_ns: u64,
    pub copy_entry_ns: u64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            read_ns: 2,
            write_ns: 4,
            begin_ns: 20,
            commit_ns: 20,
            atomic_ns: 30,
            spin_ns: 20,
            publish_ns: 5,
            copy_entry_ns: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub engine: Engine,
    pub threads: usize,
    pub isolation_wait: bool,
    pub nondurable_stamp: NonDurableStamp,
    pub time_mode: TimeModeCfg,
    pub tick: u64,
    pub seed: u64,
    pub quantum_ops: usize,
    pub background_replay: bool,
    pub record_history: bool,
    pub costs: CostConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            engine: Engine::DUMBO_SI,
            threads: 4,
            isolation_wait: true,
            nondurable_stamp: NonDurableStamp::Commit,
            time_mode: TimeModeCfg::Virtual,
            tick: 1,
            seed: 1,
            quantum_ops: 64,
            background_replay: false,
            record_history: true,
            costs: CostConfig::default(),
        }
    }
}

/// Full configuration of one simulated run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub pm: PmConfig,
    pub htm: HtmConfig,
    pub sim: SimConfig,
}

fn parse_u64(key: &str, v: &str) -> Result<u64, ConfigError> {
    v.trim().replace('_', "").parse::<u64>().map_err(|e| ConfigError::bad(key, v, e.to_string()))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::bad(key, v, "expected a boolean")),
    }
}

fn positive(key: &str, v: &str) -> Result<u64, ConfigError> {
    let x = parse_u64(key, v)?;
    if x == 0 {
        return Err(ConfigError::bad(key, v, "must be positive"));
    }
    Ok(x)
}

impl Config {
    /// Keys understood by [`Config::set`].
    pub const KEYS: &'static [&'static str] = &[
        "engine",
        "pm.line_size",
        "pm.flush_latency_ns",
        "pm.heap_mb",
        "pm.log_mb",
        "pm.heap_kb",
        "pm.log_kb",
        "pm.marker_slots",
        "pm.clock_skew_ns",
        "htm.read_lines",
        "htm.write_lines",
        "htm.smt_halved",
        "htm.max_retries",
        "htm.victim_policy",
        "htm.suspend_cost_ns_1t",
        "htm.suspend_cost_ns_64t",
        "dumbo.isolation",
        "dumbo.threads",
        "dumbo.marker_slots",
        "dumbo.isolation_wait",
        "dumbo.nondurable_stamp",
        "sim.time_mode",
        "sim.tick",
        "sim.seed",
        "sim.quantum_ops",
        "sim.background_replay",
        "sim.record_history",
        "sim.read_ns",
        "sim.write_ns",
        "sim.begin_ns",
        "sim.commit_ns",
        "sim.atomic_ns",
        "sim.spin_ns",
        "sim.publish_ns",
        "sim.copy_entry_ns",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "engine" => {
                self.sim.engine = Engine::parse(v).ok_or_else(|| {
                    ConfigError::bad(key, v, "expected dumbo-si, dumbo-opa, spht, naive-combo or htm-sgl")
                })?
            }
            "pm.line_size" => {
                let x = positive(key, v)?;
                if x % 32 != 0 {
                    return Err(ConfigError::bad(key, v, "must be a multiple of 32"));
                }
                self.pm.line_size = x;
            }
            "pm.flush_latency_ns" => self.pm.flush_latency_ns = parse_u64(key, v)?,
            "pm.heap_mb" => self.pm.heap_bytes = positive(key, v)? << 20,
            "pm.log_mb" => self.pm.log_bytes = positive(key, v)? << 20,
            "pm.heap_kb" => self.pm.heap_bytes = positive(key, v)? << 10,
            "pm.log_kb" => self.pm.log_bytes = positive(key, v)? << 10,
            "pm.marker_slots" | "dumbo.marker_slots" => self.pm.marker_slots = positive(key, v)?,
            "pm.clock_skew_ns" => self.pm.clock_skew_ns = parse_u64(key, v)?,
            "htm.read_lines" => self.htm.capacity.read_lines = positive(key, v)? as usize,
            "htm.write_lines" => self.htm.capacity.write_lines = positive(key, v)? as usize,
            "htm.smt_halved" => self.htm.capacity.smt_halved = parse_bool(key, v)?,
            "htm.max_retries" => self.htm.max_retries = parse_u64(key, v)? as u32,
            "htm.victim_policy" => {
                self.htm.victim_policy = match v {
                    "requester-wins" => VictimPolicy::RequesterWins,
                    "responder-wins" => VictimPolicy::ResponderWins,
                    _ => return Err(ConfigError::bad(key, v, "expected requester-wins or responder-wins")),
                }
            }
            "htm.suspend_cost_ns_1t" => self.htm.suspend_cost_ns_1t = parse_u64(key, v)?,
            "htm.suspend_cost_ns_64t" => self.htm.suspend_cost_ns_64t = parse_u64(key, v)?,
            "dumbo.isolation" => {
                let iso = match v {
                    "si" => Isolation::Si,
                    "opacity" | "opa" => Isolation::Opacity,
                    _ => return Err(ConfigError::bad(key, v, "expected si or opacity")),
                };
                if self.sim.engine.kind == EngineKind::Dumbo {
                    self.sim.engine.isolation = iso;
                }
            }
            "dumbo.threads" => {
                let t = positive(key, v)? as usize;
                if t > crate::htm::MAX_THREADS {
                    return Err(ConfigError::bad(key, v, "at most 64 threads"));
                }
                self.sim.threads = t;
            }
            "dumbo.isolation_wait" => self.sim.isolation_wait = parse_bool(key, v)?,
            "dumbo.nondurable_stamp" => {
                self.sim.nondurable_stamp = match v {
                    "commit" => NonDurableStamp::Commit,
                    "post-wait" => NonDurableStamp::PostWait,
                    _ => return Err(ConfigError::bad(key, v, "expected commit or post-wait")),
                }
            }
            "sim.time_mode" => {
                self.sim.time_mode = match v {
                    "deterministic" => TimeModeCfg::Deterministic,
                    "virtual" => TimeModeCfg::Virtual,
                    _ => return Err(ConfigError::bad(key, v, "expected deterministic or virtual")),
                }
            }
            "sim.tick" => self.sim.tick = positive(key, v)?,
            "sim.seed" => self.sim.seed = parse_u64(key, v)?,
            "sim.quantum_ops" => self.sim.quantum_ops = positive(key, v)? as usize,
            "sim.background_replay" => self.sim.background_replay = parse_bool(key, v)?,
            "sim.record_history" => self.sim.record_history = parse_bool(key, v)?,
            "sim.read_ns" => self.sim.costs.read_ns = parse_u64(key, v)?,
            "sim.write_ns" => self.sim.costs.write_ns = parse_u64(key, v)?,
            "sim.begin_ns" => self.sim.costs.begin_ns = parse_u64(key, v)?,
            "sim.commit_ns" => self.sim.costs.commit_ns = parse_u64(key, v)?,
            "sim.atomic_ns" => self.sim.costs.atomic_ns = parse_u64(key, v)?,
            "sim.spin_ns" => self.sim.costs.spin_ns = positive(key, v)?,
            "sim.publish_ns" => self.sim.costs.publish_ns = parse_u64(key, v)?,
            "sim.copy_entry_ns" => self.sim.costs.copy_entry_ns = parse_u64(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Current value of a key, formatted as [`Config::set`] accepts it.
    pub fn get(&self, key: &str) -> Option<String> {
        let b = |x: bool| x.to_string();
        Some(match key {
            "engine" => self.sim.engine.name().to_string(),
            "pm.line_size" => self.pm.line_size.to_string(),
            "pm.flush_latency_ns" => self.pm.flush_latency_ns.to_string(),
            "pm.heap_mb" => (self.pm.heap_bytes >> 20).to_string(),
            "pm.log_mb" => (self.pm.log_bytes >> 20).to_string(),
            "pm.heap_kb" => (self.pm.heap_bytes >> 10).to_string(),
            "pm.log_kb" => (self.pm.log_bytes >> 10).to_string(),
            "pm.marker_slots" | "dumbo.marker_slots" => self.pm.marker_slots.to_string(),
            "pm.clock_skew_ns" => self.pm.clock_skew_ns.to_string(),
            "htm.read_lines" => self.htm.capacity.read_lines.to_string(),
            "htm.write_lines" => self.htm.capacity.write_lines.to_string(),
            "htm.smt_halved" => b(self.htm.capacity.smt_halved),
            "htm.max_retries" => self.htm.max_retries.to_string(),
            "htm.victim_policy" => match self.htm.victim_policy {
                VictimPolicy::RequesterWins => "requester-wins".into(),
                VictimPolicy::ResponderWins => "responder-wins".into(),
            },
            "htm.suspend_cost_ns_1t" => self.htm.suspend_cost_ns_1t.to_string(),
            "htm.suspend_cost_ns_64t" => self.htm.suspend_cost_ns_64t.to_string(),
            "dumbo.isolation" => match self.sim.engine.isolation {
                Isolation::Si => "si".into(),
                Isolation::Opacity => "opacity".into(),
            },
            "dumbo.threads" => self.sim.threads.to_string(),
            "dumbo.isolation_wait" => b(self.sim.isolation_wait),
            "dumbo.nondurable_stamp" => match self.sim.nondurable_stamp {
                NonDurableStamp::Commit => "commit".into(),
                NonDurableStamp::PostWait => "post-wait".into(),
            },
            "sim.time_mode" => match self.sim.time_mode {
                TimeModeCfg::Deterministic => "deterministic".into(),
                TimeModeCfg::Virtual => "virtual".into(),
            },
            "sim.tick" => self.sim.tick.to_string(),
            "sim.seed" => self.sim.seed.to_string(),
            "sim.quantum_ops" => self.sim.quantum_ops.to_string(),
            "sim.background_replay" => b(self.sim.background_replay),
            "sim.record_history" => b(self.sim.record_history),
            "sim.read_ns" => self.sim.costs.read_ns.to_string(),
            "sim.write_ns" => self.sim.costs.write_ns.to_string(),
            "sim.begin_ns" => self.sim.costs.begin_ns.to_string(),
            "sim.commit_ns" => self.sim.costs.commit_ns.to_string(),
            "sim.atomic_ns" => self.sim.costs.atomic_ns.to_string(),
            "sim.spin_ns" => self.sim.costs.spin_ns.to_string(),
            "sim.publish_ns" => self.sim.costs.publish_ns.to_string(),
            "sim.copy_entry_ns" => self.sim.costs.copy_entry_ns.to_string(),
            _ => return None,
        })
    }

    /// Suspend+resume pair cost for the configured thread count.
    pub fn suspend_pair_ns(&self) -> u64 {
        suspend_pair_cost(self.htm.suspend_cost_ns_1t, self.htm.suspend_cost_ns_64t, self.sim.threads)
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_lines(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Environment variable name overriding `key`.
pub fn env_name(prefix: &str, key: &str) -> String {
    format!("{prefix}{}", key.to_ascii_uppercase().replace('.', "_"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::default();
        assert_eq!(c.pm.flush_latency_ns, 310);
        assert_eq!(c.pm.line_size, 128);
        assert_eq!(c.pm.heap_bytes, 128 << 20);
        assert_eq!(c.htm.max_retries, 10);
        assert_eq!(c.htm.capacity.read_lines, 4096);
        assert_eq!(c.htm.capacity.write_lines, 64);
        assert_eq!(c.pm.marker_slots, 1024);
    }

    #[test]
    fn every_key_roundtrips() {
        let mut c = Config::default();
        for k in Config::KEYS {
            let v = c.get(k).unwrap_or_else(|| panic!("no getter for {k}"));
            c.set(k, &v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
        assert_eq!(c, Config::default());
    }

    #[test]
    fn engine_and_isolation() {
        let mut c = Config::default();
        c.set("engine", "dumbo-si").unwrap();
        c.set("dumbo.isolation", "opacity").unwrap();
        assert_eq!(c.sim.engine, Engine::DUMBO_OPA);
        c.set("engine", "spht").unwrap();
        c.set("dumbo.isolation", "si").unwrap();
        assert_eq!(c.sim.engine, Engine::SPHT);
        assert!(c.set("engine", "pisces").is_err());
    }

    #[test]
    fn rejects_unknown_and_bad() {
        let mut c = Config::default();
        assert_eq!(c.set("pm.nope", "1"), Err(ConfigError::UnknownKey("pm.nope".into())));
        assert!(c.set("pm.line_size", "100").is_err());
        assert!(c.set("htm.smt_halved", "maybe").is_err());
        assert!(c.set("dumbo.threads", "65").is_err());
    }

    #[test]
    fn parses_lines() {
        let kv = parse_lines("# c\nengine = spht\n\n pm.heap_mb=4 # tail\n").unwrap();
        assert_eq!(kv, vec![("engine".into(), "spht".into()), ("pm.heap_mb".into(), "4".into())]);
        assert!(parse_lines("oops").is_err());
    }

    #[test]
    fn env_names() {
        assert_eq!(env_name("DUMBOLAB_", "pm.flush_latency_ns"), "DUMBOLAB_PM_FLUSH_LATENCY_NS");
    }
}
