//! TPC-C-lite: the five TPC-C transaction types reduced to their read and
//! write footprints over a warehouse-sharded heap.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use dumbolab_core::pm::WORD;
use dumbolab_core::{Access, TxSource, TxSpec};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TxType {
    StockLevel = 0,
    OrderStatus = 1,
    Delivery = 2,
    Payment = 3,
    NewOrder = 4,
}

impl TxType {
    pub const ALL: [TxType; 5] = [TxType::StockLevel, TxType::OrderStatus, TxType::Delivery, TxType::Payment, TxType::NewOrder];

    pub fn name(self) -> &'static str {
        match self {
            TxType::StockLevel => "stocklevel",
            TxType::OrderStatus => "orderstatus",
            TxType::Delivery => "delivery",
            TxType::Payment => "payment",
            TxType::NewOrder => "neworder",
        }
    }

    pub fn parse(s: &str) -> Option<TxType> {
        TxType::ALL.into_iter().find(|t| t.name() == s)
    }

    pub fn read_only(self) -> bool {
        matches!(self, TxType::StockLevel | TxType::OrderStatus)
    }

    /// Mean (reads, writes) of one transaction at scale 1.
    pub fn mean_footprint(self) -> (f64, f64) {
        match self {
            TxType::StockLevel => (122_000.0, 0.0),
            TxType::OrderStatus => (650.0, 0.0),
            TxType::Delivery => (86_000.0, 30.0),
            TxType::Payment => (97.0, 5.0),
            TxType::NewOrder => (7_500.0, 141.0),
        }
    }

    /// Stock-level reads touch one word per stock row, each on its own
    /// line; every other type reads consecutive words.
    fn scattered_reads(self) -> bool {
        self == TxType::StockLevel
    }

    pub fn label(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for TxType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Log-normal shape with P99 at three times the mean.
pub fn footprint_sigma() -> f64 {
    static SIGMA: OnceLock<f64> = OnceLock::new();
    *SIGMA.get_or_init(|| {
        // exp(z*s - s^2/2) = 3, smaller root.
        let z = Normal::standard().inverse_cdf(0.99);
        z - (z * z - 2.0 * 3f64.ln()).sqrt()
    })
}

/// Read and write counts of one transaction type.
#[derive(Debug, Clone, Copy)]
pub struct FootprintModel {
    pub tx_type: TxType,
    pub mean_reads: f64,
    pub mean_writes: f64,
    pub scale: f64,
}

impl FootprintModel {
    pub fn new(tx_type: TxType, scale: f64) -> Self {
        let (mean_reads, mean_writes) = tx_type.mean_footprint();
        Self { tx_type, mean_reads, mean_writes, scale }
    }

    fn count(mean: f64, scale: f64, rng: &mut impl Rng) -> usize {
        if mean == 0.0 {
            return 0;
        }
        let m = mean * scale;
        if m <= 0.0 {
            return 1;
        }
        let s = footprint_sigma();
        let d = LogNormal::new(m.ln() - s * s / 2.0, s).expect("finite log-normal parameters");
        (d.sample(rng).round() as usize).max(1)
    }

    /// Draws `(reads, writes)`.
    pub fn sample(&self, rng: &mut impl Rng) -> (usize, usize) {
        let r = Self::count(self.mean_reads, self.scale, rng);
        let w = if self.tx_type.read_only() { 0 } else { Self::count(self.mean_writes, self.scale, rng) };
        (r, w)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MixError {
    #[error("unknown mix or transaction type `{0}`")]
    Unknown(String),
    #[error("bad mix entry `{0}`")]
    Entry(String),
    #[error("mix percentages sum to {0}, not 100")]
    Sum(f64),
}

/// Percentages per [`TxType`], indexed by the type.
#[derive(Debug, Clone, PartialEq)]
pub struct Mix {
    pub name: String,
    pub percent: [f64; 5],
}

impl Mix {
    /// 85% read-only, split evenly between the two read-only types.
    pub fn read_dominated() -> Mix {
        Mix { name: "read-dominated".into(), percent: [42.5, 42.5, 5.0, 5.0, 5.0] }
    }

    /// The standard TPC-C mix.
    pub fn update_dominated() -> Mix {
        Mix { name: "update-dominated".into(), percent: [4.0, 4.0, 4.0, 43.0, 45.0] }
    }

    pub fn only(t: TxType) -> Mix {
        let mut percent = [0.0; 5];
        percent[t as usize] = 100.0;
        Mix { name: t.name().into(), percent }
    }

    /// Share of read-only transactions, in percent.
    pub fn read_only_percent(&self) -> f64 {
        TxType::ALL.iter().filter(|t| t.read_only()).map(|&t| self.percent[t as usize]).sum()
    }

    fn validate(self) -> Result<Mix, MixError> {
        let sum: f64 = self.percent.iter().sum();
        if (sum - 100.0).abs() > 1e-6 || self.percent.iter().any(|p| *p < 0.0) {
            return Err(MixError::Sum(sum));
        }
        Ok(self)
    }
}

impl FromStr for Mix {
    type Err = MixError;

    /// A preset (`read-dominated`, `update-dominated`, `standard`), a single
    /// type name, or `type=percent` pairs separated by commas.
    fn from_str(s: &str) -> Result<Mix, MixError> {
        let s = s.trim();
        match s {
            "read-dominated" => return Ok(Mix::read_dominated()),
            "update-dominated" | "standard" => return Ok(Mix::update_dominated()),
            _ => {}
        }
        if let Some(t) = TxType::parse(s) {
            return Ok(Mix::only(t));
        }
        if !s.contains('=') {
            return Err(MixError::Unknown(s.into()));
        }
        let mut percent = [0.0; 5];
        for part in s.split(',') {
            let (k, v) = part.split_once('=').ok_or_else(|| MixError::Entry(part.into()))?;
            let t = TxType::parse(k.trim()).ok_or_else(|| MixError::Unknown(k.trim().into()))?;
            percent[t as usize] = v.trim().parse().map_err(|_| MixError::Entry(part.into()))?;
        }
        Mix { name: s.to_string(), percent }.validate()
    }
}

impl fmt::Display for Mix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Shape of the TPC-C-lite table and how workers pick warehouses.
#[derive(Debug, Clone)]
pub struct TpccLite {
    pub mix: Mix,
    pub scale: f64,
    pub seed: u64,
    pub warehouses: usize,
    /// Worker `t` only touches warehouse `t % warehouses`.
    pub disjoint: bool,
    pub heap_bytes: u64,
    pub line_size: u64,
    /// Transactions per worker; `None` for an endless stream.
    pub txs_per_thread: Option<u64>,
}

impl TpccLite {
    pub fn new(mix: Mix, scale: f64, seed: u64, heap_bytes: u64, line_size: u64) -> Self {
        Self { mix, scale, seed, warehouses: 1, disjoint: false, heap_bytes, line_size, txs_per_thread: None }
    }

    /// One transaction stream per worker.
    pub fn sources(&self, threads: usize) -> Vec<Box<dyn TxSource>> {
        (0..threads).map(|t| Box::new(self.stream(t)) as Box<dyn TxSource>).collect()
    }

    pub fn stream(&self, thread: usize) -> TpccStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(thread as u64);
        let warehouses = self.warehouses.max(1);
        let heap_words = self.heap_bytes / WORD;
        let part_words = (heap_words / warehouses as u64).max(1);
        TpccStream {
            thread,
            rng,
            types: WeightedIndex::new(self.mix.percent).expect("validated mix"),
            models: TxType::ALL.map(|t| FootprintModel::new(t, self.scale)),
            warehouses,
            disjoint: self.disjoint,
            part_words,
            line_words: (self.line_size / WORD).max(1),
            left: self.txs_per_thread,
            next_value: 0,
        }
    }
}

/// Generates a stream of transactions for a single thread on demand.
#[derive(Debug, Clone)]
pub struct TpccStream {
    thread: usize,
    rng: ChaCha8Rng,
    types: WeightedIndex<f64>,
    models: [FootprintModel; 5],
    warehouses: usize,
    disjoint: bool,
    part_words: u64,
    line_words: u64,
    left: Option<u64>,
    next_value: u64,
}

impl TpccStream {
    pub fn next_type(&mut self) -> TxType {
        TxType::ALL[self.types.sample(&mut self.rng)]
    }

    fn value(&mut self) -> u64 {
        self.next_value += 1;
        ((self.thread as u64 + 1) << 48) | self.next_value
    }

    /// The next transaction, regardless of the per-thread limit.
    pub fn generate(&mut self) -> TxSpec {
        let ty = self.next_type();
        let (reads, writes) = self.models[ty as usize].sample(&mut self.rng);
        let w = if self.disjoint { self.thread % self.warehouses } else { self.rng.random_range(0..self.warehouses) };
        let base = w as u64 * self.part_words;
        let part = self.part_words;
        let mut acc = Vec::with_capacity(reads + writes);
        if ty.scattered_reads() {
            let lines = (part / self.line_words).max(1);
            let start = self.rng.random_range(0..lines);
            let off = self.rng.random_range(0..self.line_words.min(part));
            for i in 0..reads as u64 {
                let word = ((start + i) % lines) * self.line_words + off;
                acc.push(Access::Read((base + word % part) * WORD));
            }
        } else {
            let start = self.rng.random_range(0..part);
            for i in 0..reads as u64 {
                acc.push(Access::Read((base + (start + i) % part) * WORD));
            }
        }
        let start = self.rng.random_range(0..part);
        for i in 0..writes as u64 {
            let v = self.value();
            acc.push(Access::Write((base + (start + i) % part) * WORD, v));
        }
        TxSpec { read_only: ty.read_only(), accesses: acc, label: ty.label() }
    }
}

impl TxSource for TpccStream {
    fn next_tx(&mut self) -> Option<TxSpec> {
        match &mut self.left {
            Some(0) => None,
            Some(n) => {
                *n -= 1;
                Some(self.generate())
            }
            None => Some(self.generate()),
        }
    }

    fn boxed_clone(&self) -> Box<dyn TxSource> {
        Box::new(self.clone())
    }
}

/// Convenience wrapper: per-worker TPC-C-lite streams for `mix` at `scale`.
pub fn gen_tpcc_lite(mix: &Mix, scale: f64, seed: u64, threads: usize, heap_bytes: u64, line_size: u64) -> Vec<Box<dyn TxSource>> {
    TpccLite::new(mix.clone(), scale, seed, heap_bytes, line_size).sources(threads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lite(mix: Mix, scale: f64) -> TpccLite {
        TpccLite::new(mix, scale, 7, 1 << 24, 128)
    }

    #[test]
    fn sigma_puts_p99_at_three_means() {
        let s = footprint_sigma();
        assert!((s - 0.5334).abs() < 1e-3, "{s}");
        let z = Normal::standard().inverse_cdf(0.99);
        assert!(((z * s - s * s / 2.0).exp() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn scale_zero_is_one_access_each() {
        for t in TxType::ALL {
            let mut s = lite(Mix::only(t), 0.0).stream(0);
            for _ in 0..50 {
                let tx = s.generate();
                assert_eq!(tx.reads(), 1, "{t}");
                assert_eq!(tx.writes(), usize::from(!t.read_only()), "{t}");
                assert_eq!(tx.read_only, t.read_only());
            }
        }
    }

    #[test]
    fn mixes_parse_and_validate() {
        assert_eq!("read-dominated".parse::<Mix>().unwrap().read_only_percent(), 85.0);
        assert_eq!("payment".parse::<Mix>().unwrap().percent[TxType::Payment as usize], 100.0);
        let m: Mix = "orderstatus=95,payment=5".parse().unwrap();
        assert_eq!(m.percent, [0.0, 95.0, 0.0, 5.0, 0.0]);
        assert!(matches!("orderstatus=95".parse::<Mix>(), Err(MixError::Sum(_))));
        assert!(matches!("nope".parse::<Mix>(), Err(MixError::Unknown(_))));
        assert_eq!(Mix::update_dominated().percent.iter().sum::<f64>(), 100.0);
    }

    #[test]
    fn written_values_are_globally_unique() {
        let mut l = lite(Mix::update_dominated(), 0.05);
        l.txs_per_thread = Some(200);
        let mut seen = std::collections::HashSet::new();
        for mut s in l.sources(3) {
            while let Some(tx) = s.next_tx() {
                for a in tx.accesses {
                    if let Access::Write(_, v) = a {
                        assert!(v != 0 && seen.insert(v));
                    }
                }
            }
        }
        assert!(seen.len() > 1000);
    }

    #[test]
    fn disjoint_workers_stay_in_their_warehouse() {
        let mut l = lite(Mix::update_dominated(), 0.1);
        l.warehouses = 4;
        l.disjoint = true;
        let part = (1u64 << 24) / 4;
        for t in 0..4 {
            let mut s = l.stream(t);
            for _ in 0..100 {
                for a in s.generate().accesses {
                    let addr = match a {
                        Access::Read(a) | Access::Write(a, _) => a,
                    };
                    assert_eq!(addr / part, t as u64);
                }
            }
        }
    }

    #[test]
    fn stocklevel_reads_one_word_per_line() {
        let mut s = lite(Mix::only(TxType::StockLevel), 0.01).stream(0);
        let tx = s.generate();
        let lines: std::collections::HashSet<u64> = tx
            .accesses
            .iter()
            .map(|a| match a {
                Access::Read(a) => a / 128,
                Access::Write(..) => unreachable!(),
            })
            .collect();
        assert_eq!(lines.len(), tx.reads());
    }

    #[test]
    fn streams_are_deterministic_per_seed() {
        let l = lite(Mix::read_dominated(), 0.01);
        let a: Vec<TxSpec> = (0..20).map({
            let mut s = l.stream(1);
            move |_| s.generate()
        }).collect();
        let b: Vec<TxSpec> = (0..20).map({
            let mut s = l.stream(1);
            move |_| s.generate()
        }).collect();
        assert_eq!(a, b);
        assert_ne!(a, (0..20).map({
            let mut s = l.stream(2);
            move |_| s.generate()
        }).collect::<Vec<_>>());
    }
}
