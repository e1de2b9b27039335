//! Litmus programs: small multi-threaded transaction programs.
//!
//! Text format, one thread program per line:
//!
//! ```text
//! # comment
//! name nonrepeatable-read
//! T0: beginRO read x read x commit
//! T1: beginUpd write x 1 commit
//! ```
//!
//! Each variable lives on its own cache line. Written values must be
//! distinct and nonzero so every read names its writer.

use std::collections::HashSet;
use std::path::Path;

use dumbolab_core::{Access, FixedProgram, TxSource, TxSpec};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LitmusError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("value {0} is written more than once")]
    DuplicateValue(u64),
    #[error("no thread programs")]
    Empty,
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Litmus {
    pub name: String,
    pub vars: Vec<String>,
    /// Per thread, its transactions in program order.
    pub threads: Vec<Vec<TxSpec>>,
}

impl Litmus {
    pub fn parse(text: &str) -> Result<Litmus, LitmusError> {
        let mut name = String::from("unnamed");
        let mut vars: Vec<String> = Vec::new();
        let mut threads = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: &str| LitmusError::Syntax { line, msg: msg.to_string() };
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(n) = body.strip_prefix("name ") {
                name = n.trim().to_string();
                continue;
            }
            let prog = match body.split_once(':') {
                Some((_, p)) => p,
                None => body,
            };
            let mut txs = Vec::new();
            let mut cur: Option<TxSpec> = None;
            let mut toks = prog.split_whitespace();
            while let Some(t) = toks.next() {
                match t {
                    "beginRO" | "beginUpd" => {
                        if cur.is_some() {
                            return Err(err("begin inside a transaction"));
                        }
                        let mut tx = TxSpec::update(Vec::new());
                        tx.read_only = t == "beginRO";
                        cur = Some(tx);
                    }
                    "commit" => txs.push(cur.take().ok_or_else(|| err("commit without begin"))?),
                    "read" | "write" => {
                        let tx = cur.as_mut().ok_or_else(|| err("access outside a transaction"))?;
                        let v = toks.next().ok_or_else(|| err("missing variable"))?;
                        let idx = match vars.iter().position(|x| x == v) {
                            Some(p) => p,
                            None => {
                                vars.push(v.to_string());
                                vars.len() - 1
                            }
                        };
                        let addr = idx as u64;
                        if t == "read" {
                            tx.accesses.push(Access::Read(addr));
                        } else {
                            if tx.read_only {
                                return Err(err("write in a read-only transaction"));
                            }
                            let val: u64 = toks
                                .next()
                                .and_then(|x| x.parse().ok())
                                .filter(|&x| x != 0)
                                .ok_or_else(|| err("write needs a nonzero integer value"))?;
                            if !seen.insert(val) {
                                return Err(LitmusError::DuplicateValue(val));
                            }
                            tx.accesses.push(Access::Write(addr, val));
                        }
                    }
                    other => return Err(err(&format!("unknown token `{other}`"))),
                }
            }
            if cur.is_some() {
                return Err(err("transaction not committed"));
            }
            threads.push(txs);
        }
        if threads.is_empty() {
            return Err(LitmusError::Empty);
        }
        Ok(Litmus { name, vars, threads })
    }

    pub fn load(path: &Path) -> Result<Litmus, LitmusError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LitmusError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        Litmus::parse(&text)
    }

    /// Heap bytes needed with each variable on its own line.
    pub fn heap_bytes(&self, line_size: u64) -> u64 {
        self.vars.len().max(1) as u64 * line_size
    }

    /// Transaction sources with variable indices mapped to line-aligned
    /// addresses.
    pub fn sources(&self, line_size: u64) -> Vec<Box<dyn TxSource>> {
        self.threads
            .iter()
            .map(|txs| {
                let mapped = txs.iter().map(|tx| {
                    let mut tx = tx.clone();
                    for a in &mut tx.accesses {
                        *a = match *a {
                            Access::Read(i) => Access::Read(i * line_size),
                            Access::Write(i, v) => Access::Write(i * line_size, v),
                        };
                    }
                    tx
                });
                Box::new(FixedProgram::new(mapped)) as Box<dyn TxSource>
            })
            .collect()
    }

    pub fn max_steps_per_thread(&self) -> usize {
        self.threads.iter().map(|t| t.iter().map(|tx| tx.accesses.len()).sum()).max().unwrap_or(0)
    }
}

/// Loads every `*.lit` file of a directory, sorted by file name.
pub fn load_corpus(dir: &Path) -> Result<Vec<Litmus>, LitmusError> {
    let io = |e: std::io::Error| LitmusError::Io { path: dir.display().to_string(), reason: e.to_string() };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "lit"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Litmus::load(p)).collect()
}

/// The corpus shipped with this crate.
pub fn builtin_corpus_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("litmus")
}
