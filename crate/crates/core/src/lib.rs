//! Emulated best-effort HTM, a persistent-memory model with asynchronous
//! flushes, and the durable transaction engines that run on top of them.

pub mod clock;
pub mod config;
pub mod engine;
pub mod error;
pub mod exec;
pub mod explore;
pub mod htm;
pub mod image;
pub mod layout;
pub mod pm;
pub mod replay;
pub mod tx;

pub use config::{Config, Engine, EngineKind};
pub use engine::{Bucket, CrashPoint, CrashSite, History, MetricsRecord, Sim, TxRecord};
pub use exec::Exec;
pub use tx::{Access, FixedProgram, TxSource, TxSpec};
