use thiserror::Error;

use crate::pm::RegionId;

/// Errors raised by the PM device.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PmError {
    #[error("address {addr:#x} out of range for {region:?} ({size} bytes)")]
    OutOfRange { region: RegionId, addr: u64, size: u64 },
    #[error("address {addr:#x} is not 8-byte aligned")]
    Misaligned { addr: u64 },
    #[error("line {line} out of range for {region:?}")]
    LineOutOfRange { region: RegionId, line: u64 },
}

/// Malformed durable state found while replaying.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("marker for durTs {durts} claims {entries} entries but the log ring holds at most {capacity}")]
    OversizedMarker { durts: u64, entries: u64, capacity: u64 },
    #[error("marker for durTs {durts} points at log offset {offset:#x} outside any thread window")]
    BadLogStart { durts: u64, offset: u64 },
    #[error("redo entry targets heap address {addr:#x} beyond the heap")]
    BadHeapAddr { addr: u64 },
    #[error("image was written with {found} but {expected} was expected")]
    FormatMismatch { expected: &'static str, found: &'static str },
    #[error(transparent)]
    Pm(#[from] PmError),
}

/// Errors reading or writing image directories.
#[derive(Debug, Error)]
pub enum ImageError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

/// A bad configuration key or value.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
}

impl ConfigError {
    pub fn bad(key: &str, value: &str, reason: impl Into<String>) -> Self {
        ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.into(),
        }
    }
}

/// A simulated run that cannot continue.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("thread {thread}: write to {addr:#x} inside a read-only transaction")]
    WriteInReadOnly { thread: usize, addr: u64 },
    #[error("thread {thread}: {bytes} bytes of redo log exceed the {capacity}-byte log window")]
    TxTooLarge { thread: usize, bytes: u64, capacity: u64 },
    #[error("no runnable worker at step {step} with {blocked} blocked")]
    Deadlock { step: u64, blocked: usize },
    #[error("step limit of {0} reached")]
    StepLimit(u64),
    #[error("live replay: {0}")]
    Replay(#[from] ReplayError),
}
