//! Schedule exploration drivers and verification oracles for the engines in
//! `dumbolab-core`: Property 1, snapshot isolation, opacity and durable
//! consistency of recovered crash images.

pub mod durable;
pub mod isolation;
pub mod litmus;
pub mod sweep;

pub use durable::{check_durable_consistency, check_image, full_scan, DurableViolation, ScanOracle};
pub use isolation::{check_isolation, check_opacity, check_property1, check_si, Level, Verdict, Violation};
pub use litmus::{load_corpus, Litmus, LitmusError};
pub use sweep::{crash_sweep, explore_litmus, hole_sweep, HoleOutcome, LitmusOutcome, SweepOutcome};
