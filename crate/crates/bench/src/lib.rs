//! TPC-C-lite workloads, the synthetic replay workload, benchmark runs on
//! the simulator and their CSV/gnuplot reports.

pub mod report;
pub mod runner;
pub mod settings;
pub mod synthetic;
pub mod workload;

pub use report::{emit_report, ReplayRow};
pub use runner::{run_benchmark, run_sweep, BenchResult, RunConfig, RunLength};
pub use synthetic::{gen_synthetic_replay, measure_replay, SyntheticReplay, SyntheticSpec};
pub use workload::{gen_tpcc_lite, FootprintModel, Mix, TpccLite, TxType};
