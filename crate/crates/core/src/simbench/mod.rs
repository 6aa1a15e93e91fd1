//! Synthetic online/offline benchmark harness.
//!
//! [`Environment`] defines a context distribution and a reward model with
//! known expectations, so the online uplift of a policy change can be
//! simulated as ground truth and every offline estimator can be scored
//! against it: correlation of uplifts, decision precision, false-negative
//! rate and interval width — the full offline-A/B report card.

mod ab;
mod bench;
mod env;
mod scenario;

pub use ab::{decide, simulate_log, simulate_online, BenchError, Decision, OnlineResult};
pub use bench::{
    run_benchmark, AbTestRecord, AbTestSpec, BenchConfig, BenchRecordRow, BenchmarkResult,
    BenchmarkSummary, OfflineEstimate, SummaryRow,
};
pub use env::{Environment, IntentLevel, RewardKind, SegmentSpec};
pub use scenario::{
    generate_suite, heavy_tail_scenario, table1_scenario, PerturbationMix, SuiteConfig,
    Table1Scenario,
};
