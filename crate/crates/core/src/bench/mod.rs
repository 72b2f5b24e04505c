//! Verification suites and benchmark sweeps behind the command-line tool.

mod perf;
mod verify;

pub use perf::{
    bench_intree, bench_throughput, calibrate_busy_work, run_steps, throughput_row, write_csv, IntreeRow, StepRow,
    ThroughputRow,
};
pub use verify::{exit_code, run_suite, verify, Suite, SuiteReport, VerifyPlan};
