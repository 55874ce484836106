//! The verification harness: parameter counting, FLOP counting,
//! finite-difference gradient checking, latency statistics, and the named
//! check registry that the CLI's `verify` command and the acceptance tests
//! share.

mod bench;
mod checks;
mod flops;
mod gradcheck;
mod params;

pub use bench::{BenchReport, BenchStats, MIN_BENCH_ROUNDS};
pub use checks::{attention_checks, counting_checks, flop_checks, gradient_checks,
    structural_checks, CheckOutcome};
pub use flops::{count_flops, CostSheet, FlopReport, LayerCost};
pub use gradcheck::{check_graph, GradCheckConfig, GradCheckReport, GroupResult};
pub use params::{count_params, walk_param_arrays, ParamReport};
