//! Benchmark harness, suite and command-line driver for `streamfuse`.

pub mod cli;
pub mod harness;
pub mod report;
pub mod suite;

pub use cli::run_cli;
pub use harness::{compare, measure, student_t_stats, BenchTask, Comparison, SampleStats};
pub use report::{emit_results, Format, ResultRow, CSV_HEADER};
pub use suite::{define_suite, gen_inputs, BenchName, BenchSpec, Engine, Prepared};
