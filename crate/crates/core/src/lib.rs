//! Declarative integer stream pipelines with interchangeable execution
//! strategies.
//!
//! A [`QueryExpr`] is a source, a list of lazy stages (map, filter, one
//! level of flat-map) and a scalar terminal. It can be executed by
//!
//! * [`pull`]: cursor chains with per-element `advance`/`get` dispatch,
//! * [`push`]: consumer chains fed by an indexed source loop,
//! * [`fusion`]: a compiled loop nest with all lambdas inlined,
//! * [`parallel`]: push or fused execution over split source ranges.
//!
//! All engines count what they do in a [`CounterSet`] and agree bit for bit
//! with the materialising reference evaluator in [`oracle`].

pub mod counters;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod expr;
pub mod fusion;
pub mod gen;
pub mod lambda;
pub mod oracle;
pub mod parallel;
pub mod pull;
pub mod push;
pub mod query;

pub use counters::{CounterSet, SiteCounters, StageCounters};
pub use dataset::{Dataset, DatasetRef, Datasets, Ref};
pub use error::{Error, Result};
pub use exec::Ctx;
pub use expr::{eval_scalar, ArithOp, CmpOp, Scalar, ScalarExpr, Value, Var};
pub use fusion::{exec_fused, optimize, substitute, FusedPlan};
pub use lambda::{apply_lambda, is_capturing, CallSiteCache, Closure, Lambda, SiteId};
pub use parallel::{run_parallel, split_tasks, Job, ParallelConfig, ParallelExecutor};
pub use pull::run_pull;
pub use push::{run_push, wrap_consumers, SplitCursor, DEFAULT_SPLIT_THRESHOLD};
pub use query::{build_query, QueryExpr, Stage, StageLayout, Terminal};
