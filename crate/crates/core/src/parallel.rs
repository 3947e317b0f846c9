//! Parallel push and fused execution over recursively split cursors.
//!
//! The outer source is split into leaves of at most `split_threshold`
//! elements. Workers fold leaves into private accumulators and counters,
//! which are combined with wrapping addition at one join point, so results
//! are identical to sequential execution for any schedule. Only the outer
//! source is split; flat-map inner loops stay inside the leaf that owns the
//! outer element.
//!
//! With the `parallel` feature (default) leaves run on a rayon pool sized
//! to the configured worker count. Without it, leaves run in order on the
//! calling thread.

use crate::counters::CounterSet;
use crate::dataset::Datasets;
use crate::error::Result;
use crate::expr::Value;
use crate::fusion::{exec_fused_range, FusedPlan};
use crate::lambda::CallSiteCache;
use crate::push::{run_push_range, SplitCursor, DEFAULT_SPLIT_THRESHOLD};
use crate::query::QueryExpr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParallelConfig {
    pub workers: usize,
    pub split_threshold: usize,
}

impl Default for ParallelConfig {
    fn default() -> Self {
        ParallelConfig {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            split_threshold: DEFAULT_SPLIT_THRESHOLD,
        }
    }
}

impl ParallelConfig {
    /// Clamps both fields to at least 1.
    pub fn new(workers: usize, split_threshold: usize) -> Self {
        ParallelConfig {
            workers: workers.max(1),
            split_threshold: split_threshold.max(1),
        }
    }
}

/// Splits recursively until every leaf holds at most `threshold` elements.
/// Leaves are returned in range order.
pub fn split_tasks<'d>(cursor: SplitCursor<'d>, threshold: usize) -> Vec<SplitCursor<'d>> {
    fn go<'d>(mut c: SplitCursor<'d>, threshold: usize, out: &mut Vec<SplitCursor<'d>>) {
        match c.try_split(threshold) {
            Some(prefix) => {
                go(prefix, threshold, out);
                go(c, threshold, out);
            }
            None => out.push(c),
        }
    }
    let mut out = Vec::new();
    go(cursor, threshold.max(1), &mut out);
    out
}

/// What a parallel run executes.
#[derive(Debug, Clone, Copy)]
pub enum Job<'a> {
    Push(&'a QueryExpr),
    Fused(&'a FusedPlan),
}

impl Job<'_> {
    fn source(&self) -> &crate::dataset::DatasetRef {
        match self {
            Job::Push(q) => q.source(),
            Job::Fused(p) => &p.levels()[0].source,
        }
    }
}

/// Reusable executor owning its worker pool.
pub struct ParallelExecutor {
    config: ParallelConfig,
    #[cfg(feature = "parallel")]
    pool: rayon::ThreadPool,
}

impl std::fmt::Debug for ParallelExecutor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParallelExecutor")
            .field("config", &self.config)
            .finish()
    }
}

type Partial = (Value, CounterSet);

fn combine(mut a: Partial, b: Partial) -> Partial {
    a.0 = a.0.wrapping_add(b.0);
    a.1.merge(&b.1);
    a
}

impl ParallelExecutor {
    pub fn new(config: ParallelConfig) -> Result<Self> {
        let config = ParallelConfig::new(config.workers, config.split_threshold);
        #[cfg(feature = "parallel")]
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .thread_name(|i| format!("streamfuse-{i}"))
            .build()
            .map_err(|e| crate::Error::ThreadPool(e.to_string()))?;
        Ok(ParallelExecutor {
            config,
            #[cfg(feature = "parallel")]
            pool,
        })
    }

    pub fn config(&self) -> ParallelConfig {
        self.config
    }

    /// Runs `job`; `counters` receives the merged worker counters.
    pub fn run(
        &self,
        job: Job<'_>,
        datasets: &Datasets,
        counters: &mut CounterSet,
    ) -> Result<Value> {
        let src = datasets.resolve(job.source())?;
        let leaves: Vec<(usize, usize)> =
            split_tasks(SplitCursor::new(src), self.config.split_threshold)
                .into_iter()
                .map(|c| (c.lo(), c.hi()))
                .collect();
        // one cache for the whole run: sites link once across workers
        let cache = match job {
            Job::Push(q) => q.call_sites(),
            Job::Fused(_) => CallSiteCache::new(),
        };
        let leaf = |(lo, hi): (usize, usize), c: &mut CounterSet| -> Result<Value> {
            match job {
                Job::Push(q) => run_push_range(q, datasets, &cache, lo, hi, c),
                Job::Fused(p) => exec_fused_range(p, datasets, lo, hi),
            }
        };
        let (value, merged) = self.fold_leaves(&leaves, leaf)?;
        counters.merge(&merged);
        Ok(value)
    }

    #[cfg(feature = "parallel")]
    fn fold_leaves<F>(&self, leaves: &[(usize, usize)], leaf: F) -> Result<Partial>
    where
        F: Fn((usize, usize), &mut CounterSet) -> Result<Value> + Sync,
    {
        use rayon::prelude::*;
        self.pool.install(|| {
            leaves
                .par_iter()
                .try_fold(
                    || (0 as Value, CounterSet::default()),
                    |(acc, mut c), &range| {
                        let v = leaf(range, &mut c)?;
                        Ok((acc.wrapping_add(v), c))
                    },
                )
                .try_reduce(|| (0, CounterSet::default()), |a, b| Ok(combine(a, b)))
        })
    }

    #[cfg(not(feature = "parallel"))]
    fn fold_leaves<F>(&self, leaves: &[(usize, usize)], leaf: F) -> Result<Partial>
    where
        F: Fn((usize, usize), &mut CounterSet) -> Result<Value> + Sync,
    {
        let mut total = (0, CounterSet::default());
        for &range in leaves {
            let mut c = CounterSet::default();
            let v = leaf(range, &mut c)?;
            total = combine(total, (v, c));
        }
        Ok(total)
    }
}

/// One-shot parallel run with a freshly built executor.
pub fn run_parallel(
    job: Job<'_>,
    datasets: &Datasets,
    config: ParallelConfig,
    counters: &mut CounterSet,
) -> Result<Value> {
    ParallelExecutor::new(config)?.run(job, datasets, counters)
}
