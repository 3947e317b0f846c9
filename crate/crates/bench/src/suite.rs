//! The microbenchmark suite: five pipelines, their handwritten baselines,
//! input generation and per-engine runners.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use streamfuse::expr::ScalarExpr as E;
use streamfuse::{
    exec_fused, optimize, run_pull, run_push, CounterSet, Dataset, Datasets, FusedPlan, Job,
    Lambda, ParallelConfig, ParallelExecutor, QueryExpr, Stage, Terminal, Value,
    DEFAULT_SPLIT_THRESHOLD,
};

pub const DEFAULT_N: usize = 10_000_000;
/// Inner array length of `cart`; the outer array holds `n / CART_INNER`.
pub const CART_INNER: usize = 10;
pub const DEFAULT_WARMUP: usize = 10;
pub const DEFAULT_ITERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchName {
    Sum,
    SumOfSquares,
    SumOfSquaresEven,
    Cart,
    Refs,
}

impl BenchName {
    pub const ALL: [BenchName; 5] = [
        BenchName::Sum,
        BenchName::SumOfSquares,
        BenchName::SumOfSquaresEven,
        BenchName::Cart,
        BenchName::Refs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchName::Sum => "sum",
            BenchName::SumOfSquares => "sumOfSquares",
            BenchName::SumOfSquaresEven => "sumOfSquaresEven",
            BenchName::Cart => "cart",
            BenchName::Refs => "refs",
        }
    }
}

impl fmt::Display for BenchName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| format!("unknown benchmark `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    Baseline,
    Pull,
    Push,
    Fused,
    PushPar,
    FusedPar,
}

impl Engine {
    pub const ALL: [Engine; 6] = [
        Engine::Baseline,
        Engine::Pull,
        Engine::Push,
        Engine::Fused,
        Engine::PushPar,
        Engine::FusedPar,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Baseline => "baseline",
            Engine::Pull => "pull",
            Engine::Push => "push",
            Engine::Fused => "fused",
            Engine::PushPar => "push-par",
            Engine::FusedPar => "fused-par",
        }
    }

    pub fn is_parallel(self) -> bool {
        matches!(self, Engine::PushPar | Engine::FusedPar)
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown engine `{s}`"))
    }
}

/// One (benchmark, engine) configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchSpec {
    pub name: BenchName,
    pub engine: Engine,
    pub n: usize,
    pub threads: usize,
    pub warmup: usize,
    pub iters: usize,
    pub split_threshold: usize,
}

impl BenchSpec {
    pub fn new(name: BenchName, engine: Engine) -> Self {
        BenchSpec {
            name,
            engine,
            n: DEFAULT_N,
            threads: ParallelConfig::default().workers,
            warmup: DEFAULT_WARMUP,
            iters: DEFAULT_ITERS,
            split_threshold: DEFAULT_SPLIT_THRESHOLD,
        }
    }

    /// Worker count actually used: 1 for the sequential engines.
    pub fn effective_threads(&self) -> usize {
        if self.engine.is_parallel() {
            self.threads.max(1)
        } else {
            1
        }
    }
}

/// `(outer, inner)` lengths of `cart` for a given `n`.
pub fn cart_sizes(n: usize) -> (usize, usize) {
    (n / CART_INNER, CART_INNER)
}

/// Builds the inputs of one benchmark. Ranges start at 0.
pub fn gen_inputs(name: BenchName, n: usize) -> Datasets {
    match name {
        BenchName::Sum | BenchName::SumOfSquares | BenchName::SumOfSquaresEven => {
            Datasets::new().with("xs", Dataset::range(n))
        }
        BenchName::Cart => {
            let (outer, inner) = cart_sizes(n);
            Datasets::new()
                .with("outer", Dataset::range(outer))
                .with("inner", Dataset::range(inner))
        }
        BenchName::Refs => Datasets::new().with("refs", Dataset::refs(0..n as Value)),
    }
}

/// A benchmark pipeline and its handwritten loop equivalent.
pub struct Benchmark {
    pub name: BenchName,
    pub query: QueryExpr,
    pub baseline: fn(&Datasets) -> Value,
}

fn square() -> Lambda {
    Lambda::unary(E::mul(E::param(0), E::param(0))).expect("valid lambda")
}

fn divisible_by(k: Value) -> Lambda {
    Lambda::unary(E::eq(E::rem(E::param(0), E::constant(k)), E::constant(0))).expect("valid lambda")
}

fn times_outer() -> Lambda {
    Lambda::new(1, 1, E::mul(E::param(0), E::capture(0))).expect("valid lambda")
}

pub fn query_for(name: BenchName) -> QueryExpr {
    let (src, stages, terminal) = match name {
        BenchName::Sum => ("xs", vec![], Terminal::Sum),
        BenchName::SumOfSquares => ("xs", vec![Stage::map(square())], Terminal::Sum),
        BenchName::SumOfSquaresEven => (
            "xs",
            vec![Stage::filter(divisible_by(2)), Stage::map(square())],
            Terminal::Sum,
        ),
        BenchName::Cart => (
            "outer",
            vec![Stage::flat_map("inner", vec![Stage::map(times_outer())])],
            Terminal::Sum,
        ),
        BenchName::Refs => (
            "refs",
            vec![
                Stage::filter(divisible_by(3)),
                Stage::filter(divisible_by(5)),
            ],
            Terminal::Count,
        ),
    };
    QueryExpr::new(src, stages, terminal).expect("suite queries are valid")
}

fn ints<'a>(ds: &'a Datasets, name: &str) -> &'a [Value] {
    match ds.resolve(&name.into()).expect("benchmark input present") {
        Dataset::Ints(a) => a,
        Dataset::Refs(_) => panic!("`{name}` must be an integer array"),
    }
}

// Baselines are the plain indexed loops a programmer would write by hand.
#[allow(clippy::needless_range_loop)]
fn baseline_sum(ds: &Datasets) -> Value {
    let a = ints(ds, "xs");
    let mut sum: Value = 0;
    for i in 0..a.len() {
        sum = sum.wrapping_add(a[i]);
    }
    sum
}

#[allow(clippy::needless_range_loop)]
fn baseline_sum_of_squares(ds: &Datasets) -> Value {
    let a = ints(ds, "xs");
    let mut sum: Value = 0;
    for i in 0..a.len() {
        sum = sum.wrapping_add(a[i].wrapping_mul(a[i]));
    }
    sum
}

#[allow(clippy::needless_range_loop)]
fn baseline_sum_of_squares_even(ds: &Datasets) -> Value {
    let a = ints(ds, "xs");
    let mut sum: Value = 0;
    for i in 0..a.len() {
        if a[i] % 2 == 0 {
            sum = sum.wrapping_add(a[i].wrapping_mul(a[i]));
        }
    }
    sum
}

#[allow(clippy::needless_range_loop)]
fn baseline_cart(ds: &Datasets) -> Value {
    let outer = ints(ds, "outer");
    let inner = ints(ds, "inner");
    let mut sum: Value = 0;
    for i in 0..outer.len() {
        for j in 0..inner.len() {
            sum = sum.wrapping_add(inner[j].wrapping_mul(outer[i]));
        }
    }
    sum
}

fn baseline_refs(ds: &Datasets) -> Value {
    let refs = match ds.resolve(&"refs".into()).expect("benchmark input present") {
        Dataset::Refs(r) => r,
        Dataset::Ints(_) => panic!("`refs` must be a reference array"),
    };
    let mut count: Value = 0;
    for i in 0..refs.len() {
        let v = refs[i].value;
        if v % 3 == 0 && v % 5 == 0 {
            count += 1;
        }
    }
    count
}

pub fn benchmark(name: BenchName) -> Benchmark {
    let baseline = match name {
        BenchName::Sum => baseline_sum as fn(&Datasets) -> Value,
        BenchName::SumOfSquares => baseline_sum_of_squares,
        BenchName::SumOfSquaresEven => baseline_sum_of_squares_even,
        BenchName::Cart => baseline_cart,
        BenchName::Refs => baseline_refs,
    };
    Benchmark {
        name,
        query: query_for(name),
        baseline,
    }
}

pub fn define_suite() -> Vec<Benchmark> {
    BenchName::ALL.into_iter().map(benchmark).collect()
}

/// A benchmark compiled for one engine. Optimisation and pool start-up
/// happen here, outside any timed region.
pub struct Prepared {
    pub bench: Benchmark,
    pub engine: Engine,
    plan: Option<FusedPlan>,
    executor: Option<ParallelExecutor>,
    pub optimize_time: Duration,
}

impl Prepared {
    pub fn new(
        name: BenchName,
        engine: Engine,
        config: ParallelConfig,
    ) -> streamfuse::Result<Self> {
        let bench = benchmark(name);
        let start = Instant::now();
        let plan = matches!(engine, Engine::Fused | Engine::FusedPar)
            .then(|| optimize(&bench.query))
            .transpose()?;
        let optimize_time = start.elapsed();
        let executor = engine
            .is_parallel()
            .then(|| ParallelExecutor::new(config))
            .transpose()?;
        Ok(Prepared {
            bench,
            engine,
            plan,
            executor,
            optimize_time,
        })
    }

    pub fn plan(&self) -> Option<&FusedPlan> {
        self.plan.as_ref()
    }

    pub fn run(&self, ds: &Datasets, counters: &mut CounterSet) -> streamfuse::Result<Value> {
        let q = &self.bench.query;
        match self.engine {
            Engine::Baseline => Ok((self.bench.baseline)(ds)),
            Engine::Pull => run_pull(q, ds, counters),
            Engine::Push => run_push(q, ds, counters),
            Engine::Fused => exec_fused(self.plan.as_ref().expect("fused plan"), ds, counters),
            Engine::PushPar => {
                self.executor
                    .as_ref()
                    .expect("parallel executor")
                    .run(Job::Push(q), ds, counters)
            }
            Engine::FusedPar => self.executor.as_ref().expect("parallel executor").run(
                Job::Fused(self.plan.as_ref().expect("fused plan")),
                ds,
                counters,
            ),
        }
    }
}
