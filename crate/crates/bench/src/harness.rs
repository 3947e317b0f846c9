//! Measurement core: warm-up, timed iterations, a dead-code sink and
//! Student-t statistics.
//!
//! Timing uses [`Instant`]. Samples are milliseconds per iteration and are
//! never discarded.

use std::hint::black_box;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use streamfuse::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("at least 2 timed iterations are required, got {0}")]
    InvalidIterations(usize),
    #[error("at least 2 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("{id}: iteration {iteration} returned {actual:#018x}, expected {expected:#018x}")]
    ResultMismatch {
        id: String,
        iteration: usize,
        expected: Value,
        actual: Value,
    },
    #[error("{id}: {source}")]
    Engine {
        id: String,
        source: streamfuse::Error,
    },
}

/// Two-sided 95% quantiles `t(0.975, df)` for `df = 1..=60`.
const T975: [f64; 60] = [
    12.706204736432095,
    4.302652729696142,
    3.182446305284263,
    2.7764451051977987,
    2.570581835636314,
    2.4469118511449692,
    2.3646242515927844,
    2.306004135204166,
    2.2621571628540993,
    2.2281388519649385,
    2.200985160082949,
    2.1788128296634177,
    2.1603686564610127,
    2.1447866879169273,
    2.131449545559323,
    2.1199052992210112,
    2.1098155778331806,
    2.10092204024096,
    2.093024054408263,
    2.0859634472658364,
    2.079613844727662,
    2.0738730679040147,
    2.0686576104190406,
    2.0638985616280205,
    2.059538552753294,
    2.055529438642871,
    2.0518305164802833,
    2.048407141795244,
    2.045229642132703,
    2.0422724563012373,
    2.0395134463964077,
    2.036933343460101,
    2.0345152974493383,
    2.032244509317718,
    2.0301079282503425,
    2.0280940009804502,
    2.0261924630291093,
    2.024394163911969,
    2.0226909200367604,
    2.0210753903062733,
    2.019540970441376,
    2.018081702818444,
    2.016692199227824,
    2.0153675744437636,
    2.014103388880846,
    2.0128955989194286,
    2.0117405137297655,
    2.010634757624232,
    2.0095752371292397,
    2.008559112100761,
    2.007583770315836,
    2.006646805061688,
    2.0057459953178687,
    2.004879288188057,
    2.004044783289146,
    2.003240718847872,
    2.002465459291007,
    2.0017174841452356,
    2.0009953780882674,
    2.00029782201426,
];

const Z975: f64 = 1.959963984540054;

/// `t(0.975, df)`. Table lookup up to 60 degrees of freedom, beyond that
/// the Cornish-Fisher expansion around the normal quantile (absolute
/// error below 1e-8 for df > 60).
pub fn t975(df: usize) -> f64 {
    assert!(df >= 1, "degrees of freedom must be positive");
    if df <= T975.len() {
        return T975[df - 1];
    }
    let z = Z975;
    let v = df as f64;
    let z2 = z * z;
    let z3 = z2 * z;
    let z5 = z3 * z2;
    let z7 = z5 * z2;
    let z9 = z7 * z2;
    z + (z3 + z) / (4.0 * v)
        + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * v * v)
        + (3.0 * z7 + 19.0 * z5 + 17.0 * z3 - 15.0 * z) / (384.0 * v.powi(3))
        + (79.0 * z9 + 776.0 * z7 + 1482.0 * z5 - 1920.0 * z3 - 945.0 * z) / (92160.0 * v.powi(4))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    pub samples: Vec<f64>,
    pub mean_ms: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub stddev_ms: f64,
    /// Half-width of the two-sided 95% Student-t interval.
    pub ci95_half_ms: f64,
}

impl SampleStats {
    pub fn from_samples(samples: Vec<f64>) -> Result<Self, HarnessError> {
        let (mean_ms, stddev_ms, ci95_half_ms) = student_t_stats(&samples)?;
        Ok(SampleStats {
            samples,
            mean_ms,
            stddev_ms,
            ci95_half_ms,
        })
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn interval(&self) -> (f64, f64) {
        (
            self.mean_ms - self.ci95_half_ms,
            self.mean_ms + self.ci95_half_ms,
        )
    }
}

/// Returns `(mean, stddev, ci95_half)`.
pub fn student_t_stats(samples: &[f64]) -> Result<(f64, f64, f64), HarnessError> {
    let n = samples.len();
    if n < 2 {
        return Err(HarnessError::TooFewSamples(n));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
    let stddev = (ss / (nf - 1.0)).sqrt();
    let ci = t975(n - 1) * stddev / nf.sqrt();
    Ok((mean, stddev, ci))
}

/// Observable consumer of benchmark results. Every consumed value is folded
/// into an order-sensitive checksum; each fold step is a bijection in both
/// the running state and the value, so changing any single value changes
/// the checksum.
#[derive(Debug, Default)]
pub struct Blackhole {
    state: AtomicU64,
    count: AtomicU64,
}

const MIX: u64 = 0x9E37_79B9_7F4A_7C15;

impl Blackhole {
    pub const fn new() -> Self {
        Blackhole {
            state: AtomicU64::new(0),
            count: AtomicU64::new(0),
        }
    }

    pub fn consume(&self, v: Value) {
        let v = black_box(v) as u64;
        let _ = self
            .state
            .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |s| {
                Some((s ^ v).wrapping_mul(MIX).rotate_left(29).wrapping_add(MIX))
            });
        self.count.fetch_add(1, Ordering::Relaxed);
    }

    pub fn checksum(&self) -> u64 {
        self.state.load(Ordering::Relaxed)
    }

    pub fn consumed(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

static GLOBAL_SINK: Blackhole = Blackhole::new();

/// Consumes `v` into the process-wide sink.
pub fn sink(v: Value) {
    GLOBAL_SINK.consume(v);
}

/// Checksum of everything passed to [`sink`] so far.
pub fn checksum() -> u64 {
    GLOBAL_SINK.checksum()
}

pub fn sunk_count() -> u64 {
    GLOBAL_SINK.consumed()
}

/// Between-benchmark memory reclamation hook. Rust has no collector to
/// force, so this is a no-op kept at the point where the harness would
/// request one.
pub fn reclaim_memory() {}

/// A benchmark body with untimed setup and a known correct result.
#[allow(clippy::type_complexity)]
pub struct BenchTask<'a, S> {
    pub id: String,
    pub setup: Box<dyn FnOnce() -> S + 'a>,
    pub body: Box<dyn FnMut(&mut S) -> streamfuse::Result<Value> + 'a>,
    pub expected: Value,
}

impl<'a, S> BenchTask<'a, S> {
    pub fn new(
        id: impl Into<String>,
        setup: impl FnOnce() -> S + 'a,
        body: impl FnMut(&mut S) -> streamfuse::Result<Value> + 'a,
        expected: Value,
    ) -> Self {
        BenchTask {
            id: id.into(),
            setup: Box::new(setup),
            body: Box::new(body),
            expected,
        }
    }
}

/// Runs `warmup` untimed and `iters` timed iterations of the task body.
/// Any result different from `expected` aborts with `ResultMismatch`.
pub fn measure<S>(
    task: BenchTask<'_, S>,
    warmup: usize,
    iters: usize,
) -> Result<SampleStats, HarnessError> {
    if iters < 2 {
        return Err(HarnessError::InvalidIterations(iters));
    }
    let BenchTask {
        id,
        setup,
        mut body,
        expected,
    } = task;
    let mut state = setup();
    reclaim_memory();
    let check = |iteration: usize, r: streamfuse::Result<Value>| -> Result<(), HarnessError> {
        let actual = r.map_err(|source| HarnessError::Engine {
            id: id.clone(),
            source,
        })?;
        sink(actual);
        if actual != expected {
            return Err(HarnessError::ResultMismatch {
                id: id.clone(),
                iteration,
                expected,
                actual,
            });
        }
        Ok(())
    };
    for i in 0..warmup {
        let r = body(&mut state);
        check(i, r)?;
    }
    let mut samples = Vec::with_capacity(iters);
    for i in 0..iters {
        let start = Instant::now();
        let r = black_box(body(&mut state));
        let elapsed = start.elapsed();
        check(warmup + i, r)?;
        samples.push(elapsed.as_secs_f64() * 1e3);
    }
    SampleStats::from_samples(samples)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    /// `mean(a) / mean(b)`.
    pub ratio: f64,
    pub intervals_overlap: bool,
    /// `a` is faster with disjoint 95% intervals.
    pub significantly_faster: bool,
}

pub fn compare(a: &SampleStats, b: &SampleStats) -> Comparison {
    let ratio = if b.mean_ms == 0.0 {
        if a.mean_ms == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a.mean_ms / b.mean_ms
    };
    let (alo, ahi) = a.interval();
    let (blo, bhi) = b.interval();
    let intervals_overlap = alo <= bhi && blo <= ahi;
    Comparison {
        ratio,
        intervals_overlap,
        significantly_faster: a.mean_ms < b.mean_ms && !intervals_overlap,
    }
}
