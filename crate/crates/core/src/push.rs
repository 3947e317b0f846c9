//! Internal iteration: the source loops over its array and pushes every
//! element into a chain of consumers, each wrapping its downstream.
//!
//! A stage is charged one control dispatch per `accept` it receives. The
//! source itself is the loop and receives nothing.

use std::sync::Arc;

use crate::counters::CounterSet;
use crate::dataset::{Dataset, Datasets, Elements};
use crate::error::Result;
use crate::exec::{bind_inner, fold, BoundStage, Ctx};
use crate::expr::Value;
use crate::lambda::{CallSiteCache, Closure};
use crate::query::{QueryExpr, Stage, Terminal};

/// Default leaf size below which cursors are not split further.
pub const DEFAULT_SPLIT_THRESHOLD: usize = 8192;

pub trait Sink {
    fn accept(&mut self, v: Value, cx: &mut Ctx<'_>) -> Result<()>;
    /// Terminal accumulator, forwarded through the wrappers.
    fn result(&self) -> Value;
    fn downstream(&self) -> Option<&dyn Sink>;
}

struct TerminalSink {
    terminal: Terminal,
    acc: Value,
    slot: usize,
}

impl Sink for TerminalSink {
    #[inline]
    fn accept(&mut self, v: Value, cx: &mut Ctx<'_>) -> Result<()> {
        cx.dispatch(self.slot);
        self.acc = fold(self.terminal, self.acc, v);
        Ok(())
    }

    fn result(&self) -> Value {
        self.acc
    }

    fn downstream(&self) -> Option<&dyn Sink> {
        None
    }
}

struct MapSink<'d> {
    f: Arc<Closure>,
    down: Box<dyn Sink + 'd>,
    slot: usize,
}

impl Sink for MapSink<'_> {
    #[inline]
    fn accept(&mut self, v: Value, cx: &mut Ctx<'_>) -> Result<()> {
        cx.dispatch(self.slot);
        cx.applied(self.slot);
        let w = self.f.apply(v, cx.counters)?;
        self.down.accept(w, cx)
    }

    fn result(&self) -> Value {
        self.down.result()
    }

    fn downstream(&self) -> Option<&dyn Sink> {
        Some(&*self.down)
    }
}

struct FilterSink<'d> {
    p: Arc<Closure>,
    down: Box<dyn Sink + 'd>,
    slot: usize,
}

impl Sink for FilterSink<'_> {
    #[inline]
    fn accept(&mut self, v: Value, cx: &mut Ctx<'_>) -> Result<()> {
        cx.dispatch(self.slot);
        cx.applied(self.slot);
        if self.p.test(v, cx.counters)? {
            self.down.accept(v, cx)
        } else {
            Ok(())
        }
    }

    fn result(&self) -> Value {
        self.down.result()
    }

    fn downstream(&self) -> Option<&dyn Sink> {
        Some(&*self.down)
    }
}

/// Runs an indexed loop over the inner dataset for every accepted element,
/// capturing the inner lambdas with the accepted element as `Capture(0)`.
struct FlatMapSink<'d> {
    inner_data: &'d Dataset,
    inner: Vec<BoundStage>,
    closures: Vec<Arc<Closure>>,
    down: Box<dyn Sink + 'd>,
    slot: usize,
}

impl FlatMapSink<'_> {
    fn push_all<S: Elements + ?Sized>(&mut self, data: &S, cx: &mut Ctx<'_>) -> Result<()> {
        'elements: for i in 0..data.len() {
            let mut v = data.at(i);
            for (s, f) in self.inner.iter().zip(&self.closures) {
                cx.dispatch(s.slot);
                cx.applied(s.slot);
                if s.filter {
                    if !f.test(v, cx.counters)? {
                        continue 'elements;
                    }
                } else {
                    v = f.apply(v, cx.counters)?;
                }
            }
            self.down.accept(v, cx)?;
        }
        Ok(())
    }
}

impl Sink for FlatMapSink<'_> {
    fn accept(&mut self, x: Value, cx: &mut Ctx<'_>) -> Result<()> {
        cx.dispatch(self.slot);
        self.closures.clear();
        for s in &self.inner {
            let env: &[Value] = if s.captures == 0 {
                &[]
            } else {
                std::slice::from_ref(&x)
            };
            self.closures
                .push(cx.cache.capture_at(s.site, env, cx.counters)?);
        }
        match self.inner_data {
            Dataset::Ints(a) => self.push_all(&**a, cx),
            Dataset::Refs(r) => self.push_all(&**r, cx),
        }
    }

    fn result(&self) -> Value {
        self.down.result()
    }

    fn downstream(&self) -> Option<&dyn Sink> {
        Some(&*self.down)
    }
}

/// Head of a wired consumer chain.
pub struct ConsumerChain<'d> {
    head: Box<dyn Sink + 'd>,
}

impl<'d> ConsumerChain<'d> {
    #[inline]
    pub fn accept(&mut self, v: Value, cx: &mut Ctx<'_>) -> Result<()> {
        self.head.accept(v, cx)
    }

    pub fn result(&self) -> Value {
        self.head.result()
    }

    /// Number of stage wrappers in front of the terminal sink.
    pub fn wrappers(&self) -> usize {
        let mut n = 0;
        let mut s: &dyn Sink = &*self.head;
        while let Some(d) = s.downstream() {
            n += 1;
            s = d;
        }
        n
    }
}

/// Wires the consumer chain back to front, ending in the terminal sink.
pub fn wrap_consumers<'d>(
    query: &QueryExpr,
    datasets: &'d Datasets,
    cx: &mut Ctx<'_>,
) -> Result<ConsumerChain<'d>> {
    let layout = query.layout();
    let mut head: Box<dyn Sink + 'd> = Box::new(TerminalSink {
        terminal: query.terminal(),
        acc: 0,
        slot: layout.terminal,
    });
    for (stage, &slot) in query.stages().iter().zip(&layout.stages).rev() {
        head = match stage {
            Stage::Map(l) => Box::new(MapSink {
                f: cx.cache.capture(l, &[], cx.counters)?,
                down: head,
                slot,
            }),
            Stage::Filter(l) => Box::new(FilterSink {
                p: cx.cache.capture(l, &[], cx.counters)?,
                down: head,
                slot,
            }),
            Stage::FlatMap { source, stages } => {
                let inner = layout
                    .inner
                    .as_ref()
                    .expect("layout has inner slots for a flatMap");
                let inner = bind_inner(stages, &inner.stages, cx.cache)?;
                Box::new(FlatMapSink {
                    inner_data: datasets.resolve(source)?,
                    closures: Vec::with_capacity(inner.len()),
                    inner,
                    down: head,
                    slot,
                })
            }
        };
    }
    Ok(ConsumerChain { head })
}

/// Splittable index range over a dataset.
#[derive(Debug, Clone)]
pub struct SplitCursor<'d> {
    data: &'d Dataset,
    lo: usize,
    hi: usize,
}

impl<'d> SplitCursor<'d> {
    pub fn new(data: &'d Dataset) -> Self {
        SplitCursor {
            data,
            lo: 0,
            hi: data.len(),
        }
    }

    /// Cursor over `[lo, hi)`; both bounds are clamped to the dataset.
    pub fn range(data: &'d Dataset, lo: usize, hi: usize) -> Self {
        let hi = hi.min(data.len());
        SplitCursor {
            data,
            lo: lo.min(hi),
            hi,
        }
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    pub fn data(&self) -> &'d Dataset {
        self.data
    }

    pub fn estimate_size(&self) -> usize {
        self.hi - self.lo
    }

    /// Splits off the first half `[lo, mid)` if more than `threshold`
    /// elements remain; the receiver keeps `[mid, hi)`.
    pub fn try_split(&mut self, threshold: usize) -> Option<SplitCursor<'d>> {
        let size = self.estimate_size();
        if size <= threshold {
            return None;
        }
        let mid = self.lo + size / 2;
        let prefix = SplitCursor {
            data: self.data,
            lo: self.lo,
            hi: mid,
        };
        self.lo = mid;
        Some(prefix)
    }

    /// Pushes exactly one element if any remains.
    pub fn try_advance(&mut self, chain: &mut ConsumerChain<'_>, cx: &mut Ctx<'_>) -> Result<bool> {
        if self.lo < self.hi {
            let v = self.data.get(self.lo);
            self.lo += 1;
            chain.accept(v, cx)?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Pushes every remaining element with an indexed do-while loop.
    pub fn for_each_remaining(
        &mut self,
        chain: &mut ConsumerChain<'_>,
        cx: &mut Ctx<'_>,
    ) -> Result<()> {
        fn drive<S: Elements + ?Sized>(
            a: &S,
            lo: &mut usize,
            hi: usize,
            chain: &mut ConsumerChain<'_>,
            cx: &mut Ctx<'_>,
        ) -> Result<()> {
            let mut i = *lo;
            if i < hi {
                // consume the range up front so an error leaves the cursor exhausted
                *lo = hi;
                loop {
                    chain.accept(a.at(i), cx)?;
                    i += 1;
                    if i >= hi {
                        break;
                    }
                }
            }
            Ok(())
        }
        match self.data {
            Dataset::Ints(a) => drive(&**a, &mut self.lo, self.hi, chain, cx),
            Dataset::Refs(r) => drive(&**r, &mut self.lo, self.hi, chain, cx),
        }
    }
}

/// Pushes `[lo, hi)` of the query's source through a fresh chain.
pub fn run_push_range(
    query: &QueryExpr,
    datasets: &Datasets,
    cache: &CallSiteCache,
    lo: usize,
    hi: usize,
    counters: &mut CounterSet,
) -> Result<Value> {
    let src = datasets.resolve(query.source())?;
    let mut cx = Ctx::new(cache, counters);
    let mut chain = wrap_consumers(query, datasets, &mut cx)?;
    SplitCursor::range(src, lo, hi).for_each_remaining(&mut chain, &mut cx)?;
    Ok(chain.result())
}

pub fn run_push_with(
    query: &QueryExpr,
    datasets: &Datasets,
    cache: &CallSiteCache,
    counters: &mut CounterSet,
) -> Result<Value> {
    run_push_range(query, datasets, cache, 0, usize::MAX, counters)
}

pub fn run_push(
    query: &QueryExpr,
    datasets: &Datasets,
    counters: &mut CounterSet,
) -> Result<Value> {
    let cache = query.call_sites();
    run_push_with(query, datasets, &cache, counters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ScalarExpr as E;
    use crate::lambda::Lambda;

    fn sq() -> Lambda {
        Lambda::unary(E::mul(E::param(0), E::param(0))).unwrap()
    }

    fn even() -> Lambda {
        Lambda::unary(E::eq(E::rem(E::param(0), E::constant(2)), E::constant(0))).unwrap()
    }

    fn divisible(k: i64) -> Lambda {
        Lambda::unary(E::eq(E::rem(E::param(0), E::constant(k)), E::constant(0))).unwrap()
    }

    fn ints(v: Vec<Value>) -> Datasets {
        Datasets::new().with("a", Dataset::ints(v))
    }

    #[test]
    fn chain_structure() {
        let d = ints(vec![]);
        let q = QueryExpr::new(
            "a",
            vec![Stage::map(sq()), Stage::filter(even())],
            Terminal::Sum,
        )
        .unwrap();
        let cache = q.call_sites();
        let mut c = CounterSet::default();
        let chain = wrap_consumers(&q, &d, &mut Ctx::new(&cache, &mut c)).unwrap();
        assert_eq!(chain.wrappers(), 2);

        let q0 = QueryExpr::new("a", vec![], Terminal::Sum).unwrap();
        let chain = wrap_consumers(&q0, &d, &mut Ctx::new(&cache, &mut c)).unwrap();
        assert_eq!(chain.wrappers(), 0);
    }

    #[test]
    fn accept_through_filter_then_map() {
        let d = ints(vec![]);
        let q = QueryExpr::new(
            "a",
            vec![Stage::filter(even()), Stage::map(sq())],
            Terminal::Sum,
        )
        .unwrap();
        let cache = q.call_sites();
        let mut c = CounterSet::default();
        let mut cx = Ctx::new(&cache, &mut c);
        let mut chain = wrap_consumers(&q, &d, &mut cx).unwrap();
        chain.accept(4, &mut cx).unwrap();
        assert_eq!(chain.result(), 16);
        chain.accept(3, &mut cx).unwrap();
        assert_eq!(chain.result(), 16);
    }

    #[test]
    fn for_each_remaining_counts_and_exhausts() {
        let data = Dataset::ints(vec![5, 6, 7]);
        let d = ints(vec![]);
        let q = QueryExpr::new("a", vec![], Terminal::Count).unwrap();
        let cache = q.call_sites();
        let mut c = CounterSet::default();
        let mut cx = Ctx::new(&cache, &mut c);
        let mut chain = wrap_consumers(&q, &d, &mut cx).unwrap();
        let mut cur = SplitCursor::new(&data);
        cur.for_each_remaining(&mut chain, &mut cx).unwrap();
        assert_eq!(chain.result(), 3);
        assert_eq!(cur.estimate_size(), 0);
        assert_eq!(cur.lo(), cur.hi());

        let empty = Dataset::ints(vec![]);
        let mut chain = wrap_consumers(&q, &d, &mut cx).unwrap();
        SplitCursor::new(&empty)
            .for_each_remaining(&mut chain, &mut cx)
            .unwrap();
        assert_eq!(chain.result(), 0);
    }

    #[test]
    fn try_advance_matches_bulk_traversal() {
        let data = Dataset::ints((0..20).collect::<Vec<_>>());
        let d = ints(vec![]);
        let q = QueryExpr::new(
            "a",
            vec![Stage::filter(even()), Stage::map(sq())],
            Terminal::Sum,
        )
        .unwrap();
        let cache = q.call_sites();
        let mut c1 = CounterSet::default();
        let mut c2 = CounterSet::default();

        let mut cx = Ctx::new(&cache, &mut c1);
        let mut a = wrap_consumers(&q, &d, &mut cx).unwrap();
        SplitCursor::new(&data)
            .for_each_remaining(&mut a, &mut cx)
            .unwrap();

        let mut cx = Ctx::new(&cache, &mut c2);
        let mut b = wrap_consumers(&q, &d, &mut cx).unwrap();
        let mut cur = SplitCursor::new(&data);
        let mut pushed = 0;
        while cur.try_advance(&mut b, &mut cx).unwrap() {
            pushed += 1;
        }
        assert_eq!(pushed, 20);
        assert_eq!(a.result(), b.result());
        assert_eq!(c1.stages, c2.stages);
    }

    #[test]
    fn try_advance_single_and_empty() {
        let one = Dataset::ints(vec![9]);
        let d = ints(vec![]);
        let q = QueryExpr::new("a", vec![], Terminal::Sum).unwrap();
        let cache = q.call_sites();
        let mut c = CounterSet::default();
        let mut cx = Ctx::new(&cache, &mut c);
        let mut chain = wrap_consumers(&q, &d, &mut cx).unwrap();
        let mut cur = SplitCursor::new(&one);
        assert!(cur.try_advance(&mut chain, &mut cx).unwrap());
        assert!(!cur.try_advance(&mut chain, &mut cx).unwrap());
        assert_eq!(chain.result(), 9);

        let empty = Dataset::ints(vec![]);
        let before = cx.counters.clone();
        assert!(!SplitCursor::new(&empty)
            .try_advance(&mut chain, &mut cx)
            .unwrap());
        assert_eq!(*cx.counters, before);
    }

    #[test]
    fn try_split_halves() {
        let data = Dataset::range(100);
        let mut c = SplitCursor::new(&data);
        let p = c.try_split(10).unwrap();
        assert_eq!((p.lo(), p.hi()), (0, 50));
        assert_eq!((c.lo(), c.hi()), (50, 100));
        assert_eq!(p.estimate_size() + c.estimate_size(), 100);

        let small = Dataset::range(10);
        let mut c = SplitCursor::new(&small);
        assert!(c.try_split(10).is_none());
        assert_eq!(c.estimate_size(), 10);
    }

    #[test]
    fn results() {
        let mut c = CounterSet::default();
        let q = QueryExpr::new("a", vec![Stage::map(sq())], Terminal::Sum).unwrap();
        let brute: i64 = (0..10i64).map(|x| x * x).sum();
        assert_eq!(brute, 9 * 10 * 19 / 6);
        assert_eq!(run_push(&q, &ints((0..10).collect()), &mut c).unwrap(), 285);

        let q = QueryExpr::new("a", vec![], Terminal::Sum).unwrap();
        assert_eq!(run_push(&q, &ints(vec![]), &mut c).unwrap(), 0);

        let refs = QueryExpr::new(
            "r",
            vec![Stage::filter(divisible(3)), Stage::filter(divisible(5))],
            Terminal::Count,
        )
        .unwrap();
        let d = Datasets::new().with("r", Dataset::refs(0..10));
        let brute = (0..10).filter(|v| v % 3 == 0 && v % 5 == 0).count() as i64;
        assert_eq!(run_push(&refs, &d, &mut c).unwrap(), brute);
        assert_eq!(brute, 1);
    }

    #[test]
    fn dispatches_equal_elements_entering() {
        let q = QueryExpr::new(
            "a",
            vec![Stage::filter(even()), Stage::map(sq())],
            Terminal::Sum,
        )
        .unwrap();
        let mut c = CounterSet::default();
        run_push(&q, &ints((0..10).collect()), &mut c).unwrap();
        let l = q.layout();
        assert_eq!(c.stage(l.source).control_dispatches, 0);
        assert_eq!(c.stage(l.stages[0]).control_dispatches, 10);
        assert_eq!(c.stage(l.stages[1]).control_dispatches, 5);
        assert_eq!(c.stage(l.terminal).control_dispatches, 5);
    }

    #[test]
    fn cart_captures_once_per_outer_element() {
        let cart = QueryExpr::new(
            "a",
            vec![Stage::flat_map(
                "b",
                vec![Stage::map(
                    Lambda::new(1, 1, E::mul(E::param(0), E::capture(0))).unwrap(),
                )],
            )],
            Terminal::Sum,
        )
        .unwrap();
        let d = Datasets::new()
            .with("a", Dataset::ints(vec![1, 2, 3]))
            .with("b", Dataset::ints(vec![10, 20]));
        let mut c = CounterSet::default();
        assert_eq!(run_push(&cart, &d, &mut c).unwrap(), 180);
        assert_eq!(c.total_instantiations(), 3);
        assert_eq!(c.total_link_events(), 1);
        assert_eq!(c.total_lambda_applies(), 6);
    }
}
