//! External iteration: every stage is a cursor object pulling from its
//! upstream through a dynamically dispatched `advance`/`get` pair.
//!
//! Each call a cursor *receives* is charged to that cursor's
//! `control_dispatches`, so a stage that emits `k` elements during one pass
//! is charged `k + 1` advances and `k` gets. Mappers and predicates run
//! inside `advance`.

use std::sync::Arc;

use crate::counters::CounterSet;
use crate::dataset::{Dataset, Datasets, Elements};
use crate::error::{Error, Result};
use crate::exec::{bind_inner, fold, BoundStage, Ctx};
use crate::expr::Value;
use crate::lambda::{CallSiteCache, Closure};
use crate::query::{QueryExpr, SlotRole, Stage};

pub trait PullCursor {
    /// Moves to the next element; `false` once exhausted.
    fn advance(&mut self, cx: &mut Ctx<'_>) -> Result<bool>;
    /// Current element. Only valid after `advance` returned `true`.
    fn get(&mut self, cx: &mut Ctx<'_>) -> Result<Value>;
    fn role(&self) -> SlotRole;
    fn upstream(&self) -> Option<&dyn PullCursor>;
}

struct SourceCursor<'d, S: Elements + ?Sized> {
    data: &'d S,
    next: usize,
    current: Option<Value>,
    slot: usize,
    role: SlotRole,
}

impl<'d, S: Elements + ?Sized> PullCursor for SourceCursor<'d, S> {
    fn advance(&mut self, cx: &mut Ctx<'_>) -> Result<bool> {
        cx.dispatch(self.slot);
        if self.next < self.data.len() {
            self.current = Some(self.data.at(self.next));
            self.next += 1;
            Ok(true)
        } else {
            self.current = None;
            Ok(false)
        }
    }

    fn get(&mut self, cx: &mut Ctx<'_>) -> Result<Value> {
        cx.dispatch(self.slot);
        self.current.ok_or(Error::GetBeforeAdvance)
    }

    fn role(&self) -> SlotRole {
        self.role
    }

    fn upstream(&self) -> Option<&dyn PullCursor> {
        None
    }
}

fn source_cursor<'d>(data: &'d Dataset, slot: usize, role: SlotRole) -> Box<dyn PullCursor + 'd> {
    match data {
        Dataset::Ints(a) => Box::new(SourceCursor {
            data: &**a,
            next: 0,
            current: None,
            slot,
            role,
        }),
        Dataset::Refs(r) => Box::new(SourceCursor {
            data: &**r,
            next: 0,
            current: None,
            slot,
            role,
        }),
    }
}

struct MapCursor<'d> {
    up: Box<dyn PullCursor + 'd>,
    f: Arc<Closure>,
    current: Option<Value>,
    slot: usize,
    role: SlotRole,
}

impl PullCursor for MapCursor<'_> {
    fn advance(&mut self, cx: &mut Ctx<'_>) -> Result<bool> {
        cx.dispatch(self.slot);
        if self.up.advance(cx)? {
            let v = self.up.get(cx)?;
            cx.applied(self.slot);
            self.current = Some(self.f.apply(v, cx.counters)?);
            Ok(true)
        } else {
            self.current = None;
            Ok(false)
        }
    }

    fn get(&mut self, cx: &mut Ctx<'_>) -> Result<Value> {
        cx.dispatch(self.slot);
        self.current.ok_or(Error::GetBeforeAdvance)
    }

    fn role(&self) -> SlotRole {
        self.role
    }

    fn upstream(&self) -> Option<&dyn PullCursor> {
        Some(&*self.up)
    }
}

struct FilterCursor<'d> {
    up: Box<dyn PullCursor + 'd>,
    p: Arc<Closure>,
    current: Option<Value>,
    slot: usize,
    role: SlotRole,
}

impl PullCursor for FilterCursor<'_> {
    fn advance(&mut self, cx: &mut Ctx<'_>) -> Result<bool> {
        cx.dispatch(self.slot);
        while self.up.advance(cx)? {
            let v = self.up.get(cx)?;
            cx.applied(self.slot);
            if self.p.test(v, cx.counters)? {
                self.current = Some(v);
                return Ok(true);
            }
        }
        self.current = None;
        Ok(false)
    }

    fn get(&mut self, cx: &mut Ctx<'_>) -> Result<Value> {
        cx.dispatch(self.slot);
        self.current.ok_or(Error::GetBeforeAdvance)
    }

    fn role(&self) -> SlotRole {
        self.role
    }

    fn upstream(&self) -> Option<&dyn PullCursor> {
        Some(&*self.up)
    }
}

fn wrap<'d>(
    up: Box<dyn PullCursor + 'd>,
    stage: &BoundStage,
    f: Arc<Closure>,
    role: SlotRole,
) -> Box<dyn PullCursor + 'd> {
    if stage.filter {
        Box::new(FilterCursor {
            up,
            p: f,
            current: None,
            slot: stage.slot,
            role,
        })
    } else {
        Box::new(MapCursor {
            up,
            f,
            current: None,
            slot: stage.slot,
            role,
        })
    }
}

/// Drains a fresh inner cursor chain per upstream element.
struct FlatMapCursor<'d> {
    outer: Box<dyn PullCursor + 'd>,
    inner_data: &'d Dataset,
    inner_source_slot: usize,
    inner_stages: Vec<BoundStage>,
    inner: Option<Box<dyn PullCursor + 'd>>,
    current: Option<Value>,
    slot: usize,
}

impl<'d> FlatMapCursor<'d> {
    fn open_inner(&self, x: Value, cx: &mut Ctx<'_>) -> Result<Box<dyn PullCursor + 'd>> {
        let mut c = source_cursor(
            self.inner_data,
            self.inner_source_slot,
            SlotRole::InnerSource,
        );
        for s in &self.inner_stages {
            let env: &[Value] = if s.captures == 0 {
                &[]
            } else {
                std::slice::from_ref(&x)
            };
            let f = cx.cache.capture_at(s.site, env, cx.counters)?;
            let role = if s.filter {
                SlotRole::InnerFilter
            } else {
                SlotRole::InnerMap
            };
            c = wrap(c, s, f, role);
        }
        Ok(c)
    }
}

impl PullCursor for FlatMapCursor<'_> {
    fn advance(&mut self, cx: &mut Ctx<'_>) -> Result<bool> {
        cx.dispatch(self.slot);
        loop {
            if let Some(inner) = self.inner.as_mut() {
                if inner.advance(cx)? {
                    self.current = Some(inner.get(cx)?);
                    return Ok(true);
                }
                self.inner = None;
            }
            if !self.outer.advance(cx)? {
                self.current = None;
                return Ok(false);
            }
            let x = self.outer.get(cx)?;
            self.inner = Some(self.open_inner(x, cx)?);
        }
    }

    fn get(&mut self, cx: &mut Ctx<'_>) -> Result<Value> {
        cx.dispatch(self.slot);
        self.current.ok_or(Error::GetBeforeAdvance)
    }

    fn role(&self) -> SlotRole {
        SlotRole::FlatMap
    }

    fn upstream(&self) -> Option<&dyn PullCursor> {
        Some(&*self.outer)
    }
}

/// An opened cursor chain; `advance`/`get` go to the last stage.
pub struct PullChain<'d> {
    top: Box<dyn PullCursor + 'd>,
}

impl<'d> PullChain<'d> {
    pub fn advance(&mut self, cx: &mut Ctx<'_>) -> Result<bool> {
        self.top.advance(cx)
    }

    pub fn get(&mut self, cx: &mut Ctx<'_>) -> Result<Value> {
        self.top.get(cx)
    }

    /// Cursor roles from source to last stage.
    pub fn roles(&self) -> Vec<SlotRole> {
        let mut out = Vec::new();
        let mut c: Option<&dyn PullCursor> = Some(&*self.top);
        while let Some(cur) = c {
            out.push(cur.role());
            c = cur.upstream();
        }
        out.reverse();
        out
    }

    pub fn len(&self) -> usize {
        self.roles().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Builds the cursor chain for `query`. No element is consumed.
pub fn open<'d>(
    query: &QueryExpr,
    datasets: &'d Datasets,
    cx: &mut Ctx<'_>,
) -> Result<PullChain<'d>> {
    let layout = query.layout();
    let mut top = source_cursor(
        datasets.resolve(query.source())?,
        layout.source,
        SlotRole::Source,
    );
    for (stage, &slot) in query.stages().iter().zip(&layout.stages) {
        top = match stage {
            Stage::Map(l) | Stage::Filter(l) => {
                let bound = bind_inner(std::slice::from_ref(stage), &[slot], cx.cache)?[0];
                let f = cx.cache.capture(l, &[], cx.counters)?;
                let role = if bound.filter {
                    SlotRole::Filter
                } else {
                    SlotRole::Map
                };
                wrap(top, &bound, f, role)
            }
            Stage::FlatMap { source, stages } => {
                let inner = layout
                    .inner
                    .as_ref()
                    .expect("layout has inner slots for a flatMap");
                Box::new(FlatMapCursor {
                    outer: top,
                    inner_data: datasets.resolve(source)?,
                    inner_source_slot: inner.source,
                    inner_stages: bind_inner(stages, &inner.stages, cx.cache)?,
                    inner: None,
                    current: None,
                    slot,
                })
            }
        };
    }
    Ok(PullChain { top })
}

/// Runs `query` with a caller-provided cache (shared linkage state).
pub fn run_pull_with(
    query: &QueryExpr,
    datasets: &Datasets,
    cache: &CallSiteCache,
    counters: &mut CounterSet,
) -> Result<Value> {
    let mut cx = Ctx::new(cache, counters);
    let mut chain = open(query, datasets, &mut cx)?;
    let terminal = query.terminal();
    let mut acc: Value = 0;
    while chain.advance(&mut cx)? {
        acc = fold(terminal, acc, chain.get(&mut cx)?);
    }
    Ok(acc)
}

/// Drives the chain to exhaustion and folds with the terminal.
pub fn run_pull(
    query: &QueryExpr,
    datasets: &Datasets,
    counters: &mut CounterSet,
) -> Result<Value> {
    let cache = query.call_sites();
    run_pull_with(query, datasets, &cache, counters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ScalarExpr as E;
    use crate::lambda::Lambda;
    use crate::query::Terminal;

    fn sq() -> Lambda {
        Lambda::unary(E::mul(E::param(0), E::param(0))).unwrap()
    }

    fn even() -> Lambda {
        Lambda::unary(E::eq(E::rem(E::param(0), E::constant(2)), E::constant(0))).unwrap()
    }

    fn ds(v: Vec<Value>) -> Datasets {
        Datasets::new().with("a", Dataset::ints(v))
    }

    #[test]
    fn open_builds_one_cursor_per_stage_plus_source() {
        let q = QueryExpr::new(
            "a",
            vec![Stage::map(sq()), Stage::filter(even())],
            Terminal::Sum,
        )
        .unwrap();
        let d = ds(vec![1, 2]);
        let cache = q.call_sites();
        let mut c = CounterSet::default();
        let chain = open(&q, &d, &mut Ctx::new(&cache, &mut c)).unwrap();
        assert_eq!(chain.len(), 3);
        assert_eq!(
            chain.roles(),
            vec![SlotRole::Source, SlotRole::Map, SlotRole::Filter]
        );
        // nothing pulled yet
        assert_eq!(c.total_lambda_applies(), 0);
        assert_eq!(c.total_control_dispatches(), 0);

        let q0 = QueryExpr::new("a", vec![], Terminal::Count).unwrap();
        let chain = open(&q0, &d, &mut Ctx::new(&cache, &mut c)).unwrap();
        assert_eq!(chain.len(), 1);
    }

    #[test]
    fn missing_dataset() {
        let q = QueryExpr::new("nope", vec![], Terminal::Count).unwrap();
        let cache = q.call_sites();
        let mut c = CounterSet::default();
        let d = ds(vec![]);
        let r = open(&q, &d, &mut Ctx::new(&cache, &mut c)).map(|_| ());
        assert_eq!(r, Err(Error::UnresolvedDataset("nope".into())));
    }

    #[test]
    fn map_sequence_by_hand() {
        let q = QueryExpr::new("a", vec![Stage::map(sq())], Terminal::Sum).unwrap();
        let d = ds(vec![1, 2, 3]);
        let cache = q.call_sites();
        let mut c = CounterSet::default();
        let mut cx = Ctx::new(&cache, &mut c);
        let mut chain = open(&q, &d, &mut cx).unwrap();
        let mut seen = vec![];
        while chain.advance(&mut cx).unwrap() {
            seen.push(chain.get(&mut cx).unwrap());
        }
        assert_eq!(seen, vec![1, 4, 9]);
        assert!(!chain.advance(&mut cx).unwrap());
    }

    #[test]
    fn filter_with_no_survivors() {
        let q = QueryExpr::new("a", vec![Stage::filter(even())], Terminal::Count).unwrap();
        let d = ds(vec![1, 3, 5]);
        let cache = q.call_sites();
        let mut c = CounterSet::default();
        let mut cx = Ctx::new(&cache, &mut c);
        let mut chain = open(&q, &d, &mut cx).unwrap();
        assert!(!chain.advance(&mut cx).unwrap());
    }

    #[test]
    fn get_before_advance() {
        let q = QueryExpr::new("a", vec![Stage::map(sq())], Terminal::Sum).unwrap();
        let d = ds(vec![1]);
        let cache = q.call_sites();
        let mut c = CounterSet::default();
        let mut cx = Ctx::new(&cache, &mut c);
        let mut chain = open(&q, &d, &mut cx).unwrap();
        assert_eq!(chain.get(&mut cx), Err(Error::GetBeforeAdvance));
        assert!(chain.advance(&mut cx).unwrap());
        assert_eq!(chain.get(&mut cx), Ok(1));
        assert!(!chain.advance(&mut cx).unwrap());
        assert_eq!(chain.get(&mut cx), Err(Error::GetBeforeAdvance));
    }

    #[test]
    fn dispatch_law_on_small_array() {
        // filter(even) then map(sq) over 0..10: source emits 10, filter 5, map 5
        let q = QueryExpr::new(
            "a",
            vec![Stage::filter(even()), Stage::map(sq())],
            Terminal::Sum,
        )
        .unwrap();
        let d = ds((0..10).collect());
        let mut c = CounterSet::default();
        assert_eq!(run_pull(&q, &d, &mut c).unwrap(), 120);
        let l = q.layout();
        assert_eq!(c.stage(l.source).control_dispatches, 2 * 10 + 1);
        assert_eq!(c.stage(l.stages[0]).control_dispatches, 2 * 5 + 1);
        assert_eq!(c.stage(l.stages[1]).control_dispatches, 2 * 5 + 1);
        assert_eq!(c.stage(l.stages[0]).lambda_applies, 10);
        assert_eq!(c.stage(l.stages[1]).lambda_applies, 5);
        assert_eq!(c.stage(l.terminal), Default::default());
    }

    #[test]
    fn sums() {
        let mut c = CounterSet::default();
        let q = QueryExpr::new("a", vec![], Terminal::Sum).unwrap();
        assert_eq!(run_pull(&q, &ds((0..10).collect()), &mut c).unwrap(), 45);

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
        let mut brute = 0;
        for a in [1, 2, 3] {
            for b in [10, 20] {
                brute += a * b;
            }
        }
        let mut c = CounterSet::default();
        assert_eq!(run_pull(&cart, &d, &mut c).unwrap(), brute);
        assert_eq!(brute, 180);
        let l = cart.layout();
        let inner = l.inner.unwrap();
        // three inner passes of two elements each
        assert_eq!(c.stage(inner.source).control_dispatches, 3 * (2 * 2 + 1));
        assert_eq!(c.stage(l.stages[0]).control_dispatches, 2 * 6 + 1);
        assert_eq!(c.total_instantiations(), 3);
    }
}
