use crate::counters::CounterSet;
use crate::expr::Value;
use crate::lambda::CallSiteCache;
use crate::query::Terminal;

/// Mutable per-run execution context threaded through engine calls.
pub struct Ctx<'a> {
    pub cache: &'a CallSiteCache,
    pub counters: &'a mut CounterSet,
}

impl<'a> Ctx<'a> {
    pub fn new(cache: &'a CallSiteCache, counters: &'a mut CounterSet) -> Self {
        Ctx { cache, counters }
    }

    #[inline]
    pub(crate) fn dispatch(&mut self, slot: usize) {
        self.counters.stage_mut(slot).control_dispatches += 1;
    }

    #[inline]
    pub(crate) fn applied(&mut self, slot: usize) {
        self.counters.stage_mut(slot).lambda_applies += 1;
    }
}

/// Folds one surviving element into a terminal accumulator.
#[inline]
pub(crate) fn fold(terminal: Terminal, acc: Value, v: Value) -> Value {
    match terminal {
        Terminal::Sum => acc.wrapping_add(v),
        Terminal::Count => acc.wrapping_add(1),
    }
}

/// A stage lambda resolved against the cache: where to find it and which
/// counter slot it charges.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BoundStage {
    pub slot: usize,
    pub site: usize,
    pub captures: usize,
    pub filter: bool,
}

pub(crate) fn bind_inner(
    stages: &[crate::query::Stage],
    slots: &[usize],
    cache: &CallSiteCache,
) -> crate::Result<Vec<BoundStage>> {
    use crate::query::Stage;
    stages
        .iter()
        .zip(slots)
        .map(|(s, &slot)| match s {
            Stage::Map(l) | Stage::Filter(l) => Ok(BoundStage {
                slot,
                site: cache
                    .site_index(l.site_id())
                    .ok_or(crate::Error::UnregisteredSite(l.site_id().0))?,
                captures: l.captures(),
                filter: matches!(s, Stage::Filter(_)),
            }),
            Stage::FlatMap { .. } => Err(crate::Error::InvalidPipeline(
                "flatMap nested inside flatMap exceeds depth 2".into(),
            )),
        })
        .collect()
}
