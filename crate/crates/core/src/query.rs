//! Pipeline representation: a source, lazy stages, and one terminal.

use std::fmt;
use std::sync::Arc;

use crate::dataset::DatasetRef;
use crate::error::{Error, Result};
use crate::lambda::{CallSiteCache, Lambda};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stage {
    Map(Arc<Lambda>),
    Filter(Arc<Lambda>),
    /// Nested iteration over `source` for every upstream element. Inner
    /// lambdas see the upstream element as `Capture(0)`.
    FlatMap {
        source: DatasetRef,
        stages: Vec<Stage>,
    },
}

impl Stage {
    pub fn map(l: Lambda) -> Self {
        Stage::Map(Arc::new(l))
    }

    pub fn filter(l: Lambda) -> Self {
        Stage::Filter(Arc::new(l))
    }

    pub fn flat_map(source: impl Into<DatasetRef>, stages: Vec<Stage>) -> Self {
        Stage::FlatMap {
            source: source.into(),
            stages,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Stage::Map(_) => "map",
            Stage::Filter(_) => "filter",
            Stage::FlatMap { .. } => "flatMap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Terminal {
    Sum,
    Count,
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Terminal::Sum => "sum",
            Terminal::Count => "count",
        })
    }
}

/// A validated, immutable pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryExpr {
    source: DatasetRef,
    stages: Vec<Stage>,
    terminal: Terminal,
}

fn check_lambda(stage: &Stage, l: &Lambda, max_captures: usize) -> Result<()> {
    if l.arity() != 1 {
        return Err(Error::InvalidPipeline(format!(
            "{} lambda must take one argument, takes {}",
            stage.label(),
            l.arity()
        )));
    }
    if l.captures() > max_captures {
        return Err(Error::InvalidPipeline(format!(
            "{} lambda declares {} capture slots, at most {} available here",
            stage.label(),
            l.captures(),
            max_captures
        )));
    }
    match stage {
        Stage::Filter(_) if !l.is_predicate() => Err(Error::InvalidPipeline(
            "filter predicate must be comparison-rooted".into(),
        )),
        Stage::Map(_) if l.is_predicate() => Err(Error::InvalidPipeline(
            "map lambda must be arithmetic, not a comparison".into(),
        )),
        _ => Ok(()),
    }
}

impl QueryExpr {
    pub fn new(
        source: impl Into<DatasetRef>,
        stages: Vec<Stage>,
        terminal: Terminal,
    ) -> Result<Self> {
        let mut flat_maps = 0;
        for s in &stages {
            match s {
                Stage::Map(l) | Stage::Filter(l) => check_lambda(s, l, 0)?,
                Stage::FlatMap { stages: inner, .. } => {
                    flat_maps += 1;
                    for t in inner {
                        match t {
                            Stage::Map(l) | Stage::Filter(l) => check_lambda(t, l, 1)?,
                            Stage::FlatMap { .. } => {
                                return Err(Error::InvalidPipeline(
                                    "flatMap nested inside flatMap exceeds depth 2".into(),
                                ))
                            }
                        }
                    }
                }
            }
        }
        if flat_maps > 1 {
            return Err(Error::InvalidPipeline(format!(
                "{flat_maps} flatMap stages; at most one nested loop is supported"
            )));
        }
        Ok(QueryExpr {
            source: source.into(),
            stages,
            terminal,
        })
    }

    pub fn source(&self) -> &DatasetRef {
        &self.source
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn terminal(&self) -> Terminal {
        self.terminal
    }

    pub fn has_flat_map(&self) -> bool {
        self.stages
            .iter()
            .any(|s| matches!(s, Stage::FlatMap { .. }))
    }

    /// Every lambda in pipeline order, inner stages included.
    pub fn lambdas(&self) -> Vec<&Arc<Lambda>> {
        fn go<'a>(stages: &'a [Stage], out: &mut Vec<&'a Arc<Lambda>>) {
            for s in stages {
                match s {
                    Stage::Map(l) | Stage::Filter(l) => out.push(l),
                    Stage::FlatMap { stages, .. } => go(stages, out),
                }
            }
        }
        let mut out = Vec::new();
        go(&self.stages, &mut out);
        out
    }

    /// A fresh cache with every lambda of this query registered.
    pub fn call_sites(&self) -> CallSiteCache {
        let mut cache = CallSiteCache::new();
        for l in self.lambdas() {
            cache.register(l);
        }
        cache
    }

    pub fn layout(&self) -> StageLayout {
        StageLayout::of(self)
    }
}

pub fn build_query(
    source: impl Into<DatasetRef>,
    stages: Vec<Stage>,
    terminal: Terminal,
) -> Result<QueryExpr> {
    QueryExpr::new(source, stages, terminal)
}

impl fmt::Display for QueryExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn stages(s: &[Stage], f: &mut fmt::Formatter<'_>) -> fmt::Result {
            for st in s {
                match st {
                    Stage::Map(l) => write!(f, " |> map({l})")?,
                    Stage::Filter(l) => write!(f, " |> filter({l})")?,
                    Stage::FlatMap {
                        source,
                        stages: inner,
                    } => {
                        write!(f, " |> flatMap({source}")?;
                        stages(inner, f)?;
                        f.write_str(")")?;
                    }
                }
            }
            Ok(())
        }
        write!(f, "{}", self.source)?;
        stages(&self.stages, f)?;
        write!(f, " |> {}", self.terminal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotRole {
    Source,
    Map,
    Filter,
    FlatMap,
    InnerSource,
    InnerMap,
    InnerFilter,
    Terminal,
}

/// Counter slot of the flat-map stage's nested pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InnerSlots {
    pub source: usize,
    pub stages: Vec<usize>,
}

/// Assignment of counter slots to pipeline nodes.
///
/// Slot 0 is the source, then each stage in order; a flat-map stage is
/// followed directly by its inner source and inner stages. The terminal
/// takes the last slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageLayout {
    pub roles: Vec<SlotRole>,
    pub source: usize,
    pub stages: Vec<usize>,
    pub inner: Option<InnerSlots>,
    pub terminal: usize,
}

impl StageLayout {
    pub fn of(q: &QueryExpr) -> Self {
        let mut roles = vec![SlotRole::Source];
        let mut stages = Vec::new();
        let mut inner = None;
        for s in &q.stages {
            stages.push(roles.len());
            match s {
                Stage::Map(_) => roles.push(SlotRole::Map),
                Stage::Filter(_) => roles.push(SlotRole::Filter),
                Stage::FlatMap { stages: nested, .. } => {
                    roles.push(SlotRole::FlatMap);
                    let source = roles.len();
                    roles.push(SlotRole::InnerSource);
                    let mut slots = Vec::new();
                    for t in nested {
                        slots.push(roles.len());
                        roles.push(match t {
                            Stage::Filter(_) => SlotRole::InnerFilter,
                            _ => SlotRole::InnerMap,
                        });
                    }
                    inner = Some(InnerSlots {
                        source,
                        stages: slots,
                    });
                }
            }
        }
        let terminal = roles.len();
        roles.push(SlotRole::Terminal);
        StageLayout {
            roles,
            source: 0,
            stages,
            inner,
            terminal,
        }
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ScalarExpr as E;

    fn sq() -> Lambda {
        Lambda::unary(E::mul(E::param(0), E::param(0))).unwrap()
    }

    fn even() -> Lambda {
        Lambda::unary(E::eq(E::rem(E::param(0), E::constant(2)), E::constant(0))).unwrap()
    }

    fn times_outer() -> Lambda {
        Lambda::new(1, 1, E::mul(E::param(0), E::capture(0))).unwrap()
    }

    #[test]
    fn valid_queries() {
        let q = build_query("a", vec![Stage::map(sq())], Terminal::Sum).unwrap();
        assert_eq!(q.stages().len(), 1);
        let q = build_query("a", vec![], Terminal::Count).unwrap();
        assert!(q.stages().is_empty());
        let cart = build_query(
            "a",
            vec![Stage::flat_map("b", vec![Stage::map(times_outer())])],
            Terminal::Sum,
        )
        .unwrap();
        assert!(cart.has_flat_map());
    }

    #[test]
    fn nested_flat_map_rejected() {
        let r = build_query(
            "a",
            vec![Stage::flat_map("b", vec![Stage::flat_map("c", vec![])])],
            Terminal::Sum,
        );
        assert!(matches!(r, Err(Error::InvalidPipeline(_))));
    }

    #[test]
    fn two_flat_maps_rejected() {
        let r = build_query(
            "a",
            vec![Stage::flat_map("b", vec![]), Stage::flat_map("c", vec![])],
            Terminal::Sum,
        );
        assert!(matches!(r, Err(Error::InvalidPipeline(_))));
    }

    #[test]
    fn predicate_shape_enforced() {
        assert!(matches!(
            build_query("a", vec![Stage::filter(sq())], Terminal::Count),
            Err(Error::InvalidPipeline(_))
        ));
        assert!(matches!(
            build_query("a", vec![Stage::map(even())], Terminal::Count),
            Err(Error::InvalidPipeline(_))
        ));
    }

    #[test]
    fn captures_only_inside_flat_map() {
        assert!(matches!(
            build_query("a", vec![Stage::map(times_outer())], Terminal::Sum),
            Err(Error::InvalidPipeline(_))
        ));
    }

    #[test]
    fn layout_numbering() {
        let q = build_query(
            "a",
            vec![
                Stage::filter(even()),
                Stage::flat_map("b", vec![Stage::map(times_outer()), Stage::filter(even())]),
                Stage::map(sq()),
            ],
            Terminal::Sum,
        )
        .unwrap();
        let l = q.layout();
        assert_eq!(l.stages, vec![1, 2, 6]);
        assert_eq!(
            l.inner,
            Some(InnerSlots {
                source: 3,
                stages: vec![4, 5]
            })
        );
        assert_eq!(l.terminal, 7);
        assert_eq!(l.len(), 8);
        assert_eq!(q.call_sites().site_count(), 4);
    }

    #[test]
    fn display() {
        let q = build_query(
            "xs",
            vec![Stage::filter(even()), Stage::map(sq())],
            Terminal::Sum,
        )
        .unwrap();
        assert_eq!(
            q.to_string(),
            "xs |> filter(\\p0 -> (p0 % 2) == 0) |> map(\\p0 -> (p0 * p0)) |> sum"
        );
    }
}
