//! Compiles a pipeline into a loop nest with every lambda body inlined.
//!
//! Maps compose by substitution into a running body expression. Filters
//! become guards over the current body; when the body is no longer a plain
//! variable it is first bound to a per-iteration temporary so the guard and
//! the rest of the pipeline share one evaluation. A flat-map opens exactly
//! one nested loop whose lambdas see the outer element in place of
//! `Capture(0)`.
//!
//! # Plan text
//!
//! [`FusedPlan`]'s `Display` prints one line per loop level:
//!
//! ```text
//! loop <depth>: for <var> in 0..len(<dataset>) | <steps> | <accumulator>
//! ```
//!
//! `<steps>` is `-` or a `; `-separated list of `let tK = <expr>` and
//! `guard <predicate>` in evaluation order. `<accumulator>` is `-` on every
//! level except the innermost, where it reads `sum += <body>` or
//! `count += 1`. The outer element is `x`, the inner element `y`.

use std::fmt;

use crate::counters::CounterSet;
use crate::dataset::{Dataset, DatasetRef, Datasets, Elements};
use crate::error::{Error, Result};
use crate::expr::{Bindings, ScalarExpr, Value, Var};
use crate::lambda::Lambda;
use crate::query::{QueryExpr, Stage, Terminal};

/// Replaces `Param(0)` in `body` by `replacement` and `Capture(j)` by
/// `captures[j]`. Loop variables and constants are left untouched.
pub fn substitute(
    body: &ScalarExpr,
    replacement: &ScalarExpr,
    captures: &[ScalarExpr],
) -> Result<ScalarExpr> {
    Ok(match body {
        ScalarExpr::Const(_) | ScalarExpr::Var(_) => body.clone(),
        ScalarExpr::Param(0) => replacement.clone(),
        ScalarExpr::Param(i) => {
            return Err(Error::ArityMismatch {
                expected: 1,
                found: i + 1,
            })
        }
        ScalarExpr::Capture(j) => captures.get(*j).cloned().ok_or(Error::ArityMismatch {
            expected: captures.len(),
            found: j + 1,
        })?,
        ScalarExpr::Arith(op, l, r) => ScalarExpr::arith(
            *op,
            substitute(l, replacement, captures)?,
            substitute(r, replacement, captures)?,
        ),
        ScalarExpr::Cmp(op, l, r) => ScalarExpr::cmp(
            *op,
            substitute(l, replacement, captures)?,
            substitute(r, replacement, captures)?,
        ),
    })
}

/// Inlines a unary lambda applied to `arg`.
pub fn inline_lambda(
    lambda: &Lambda,
    arg: &ScalarExpr,
    captures: &[ScalarExpr],
) -> Result<ScalarExpr> {
    if lambda.arity() != 1 {
        return Err(Error::ArityMismatch {
            expected: 1,
            found: lambda.arity(),
        });
    }
    substitute(lambda.body(), arg, captures)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Let(Var, ScalarExpr),
    Guard(ScalarExpr),
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Let(v, e) => write!(f, "let {v} = {e}"),
            Step::Guard(e) => write!(f, "guard {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopLevel {
    pub source: DatasetRef,
    pub var: Var,
    pub steps: Vec<Step>,
}

impl LoopLevel {
    pub fn guards(&self) -> impl Iterator<Item = &ScalarExpr> {
        self.steps.iter().filter_map(|s| match s {
            Step::Guard(g) => Some(g),
            Step::Let(..) => None,
        })
    }
}

/// An imperative loop nest. Contains no lambdas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusedPlan {
    levels: Vec<LoopLevel>,
    body: ScalarExpr,
    terminal: Terminal,
    temps: u8,
}

impl FusedPlan {
    pub fn levels(&self) -> &[LoopLevel] {
        &self.levels
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn body(&self) -> &ScalarExpr {
        &self.body
    }

    pub fn terminal(&self) -> Terminal {
        self.terminal
    }

    pub fn guard_count(&self) -> usize {
        self.levels.iter().map(|l| l.guards().count()).sum()
    }

    /// All expressions of the plan (steps and body).
    pub fn expressions(&self) -> impl Iterator<Item = &ScalarExpr> {
        self.levels
            .iter()
            .flat_map(|l| {
                l.steps.iter().map(|s| match s {
                    Step::Let(_, e) | Step::Guard(e) => e,
                })
            })
            .chain(std::iter::once(&self.body))
    }

    /// True if no expression refers to a lambda parameter or capture slot.
    pub fn is_lambda_free(&self) -> bool {
        self.expressions().all(|e| {
            let mut free = true;
            e.walk(&mut |n| {
                if matches!(n, ScalarExpr::Param(_) | ScalarExpr::Capture(_)) {
                    free = false;
                }
            });
            free
        })
    }
}

impl fmt::Display for FusedPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let last = self.levels.len() - 1;
        for (d, level) in self.levels.iter().enumerate() {
            write!(
                f,
                "loop {d}: for {} in 0..len({}) | ",
                level.var, level.source
            )?;
            if level.steps.is_empty() {
                f.write_str("-")?;
            } else {
                for (i, s) in level.steps.iter().enumerate() {
                    if i > 0 {
                        f.write_str("; ")?;
                    }
                    write!(f, "{s}")?;
                }
            }
            f.write_str(" | ")?;
            if d == last {
                match self.terminal {
                    Terminal::Sum => write!(f, "sum += {}", self.body)?,
                    Terminal::Count => f.write_str("count += 1")?,
                }
            } else {
                f.write_str("-")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

struct Builder {
    levels: Vec<LoopLevel>,
    temps: u8,
}

impl Builder {
    fn level(&mut self) -> &mut LoopLevel {
        self.levels.last_mut().expect("at least one loop level")
    }

    /// Binds `e` to a temporary unless it is already atomic.
    fn share(&mut self, e: ScalarExpr) -> Result<ScalarExpr> {
        if matches!(e, ScalarExpr::Var(_) | ScalarExpr::Const(_)) {
            return Ok(e);
        }
        let t = Var::Temp(self.temps);
        self.temps = self
            .temps
            .checked_add(1)
            .ok_or_else(|| Error::InvalidPipeline("too many fused temporaries".into()))?;
        self.level().steps.push(Step::Let(t, e));
        Ok(ScalarExpr::Var(t))
    }

    fn stage(
        &mut self,
        cur: ScalarExpr,
        stage: &Stage,
        captures: &[ScalarExpr],
    ) -> Result<ScalarExpr> {
        match stage {
            Stage::Map(l) => inline_lambda(l, &cur, captures),
            Stage::Filter(l) => {
                let cur = self.share(cur)?;
                let guard = inline_lambda(l, &cur, captures)?;
                self.level().steps.push(Step::Guard(guard));
                Ok(cur)
            }
            Stage::FlatMap { .. } => Err(Error::InvalidPipeline(
                "flatMap nested inside flatMap exceeds depth 2".into(),
            )),
        }
    }
}

/// Fuses `query` into a loop nest.
pub fn optimize(query: &QueryExpr) -> Result<FusedPlan> {
    let mut b = Builder {
        levels: vec![LoopLevel {
            source: query.source().clone(),
            var: Var::Outer,
            steps: Vec::new(),
        }],
        temps: 0,
    };
    let mut cur = ScalarExpr::Var(Var::Outer);
    for stage in query.stages() {
        cur = match stage {
            Stage::FlatMap { source, stages } => {
                if b.levels.len() > 1 {
                    return Err(Error::InvalidPipeline(
                        "at most one flatMap can be fused".into(),
                    ));
                }
                let outer = b.share(cur)?;
                b.levels.push(LoopLevel {
                    source: source.clone(),
                    var: Var::Inner,
                    steps: Vec::new(),
                });
                let captures = [outer];
                let mut inner = ScalarExpr::Var(Var::Inner);
                for s in stages {
                    inner = b.stage(inner, s, &captures)?;
                }
                inner
            }
            s => b.stage(cur, s, &[])?,
        };
    }
    Ok(FusedPlan {
        levels: b.levels,
        body: cur,
        terminal: query.terminal(),
        temps: b.temps,
    })
}

struct Resolved<'d> {
    data: &'d Dataset,
    level: &'d LoopLevel,
}

#[inline]
fn run_steps(steps: &[Step], vars: &mut [Value]) -> Result<bool> {
    for s in steps {
        match s {
            Step::Let(v, e) => {
                let val = e.eval_int(&Bindings::loop_vars(vars))?;
                vars[v.slot()] = val;
            }
            Step::Guard(g) => {
                if !g.eval_bool(&Bindings::loop_vars(vars))? {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

fn exec_levels<S: Elements + ?Sized>(
    plan: &FusedPlan,
    outer: &S,
    lo: usize,
    hi: usize,
    inner: Option<&Resolved<'_>>,
    vars: &mut [Value],
) -> Result<Value> {
    let steps = &plan.levels[0].steps;
    let mut acc: Value = 0;
    for i in lo..hi {
        vars[Var::Outer.slot()] = outer.at(i);
        if !run_steps(steps, vars)? {
            continue;
        }
        match inner {
            None => acc = accumulate(plan, acc, vars)?,
            Some(r) => {
                let n = r.data.len();
                for j in 0..n {
                    vars[Var::Inner.slot()] = r.data.get(j);
                    if run_steps(&r.level.steps, vars)? {
                        acc = accumulate(plan, acc, vars)?;
                    }
                }
            }
        }
    }
    Ok(acc)
}

#[inline]
fn accumulate(plan: &FusedPlan, acc: Value, vars: &[Value]) -> Result<Value> {
    Ok(match plan.terminal {
        Terminal::Sum => acc.wrapping_add(plan.body.eval_int(&Bindings::loop_vars(vars))?),
        Terminal::Count => acc.wrapping_add(1),
    })
}

/// Executes the outer loop over `[lo, hi)` of its dataset (clamped).
pub fn exec_fused_range(
    plan: &FusedPlan,
    datasets: &Datasets,
    lo: usize,
    hi: usize,
) -> Result<Value> {
    let outer = datasets.resolve(&plan.levels[0].source)?;
    let inner = match plan.levels.get(1) {
        Some(level) => Some(Resolved {
            data: datasets.resolve(&level.source)?,
            level,
        }),
        None => None,
    };
    let hi = hi.min(outer.len());
    let lo = lo.min(hi);
    let mut vars = vec![0; 2 + plan.temps as usize];
    match outer {
        Dataset::Ints(a) => exec_levels(plan, &**a, lo, hi, inner.as_ref(), &mut vars),
        Dataset::Refs(r) => exec_levels(plan, &**r, lo, hi, inner.as_ref(), &mut vars),
    }
}

/// Executes a fused plan. The counters are accepted for interface symmetry
/// with the other engines and are never touched.
pub fn exec_fused(
    plan: &FusedPlan,
    datasets: &Datasets,
    _counters: &mut CounterSet,
) -> Result<Value> {
    exec_fused_range(plan, datasets, 0, usize::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{eval_scalar, Scalar, ScalarExpr as E};

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
    fn substitute_square() {
        let y1 = E::add(E::var(Var::Outer), E::constant(1));
        let out = substitute(sq().body(), &y1, &[]).unwrap();
        assert_eq!(out, E::mul(y1.clone(), y1));
        assert_eq!(out.to_string(), "((x + 1) * (x + 1))");
    }

    #[test]
    fn substitute_identity() {
        let e = E::mul(E::constant(3), E::var(Var::Inner));
        assert_eq!(substitute(&E::param(0), &e, &[]).unwrap(), e);
    }

    #[test]
    fn substitute_arity_errors() {
        assert!(matches!(
            substitute(&E::param(1), &E::constant(0), &[]),
            Err(Error::ArityMismatch { .. })
        ));
        assert!(matches!(
            substitute(&E::capture(0), &E::constant(0), &[]),
            Err(Error::ArityMismatch { .. })
        ));
        let binary = Lambda::new(2, 0, E::param(1)).unwrap();
        assert!(matches!(
            inline_lambda(&binary, &E::constant(0), &[]),
            Err(Error::ArityMismatch { .. })
        ));
    }

    #[test]
    fn composition_matches_sequential_evaluation() {
        // f(g(v)) two ways
        let f = E::sub(E::mul(E::param(0), E::constant(3)), E::param(0));
        let g = E::add(E::param(0), E::constant(7));
        let fg = substitute(&f, &g, &[]).unwrap();
        for v in [-4, 0, 5, i64::MAX] {
            let inner = eval_scalar(&g, &[v], &[]).unwrap().as_int().unwrap();
            assert_eq!(eval_scalar(&fg, &[v], &[]), eval_scalar(&f, &[inner], &[]));
        }
    }

    #[test]
    fn sum_of_squares_even_plan() {
        let q = QueryExpr::new(
            "xs",
            vec![Stage::filter(even()), Stage::map(sq())],
            Terminal::Sum,
        )
        .unwrap();
        let plan = optimize(&q).unwrap();
        assert_eq!(plan.depth(), 1);
        assert_eq!(plan.guard_count(), 1);
        assert_eq!(plan.body().to_string(), "(x * x)");
        assert!(plan.is_lambda_free());
        assert_eq!(
            plan.to_string(),
            "loop 0: for x in 0..len(xs) | guard (x % 2) == 0 | sum += (x * x)\n"
        );
        let d = Datasets::new().with("xs", Dataset::range(10));
        let mut c = CounterSet::default();
        assert_eq!(exec_fused(&plan, &d, &mut c).unwrap(), 120);
        assert!(c.is_zero());
    }

    #[test]
    fn empty_count_plan() {
        let q = QueryExpr::new("xs", vec![], Terminal::Count).unwrap();
        let plan = optimize(&q).unwrap();
        assert_eq!(plan.depth(), 1);
        assert_eq!(plan.guard_count(), 0);
        assert_eq!(
            plan.to_string(),
            "loop 0: for x in 0..len(xs) | - | count += 1\n"
        );
    }

    #[test]
    fn cart_plan_is_a_two_level_nest() {
        let q = QueryExpr::new(
            "outer",
            vec![Stage::flat_map("inner", vec![Stage::map(times_outer())])],
            Terminal::Sum,
        )
        .unwrap();
        let plan = optimize(&q).unwrap();
        assert_eq!(plan.depth(), 2);
        assert!(plan.is_lambda_free());
        assert_eq!(
            plan.to_string(),
            "loop 0: for x in 0..len(outer) | - | -\n\
             loop 1: for y in 0..len(inner) | - | sum += (y * x)\n"
        );
        let d = Datasets::new()
            .with("outer", Dataset::ints(vec![1, 2, 3]))
            .with("inner", Dataset::ints(vec![10, 20]));
        let mut c = CounterSet::default();
        // distributivity: sum(a) * sum(b)
        assert_eq!(exec_fused(&plan, &d, &mut c).unwrap(), 6 * 30);
    }

    #[test]
    fn filter_after_map_shares_a_temporary() {
        let q = QueryExpr::new(
            "xs",
            vec![Stage::map(sq()), Stage::filter(even())],
            Terminal::Sum,
        )
        .unwrap();
        let plan = optimize(&q).unwrap();
        assert_eq!(
            plan.to_string(),
            "loop 0: for x in 0..len(xs) | let t0 = (x * x); guard (t0 % 2) == 0 | sum += t0\n"
        );
        let d = Datasets::new().with("xs", Dataset::range(10));
        let mut c = CounterSet::default();
        let brute: i64 = (0..10i64).map(|x| x * x).filter(|v| v % 2 == 0).sum();
        assert_eq!(exec_fused(&plan, &d, &mut c).unwrap(), brute);
    }

    #[test]
    fn empty_sum() {
        let q = QueryExpr::new("xs", vec![Stage::map(sq())], Terminal::Sum).unwrap();
        let d = Datasets::new().with("xs", Dataset::ints(vec![]));
        let plan = optimize(&q).unwrap();
        assert_eq!(
            exec_fused(&plan, &d, &mut CounterSet::default()).unwrap(),
            0
        );
    }

    #[test]
    fn division_by_zero_propagates() {
        let div = Lambda::unary(E::rem(E::constant(10), E::param(0))).unwrap();
        let q = QueryExpr::new("xs", vec![Stage::map(div)], Terminal::Sum).unwrap();
        let d = Datasets::new().with("xs", Dataset::range(3));
        let plan = optimize(&q).unwrap();
        assert_eq!(
            exec_fused(&plan, &d, &mut CounterSet::default()),
            Err(Error::DivisionByZero)
        );
        assert_eq!(
            eval_scalar(&E::rem(E::constant(10), E::constant(3)), &[], &[]),
            Ok(Scalar::Int(1))
        );
    }
}
