//! Random pipelines for differential testing.
//!
//! Generated lambdas never divide by a value that can be zero: every `mod`
//! has a non-zero constant divisor, so all engines must agree on a value.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{Dataset, Datasets};
use crate::expr::{ArithOp, CmpOp, ScalarExpr, Value};
use crate::lambda::Lambda;
use crate::query::{QueryExpr, Stage, Terminal};

#[derive(Debug, Clone, Copy)]
pub struct GenConfig {
    /// Maximum number of top-level stages.
    pub max_stages: usize,
    pub max_len: usize,
    pub max_expr_depth: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_stages: 4,
            max_len: 64,
            max_expr_depth: 3,
        }
    }
}

fn value<R: Rng + ?Sized>(rng: &mut R) -> Value {
    match rng.gen_range(0..10) {
        0 => *[i64::MIN, i64::MAX, -1, 0, 1].choose(rng).unwrap(),
        1 => rng.gen(),
        _ => rng.gen_range(-50..50),
    }
}

fn leaf<R: Rng + ?Sized>(rng: &mut R, captures: usize) -> ScalarExpr {
    match rng.gen_range(0..6) {
        0 | 1 => ScalarExpr::Const(rng.gen_range(-9..10)),
        2 if captures > 0 => ScalarExpr::Capture(0),
        _ => ScalarExpr::Param(0),
    }
}

fn arith<R: Rng + ?Sized>(rng: &mut R, depth: u32, captures: usize) -> ScalarExpr {
    if depth == 0 || rng.gen_bool(0.3) {
        return leaf(rng, captures);
    }
    let op = *[ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Mod]
        .choose(rng)
        .unwrap();
    let l = arith(rng, depth - 1, captures);
    let r = if op == ArithOp::Mod {
        let mut k = rng.gen_range(-7..8);
        if k == 0 {
            k = 2;
        }
        ScalarExpr::Const(k)
    } else {
        arith(rng, depth - 1, captures)
    };
    ScalarExpr::arith(op, l, r)
}

fn predicate<R: Rng + ?Sized>(rng: &mut R, depth: u32, captures: usize) -> ScalarExpr {
    let op = if rng.gen_bool(0.5) {
        CmpOp::Eq
    } else {
        CmpOp::Lt
    };
    if op == CmpOp::Eq {
        // residue tests keep selectivity away from zero
        let k = rng.gen_range(2..6);
        let lhs = ScalarExpr::rem(
            arith(rng, depth.saturating_sub(1), captures),
            ScalarExpr::Const(k),
        );
        ScalarExpr::cmp(op, lhs, ScalarExpr::Const(rng.gen_range(0..k)))
    } else {
        ScalarExpr::cmp(op, arith(rng, depth, captures), arith(rng, depth, captures))
    }
}

fn simple_stage<R: Rng + ?Sized>(rng: &mut R, cfg: &GenConfig, captures: usize) -> Stage {
    let caps = if captures > 0 && rng.gen_bool(0.7) {
        1
    } else {
        0
    };
    if rng.gen_bool(0.5) {
        Stage::map(
            Lambda::new(1, caps, arith(rng, cfg.max_expr_depth, caps)).expect("valid lambda"),
        )
    } else {
        Stage::filter(
            Lambda::new(1, caps, predicate(rng, cfg.max_expr_depth, caps)).expect("valid lambda"),
        )
    }
}

fn array<R: Rng + ?Sized>(rng: &mut R, max_len: usize, refs: bool) -> Dataset {
    let n = rng.gen_range(0..=max_len);
    let vals: Vec<Value> = (0..n).map(|_| value(rng)).collect();
    if refs {
        Dataset::refs(vals)
    } else {
        Dataset::ints(vals)
    }
}

/// A random valid query over datasets named `src` (and `inner`).
pub fn random_case<R: Rng + ?Sized>(rng: &mut R, cfg: &GenConfig) -> (QueryExpr, Datasets) {
    let n_stages = rng.gen_range(0..=cfg.max_stages);
    let fm_at = if n_stages > 0 && rng.gen_bool(0.35) {
        Some(rng.gen_range(0..n_stages))
    } else {
        None
    };
    let mut stages = Vec::with_capacity(n_stages);
    for i in 0..n_stages {
        if Some(i) == fm_at {
            let inner_n = rng.gen_range(0..=2);
            let inner = (0..inner_n).map(|_| simple_stage(rng, cfg, 1)).collect();
            stages.push(Stage::flat_map("inner", inner));
        } else {
            stages.push(simple_stage(rng, cfg, 0));
        }
    }
    let terminal = if rng.gen_bool(0.7) {
        Terminal::Sum
    } else {
        Terminal::Count
    };
    let q = QueryExpr::new("src", stages, terminal).expect("generated query is valid");
    let inner_len = cfg.max_len.min(16);
    let refs = rng.gen_bool(0.25);
    let ds = Datasets::new()
        .with("src", array(rng, cfg.max_len, refs))
        .with("inner", array(rng, inner_len, false));
    (q, ds)
}
