//! Scalar expression trees used as lambda bodies and as fused loop bodies.
//!
//! All arithmetic is on [`Value`] (signed 64-bit) and wraps on overflow, so
//! every engine produces bit-identical results. `mod` follows truncated
//! division (the sign of the result follows the dividend) and fails on a
//! zero divisor.

use std::fmt;

use crate::error::{Error, Result, SlotKind};

/// Element type of every pipeline.
pub type Value = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Mod,
}

impl ArithOp {
    #[inline]
    pub fn apply(self, l: Value, r: Value) -> Result<Value> {
        Ok(match self {
            ArithOp::Add => l.wrapping_add(r),
            ArithOp::Sub => l.wrapping_sub(r),
            ArithOp::Mul => l.wrapping_mul(r),
            ArithOp::Mod => {
                if r == 0 {
                    return Err(Error::DivisionByZero);
                }
                l.wrapping_rem(r)
            }
        })
    }

    fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Mod => "%",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Lt,
}

impl CmpOp {
    #[inline]
    pub fn apply(self, l: Value, r: Value) -> bool {
        match self {
            CmpOp::Eq => l == r,
            CmpOp::Lt => l < r,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Lt => "<",
        }
    }
}

/// A loop variable of a fused plan. Never valid inside a lambda body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    /// Element of the outer loop.
    Outer,
    /// Element of the nested (flat-map) loop.
    Inner,
    /// Temporary bound once per iteration.
    Temp(u8),
}

impl Var {
    #[inline]
    pub fn slot(self) -> usize {
        match self {
            Var::Outer => 0,
            Var::Inner => 1,
            Var::Temp(k) => 2 + k as usize,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Outer => f.write_str("x"),
            Var::Inner => f.write_str("y"),
            Var::Temp(k) => write!(f, "t{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ScalarExpr {
    Const(Value),
    /// Lambda argument, 0-based.
    Param(usize),
    /// Captured environment slot, 0-based.
    Capture(usize),
    /// Loop variable; only appears in fused plans.
    Var(Var),
    Arith(ArithOp, Box<ScalarExpr>, Box<ScalarExpr>),
    Cmp(CmpOp, Box<ScalarExpr>, Box<ScalarExpr>),
}

/// Result of evaluating an expression: arithmetic bodies produce integers,
/// predicate bodies produce booleans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scalar {
    Int(Value),
    Bool(bool),
}

impl Scalar {
    pub fn as_int(self) -> Result<Value> {
        match self {
            Scalar::Int(v) => Ok(v),
            Scalar::Bool(_) => Err(Error::TypeMismatch {
                expected: "integer",
            }),
        }
    }

    pub fn as_bool(self) -> Result<bool> {
        match self {
            Scalar::Bool(b) => Ok(b),
            Scalar::Int(_) => Err(Error::TypeMismatch {
                expected: "boolean",
            }),
        }
    }
}

/// Values visible to an expression during evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bindings<'a> {
    pub params: &'a [Value],
    pub captures: &'a [Value],
    pub vars: &'a [Value],
}

impl<'a> Bindings<'a> {
    pub fn lambda(params: &'a [Value], captures: &'a [Value]) -> Self {
        Bindings {
            params,
            captures,
            vars: &[],
        }
    }

    pub fn loop_vars(vars: &'a [Value]) -> Self {
        Bindings {
            params: &[],
            captures: &[],
            vars,
        }
    }
}

#[inline]
fn slot(values: &[Value], index: usize, kind: SlotKind) -> Result<Value> {
    values.get(index).copied().ok_or(Error::IndexOutOfRange {
        kind,
        index,
        len: values.len(),
    })
}

#[allow(clippy::should_implement_trait)]
impl ScalarExpr {
    pub fn constant(v: Value) -> Self {
        ScalarExpr::Const(v)
    }

    pub fn param(i: usize) -> Self {
        ScalarExpr::Param(i)
    }

    pub fn capture(i: usize) -> Self {
        ScalarExpr::Capture(i)
    }

    pub fn var(v: Var) -> Self {
        ScalarExpr::Var(v)
    }

    pub fn arith(op: ArithOp, l: ScalarExpr, r: ScalarExpr) -> Self {
        ScalarExpr::Arith(op, Box::new(l), Box::new(r))
    }

    pub fn cmp(op: CmpOp, l: ScalarExpr, r: ScalarExpr) -> Self {
        ScalarExpr::Cmp(op, Box::new(l), Box::new(r))
    }

    pub fn add(l: ScalarExpr, r: ScalarExpr) -> Self {
        Self::arith(ArithOp::Add, l, r)
    }

    pub fn sub(l: ScalarExpr, r: ScalarExpr) -> Self {
        Self::arith(ArithOp::Sub, l, r)
    }

    pub fn mul(l: ScalarExpr, r: ScalarExpr) -> Self {
        Self::arith(ArithOp::Mul, l, r)
    }

    pub fn rem(l: ScalarExpr, r: ScalarExpr) -> Self {
        Self::arith(ArithOp::Mod, l, r)
    }

    pub fn eq(l: ScalarExpr, r: ScalarExpr) -> Self {
        Self::cmp(CmpOp::Eq, l, r)
    }

    pub fn lt(l: ScalarExpr, r: ScalarExpr) -> Self {
        Self::cmp(CmpOp::Lt, l, r)
    }

    pub fn is_predicate(&self) -> bool {
        matches!(self, ScalarExpr::Cmp(..))
    }

    /// Evaluates an arithmetic expression.
    #[inline]
    pub fn eval_int(&self, b: &Bindings<'_>) -> Result<Value> {
        match self {
            ScalarExpr::Const(v) => Ok(*v),
            ScalarExpr::Param(i) => slot(b.params, *i, SlotKind::Param),
            ScalarExpr::Capture(i) => slot(b.captures, *i, SlotKind::Capture),
            ScalarExpr::Var(v) => slot(b.vars, v.slot(), SlotKind::Var),
            ScalarExpr::Arith(op, l, r) => op.apply(l.eval_int(b)?, r.eval_int(b)?),
            ScalarExpr::Cmp(..) => Err(Error::TypeMismatch {
                expected: "integer",
            }),
        }
    }

    /// Evaluates a comparison-rooted predicate.
    #[inline]
    pub fn eval_bool(&self, b: &Bindings<'_>) -> Result<bool> {
        match self {
            ScalarExpr::Cmp(op, l, r) => Ok(op.apply(l.eval_int(b)?, r.eval_int(b)?)),
            _ => Err(Error::TypeMismatch {
                expected: "boolean",
            }),
        }
    }

    pub fn eval(&self, b: &Bindings<'_>) -> Result<Scalar> {
        if self.is_predicate() {
            self.eval_bool(b).map(Scalar::Bool)
        } else {
            self.eval_int(b).map(Scalar::Int)
        }
    }

    /// Pre-order traversal over all nodes.
    pub fn walk(&self, f: &mut impl FnMut(&ScalarExpr)) {
        f(self);
        if let ScalarExpr::Arith(_, l, r) | ScalarExpr::Cmp(_, l, r) = self {
            l.walk(f);
            r.walk(f);
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }

    /// True if a `Cmp` node appears anywhere except at the root.
    pub fn has_nested_cmp(&self) -> bool {
        fn inner(e: &ScalarExpr, root: bool) -> bool {
            match e {
                ScalarExpr::Cmp(_, l, r) => !root || inner(l, false) || inner(r, false),
                ScalarExpr::Arith(_, l, r) => inner(l, false) || inner(r, false),
                _ => false,
            }
        }
        inner(self, true)
    }
}

/// Evaluates `expr` against lambda arguments and captured values.
pub fn eval_scalar(expr: &ScalarExpr, params: &[Value], captures: &[Value]) -> Result<Scalar> {
    expr.eval(&Bindings::lambda(params, captures))
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(e: &ScalarExpr, f: &mut fmt::Formatter<'_>, root: bool) -> fmt::Result {
            match e {
                ScalarExpr::Const(v) => write!(f, "{v}"),
                ScalarExpr::Param(i) => write!(f, "p{i}"),
                ScalarExpr::Capture(i) => write!(f, "c{i}"),
                ScalarExpr::Var(v) => write!(f, "{v}"),
                ScalarExpr::Arith(op, l, r) => {
                    f.write_str("(")?;
                    go(l, f, false)?;
                    write!(f, " {} ", op.symbol())?;
                    go(r, f, false)?;
                    f.write_str(")")
                }
                ScalarExpr::Cmp(op, l, r) => {
                    if !root {
                        f.write_str("(")?;
                    }
                    go(l, f, false)?;
                    write!(f, " {} ", op.symbol())?;
                    go(r, f, false)?;
                    if !root {
                        f.write_str(")")?;
                    }
                    Ok(())
                }
            }
        }
        go(self, f, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> ScalarExpr {
        ScalarExpr::mul(ScalarExpr::param(0), ScalarExpr::param(0))
    }

    fn is_even() -> ScalarExpr {
        ScalarExpr::eq(
            ScalarExpr::rem(ScalarExpr::param(0), ScalarExpr::constant(2)),
            ScalarExpr::constant(0),
        )
    }

    #[test]
    fn square_of_seven() {
        // 7 * 7 by hand
        assert_eq!(eval_scalar(&square(), &[7], &[]), Ok(Scalar::Int(49)));
    }

    #[test]
    fn four_is_even() {
        assert_eq!(eval_scalar(&is_even(), &[4], &[]), Ok(Scalar::Bool(true)));
        assert_eq!(eval_scalar(&is_even(), &[-3], &[]), Ok(Scalar::Bool(false)));
    }

    #[test]
    fn constant_zero() {
        assert_eq!(
            eval_scalar(&ScalarExpr::constant(0), &[], &[]),
            Ok(Scalar::Int(0))
        );
    }

    #[test]
    fn bad_slots() {
        assert!(matches!(
            eval_scalar(&ScalarExpr::param(1), &[1], &[]),
            Err(Error::IndexOutOfRange {
                kind: SlotKind::Param,
                index: 1,
                len: 1
            })
        ));
        assert!(matches!(
            eval_scalar(&ScalarExpr::capture(0), &[1], &[]),
            Err(Error::IndexOutOfRange {
                kind: SlotKind::Capture,
                ..
            })
        ));
    }

    #[test]
    fn mod_by_zero_is_an_error() {
        let e = ScalarExpr::rem(ScalarExpr::param(0), ScalarExpr::constant(0));
        assert_eq!(eval_scalar(&e, &[5], &[]), Err(Error::DivisionByZero));
    }

    #[test]
    fn arithmetic_wraps() {
        let e = ScalarExpr::add(ScalarExpr::param(0), ScalarExpr::constant(1));
        assert_eq!(eval_scalar(&e, &[i64::MAX], &[]), Ok(Scalar::Int(i64::MIN)));
        let m = ScalarExpr::rem(ScalarExpr::param(0), ScalarExpr::constant(-1));
        assert_eq!(eval_scalar(&m, &[i64::MIN], &[]), Ok(Scalar::Int(0)));
        // truncated remainder
        assert_eq!(eval_scalar(&m, &[-7], &[]), Ok(Scalar::Int(0)));
        let m3 = ScalarExpr::rem(ScalarExpr::param(0), ScalarExpr::constant(3));
        assert_eq!(eval_scalar(&m3, &[-7], &[]), Ok(Scalar::Int(-1)));
    }

    #[test]
    fn nested_cmp_is_a_type_error() {
        let e = ScalarExpr::add(is_even(), ScalarExpr::constant(1));
        assert!(e.has_nested_cmp());
        assert!(!is_even().has_nested_cmp());
        assert!(matches!(
            eval_scalar(&e, &[2], &[]),
            Err(Error::TypeMismatch { .. })
        ));
    }

    #[test]
    fn display_is_fully_parenthesized() {
        assert_eq!(is_even().to_string(), "(p0 % 2) == 0");
        assert_eq!(square().to_string(), "(p0 * p0)");
        let v = ScalarExpr::mul(ScalarExpr::var(Var::Outer), ScalarExpr::var(Var::Inner));
        assert_eq!(v.to_string(), "(x * y)");
    }
}
