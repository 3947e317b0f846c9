//! Lambda values and the link-once call-site cache.
//!
//! A lambda use site goes through three phases. *Linkage* happens the first
//! time the site is reached and binds it to its target. *Capture* produces a
//! function object: non-capturing sites hand out one shared instance for the
//! whole run, capturing sites allocate a new instance per capture event.
//! *Invocation* evaluates the body.
//!
//! Linkage state lives in a [`OnceLock`] per site, so a cache can be shared
//! by parallel workers and every site still links at most once per run.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use crate::counters::CounterSet;
use crate::error::{Error, Result};
use crate::expr::{Bindings, Scalar, ScalarExpr, Value};

static NEXT_SITE: AtomicU64 = AtomicU64::new(1);

/// Identifies one lambda use site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteId(pub u64);

impl SiteId {
    pub fn fresh() -> Self {
        SiteId(NEXT_SITE.fetch_add(1, Ordering::Relaxed))
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lambda {
    arity: usize,
    captures: usize,
    body: ScalarExpr,
    site_id: SiteId,
}

impl Lambda {
    /// Creates a lambda at a fresh call site.
    ///
    /// The body may only reference `Param(i)` with `i < arity` and
    /// `Capture(j)` with `j < captures`; loop variables and comparisons
    /// below the root are rejected.
    pub fn new(arity: usize, captures: usize, body: ScalarExpr) -> Result<Self> {
        Self::with_site(arity, captures, body, SiteId::fresh())
    }

    pub fn with_site(
        arity: usize,
        captures: usize,
        body: ScalarExpr,
        site_id: SiteId,
    ) -> Result<Self> {
        let mut problem = None;
        body.walk(&mut |e| {
            if problem.is_some() {
                return;
            }
            match e {
                ScalarExpr::Param(i) if *i >= arity => {
                    problem = Some(format!("Param({i}) with arity {arity}"))
                }
                ScalarExpr::Capture(j) if *j >= captures => {
                    problem = Some(format!("Capture({j}) with {captures} capture slots"))
                }
                ScalarExpr::Var(v) => problem = Some(format!("loop variable `{v}` in body")),
                _ => {}
            }
        });
        if problem.is_none() && body.has_nested_cmp() {
            problem = Some("comparison below the root of the body".into());
        }
        match problem {
            Some(p) => Err(Error::InvalidLambda(p)),
            None => Ok(Lambda {
                arity,
                captures,
                body,
                site_id,
            }),
        }
    }

    /// One-argument, non-capturing lambda.
    pub fn unary(body: ScalarExpr) -> Result<Self> {
        Self::new(1, 0, body)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn captures(&self) -> usize {
        self.captures
    }

    pub fn body(&self) -> &ScalarExpr {
        &self.body
    }

    pub fn site_id(&self) -> SiteId {
        self.site_id
    }

    pub fn is_predicate(&self) -> bool {
        self.body.is_predicate()
    }

    pub fn is_capturing(&self) -> bool {
        self.captures > 0
    }
}

pub fn is_capturing(lambda: &Lambda) -> bool {
    lambda.is_capturing()
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\\")?;
        for i in 0..self.arity {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "p{i}")?;
        }
        write!(f, " -> {}", self.body)
    }
}

/// A captured function object: a linked lambda plus its environment.
#[derive(Debug)]
pub struct Closure {
    lambda: Arc<Lambda>,
    site: usize,
    env: Box<[Value]>,
}

impl Closure {
    pub fn lambda(&self) -> &Lambda {
        &self.lambda
    }

    pub fn env(&self) -> &[Value] {
        &self.env
    }

    /// Dense site index inside the owning cache.
    pub fn site(&self) -> usize {
        self.site
    }

    pub fn invoke(&self, params: &[Value], counters: &mut CounterSet) -> Result<Scalar> {
        if params.len() != self.lambda.arity {
            return Err(Error::ArityMismatch {
                expected: self.lambda.arity,
                found: params.len(),
            });
        }
        counters.site_mut(self.site).applies += 1;
        self.lambda.body.eval(&Bindings::lambda(params, &self.env))
    }

    /// Unary arithmetic invocation.
    #[inline]
    pub fn apply(&self, x: Value, counters: &mut CounterSet) -> Result<Value> {
        counters.site_mut(self.site).applies += 1;
        self.lambda
            .body
            .eval_int(&Bindings::lambda(std::slice::from_ref(&x), &self.env))
    }

    /// Unary predicate invocation.
    #[inline]
    pub fn test(&self, x: Value, counters: &mut CounterSet) -> Result<bool> {
        counters.site_mut(self.site).applies += 1;
        self.lambda
            .body
            .eval_bool(&Bindings::lambda(std::slice::from_ref(&x), &self.env))
    }
}

#[derive(Debug)]
struct Linked {
    shared: Option<Arc<Closure>>,
}

#[derive(Debug)]
struct SiteSlot {
    lambda: Arc<Lambda>,
    linked: OnceLock<Linked>,
}

/// Per-run linkage state for every registered lambda site.
#[derive(Debug, Default)]
pub struct CallSiteCache {
    sites: Vec<SiteSlot>,
    index: HashMap<SiteId, usize>,
}

impl CallSiteCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a lambda and returns its dense site index. Registering the
    /// same site twice returns the existing index.
    pub fn register(&mut self, lambda: &Arc<Lambda>) -> usize {
        if let Some(&i) = self.index.get(&lambda.site_id) {
            return i;
        }
        let i = self.sites.len();
        self.sites.push(SiteSlot {
            lambda: Arc::clone(lambda),
            linked: OnceLock::new(),
        });
        self.index.insert(lambda.site_id, i);
        i
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn site_index(&self, id: SiteId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn is_linked(&self, id: SiteId) -> bool {
        self.site_index(id)
            .is_some_and(|i| self.sites[i].linked.get().is_some())
    }

    /// Capture phase for the site at dense index `site`, linking it first if
    /// this is the first time it is reached.
    pub fn capture_at(
        &self,
        site: usize,
        env: &[Value],
        counters: &mut CounterSet,
    ) -> Result<Arc<Closure>> {
        let slot = self
            .sites
            .get(site)
            .ok_or(Error::UnregisteredSite(site as u64))?;
        if env.len() != slot.lambda.captures {
            return Err(Error::ArityMismatch {
                expected: slot.lambda.captures,
                found: env.len(),
            });
        }
        let mut linked_now = false;
        let linked = slot.linked.get_or_init(|| {
            linked_now = true;
            let shared = (!slot.lambda.is_capturing()).then(|| {
                Arc::new(Closure {
                    lambda: Arc::clone(&slot.lambda),
                    site,
                    env: Box::default(),
                })
            });
            Linked { shared }
        });
        let c = counters.site_mut(site);
        if linked_now {
            c.link_events += 1;
        }
        match &linked.shared {
            Some(shared) => {
                if linked_now {
                    c.instantiations += 1;
                }
                Ok(Arc::clone(shared))
            }
            None => {
                c.instantiations += 1;
                Ok(Arc::new(Closure {
                    lambda: Arc::clone(&slot.lambda),
                    site,
                    env: env.into(),
                }))
            }
        }
    }

    pub fn capture(
        &self,
        lambda: &Lambda,
        env: &[Value],
        counters: &mut CounterSet,
    ) -> Result<Arc<Closure>> {
        let site = self
            .site_index(lambda.site_id)
            .ok_or(Error::UnregisteredSite(lambda.site_id.0))?;
        self.capture_at(site, env, counters)
    }
}

/// Capture-then-invoke. For a capturing lambda every call is a capture event.
pub fn apply_lambda(
    cache: &CallSiteCache,
    lambda: &Lambda,
    params: &[Value],
    captures: &[Value],
    counters: &mut CounterSet,
) -> Result<Scalar> {
    cache
        .capture(lambda, captures, counters)?
        .invoke(params, counters)
}
