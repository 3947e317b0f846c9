use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Value;

/// A heap-resident record holding one value. Reading it costs an indirection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ref {
    pub value: Value,
}

/// Immutable, cheaply clonable source array.
#[derive(Debug, Clone)]
pub enum Dataset {
    Ints(Arc<[Value]>),
    Refs(Arc<[Box<Ref>]>),
}

impl Dataset {
    pub fn ints(values: impl Into<Arc<[Value]>>) -> Self {
        Dataset::Ints(values.into())
    }

    pub fn refs(values: impl IntoIterator<Item = Value>) -> Self {
        Dataset::Refs(
            values
                .into_iter()
                .map(|value| Box::new(Ref { value }))
                .collect(),
        )
    }

    /// `0, 1, .., n-1`.
    pub fn range(n: usize) -> Self {
        Dataset::Ints((0..n as Value).collect())
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Ints(a) => a.len(),
            Dataset::Refs(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> Value {
        match self {
            Dataset::Ints(a) => a[i],
            Dataset::Refs(r) => r[i].value,
        }
    }

    pub fn to_vec(&self) -> Vec<Value> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

/// Indexed element access, implemented by the concrete backing arrays so
/// hot loops can be monomorphised once per dataset kind.
pub trait Elements: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn at(&self, i: usize) -> Value;
}

impl Elements for [Value] {
    #[inline]
    fn len(&self) -> usize {
        <[Value]>::len(self)
    }

    #[inline]
    fn at(&self, i: usize) -> Value {
        self[i]
    }
}

impl Elements for [Box<Ref>] {
    #[inline]
    fn len(&self) -> usize {
        <[Box<Ref>]>::len(self)
    }

    #[inline]
    fn at(&self, i: usize) -> Value {
        self[i].value
    }
}

/// Name of a dataset inside a [`Datasets`] map.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DatasetRef(Arc<str>);

impl DatasetRef {
    pub fn new(name: &str) -> Self {
        DatasetRef(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl From<&str> for DatasetRef {
    fn from(s: &str) -> Self {
        DatasetRef::new(s)
    }
}

impl fmt::Display for DatasetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Datasets {
    map: HashMap<DatasetRef, Dataset>,
}

impl Datasets {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, data: Dataset) -> Self {
        self.insert(name, data);
        self
    }

    pub fn insert(&mut self, name: &str, data: Dataset) {
        self.map.insert(DatasetRef::new(name), data);
    }

    pub fn resolve(&self, r: &DatasetRef) -> Result<&Dataset> {
        self.map
            .get(r)
            .ok_or_else(|| Error::UnresolvedDataset(r.name().to_owned()))
    }
}
