//! Reference evaluator that materialises every intermediate stage into a
//! vector. Slow and allocation-heavy; shares no iteration code with the
//! engines and exists to cross-check them.

use crate::dataset::Datasets;
use crate::error::Result;
use crate::expr::{eval_scalar, Value};
use crate::query::{QueryExpr, Stage, Terminal};

fn apply_stages(mut items: Vec<Value>, stages: &[Stage], captures: &[Value]) -> Result<Vec<Value>> {
    for stage in stages {
        items = match stage {
            Stage::Map(l) => items
                .iter()
                .map(|&v| eval_scalar(l.body(), &[v], &captures[..l.captures()])?.as_int())
                .collect::<Result<_>>()?,
            Stage::Filter(l) => {
                let mut kept = Vec::new();
                for v in items {
                    if eval_scalar(l.body(), &[v], &captures[..l.captures()])?.as_bool()? {
                        kept.push(v);
                    }
                }
                kept
            }
            Stage::FlatMap { .. } => unreachable!("flatMap handled by caller"),
        };
    }
    Ok(items)
}

/// Evaluates `query` by materialising each stage.
pub fn evaluate(query: &QueryExpr, datasets: &Datasets) -> Result<Value> {
    let mut items = datasets.resolve(query.source())?.to_vec();
    for stage in query.stages() {
        items = match stage {
            Stage::FlatMap { source, stages } => {
                let inner = datasets.resolve(source)?.to_vec();
                let mut out = Vec::new();
                for &x in &items {
                    out.extend(apply_stages(inner.clone(), stages, &[x])?);
                }
                out
            }
            s => apply_stages(items, std::slice::from_ref(s), &[])?,
        };
    }
    Ok(match query.terminal() {
        Terminal::Sum => items.iter().fold(0, |a: Value, &v| a.wrapping_add(v)),
        Terminal::Count => items.len() as Value,
    })
}
