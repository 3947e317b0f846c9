//! Result rows and their CSV / Markdown renderings.

use std::fmt::Write as _;
use std::str::FromStr;

use streamfuse::Value;

pub const CSV_HEADER: &str = "benchmark,engine,n,threads,warmup,iters,mean_ms,stddev_ms,ci95_ms,result_hex,control_dispatches,lambda_applies,closure_instantiations";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "md" => Ok(Format::Markdown),
            other => Err(format!("unknown format `{other}` (expected csv or md)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub benchmark: String,
    pub engine: String,
    pub n: usize,
    pub threads: usize,
    pub warmup: usize,
    pub iters: usize,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub ci95_ms: f64,
    pub result: Value,
    pub control_dispatches: u64,
    pub lambda_applies: u64,
    pub closure_instantiations: u64,
}

impl ResultRow {
    fn cells(&self) -> [String; 13] {
        [
            self.benchmark.clone(),
            self.engine.clone(),
            self.n.to_string(),
            self.threads.to_string(),
            self.warmup.to_string(),
            self.iters.to_string(),
            format!("{:.3}", self.mean_ms),
            format!("{:.3}", self.stddev_ms),
            format!("{:.3}", self.ci95_ms),
            hex(self.result),
            self.control_dispatches.to_string(),
            self.lambda_applies.to_string(),
            self.closure_instantiations.to_string(),
        ]
    }

    fn from_cells(cells: &[&str]) -> Result<Self, String> {
        if cells.len() != 13 {
            return Err(format!("expected 13 columns, found {}", cells.len()));
        }
        fn num<T: FromStr>(s: &str, col: &str) -> Result<T, String> {
            s.trim().parse().map_err(|_| format!("bad {col} `{s}`"))
        }
        Ok(ResultRow {
            benchmark: cells[0].trim().to_owned(),
            engine: cells[1].trim().to_owned(),
            n: num(cells[2], "n")?,
            threads: num(cells[3], "threads")?,
            warmup: num(cells[4], "warmup")?,
            iters: num(cells[5], "iters")?,
            mean_ms: num(cells[6], "mean_ms")?,
            stddev_ms: num(cells[7], "stddev_ms")?,
            ci95_ms: num(cells[8], "ci95_ms")?,
            result: parse_hex(cells[9].trim())?,
            control_dispatches: num(cells[10], "control_dispatches")?,
            lambda_applies: num(cells[11], "lambda_applies")?,
            closure_instantiations: num(cells[12], "closure_instantiations")?,
        })
    }
}

/// Two's-complement hex of a wrapped 64-bit result.
pub fn hex(v: Value) -> String {
    format!("0x{:016x}", v as u64)
}

pub fn parse_hex(s: &str) -> Result<Value, String> {
    let digits = s
        .strip_prefix("0x")
        .ok_or_else(|| format!("bad hex `{s}`"))?;
    u64::from_str_radix(digits, 16)
        .map(|u| u as Value)
        .map_err(|_| format!("bad hex `{s}`"))
}

pub fn emit_results(rows: &[ResultRow], format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for r in rows {
                out.push_str(&r.cells().join(","));
                out.push('\n');
            }
        }
        Format::Markdown => {
            let cols: Vec<&str> = CSV_HEADER.split(',').collect();
            let _ = writeln!(out, "| {} |", cols.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(cols.len()));
            for r in rows {
                let _ = writeln!(out, "| {} |", r.cells().join(" | "));
            }
        }
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| ResultRow::from_cells(&l.split(',').collect::<Vec<_>>()))
        .collect()
}

pub fn parse_markdown(text: &str) -> Result<Vec<ResultRow>, String> {
    text.lines()
        .skip(2)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let inner = l
                .trim()
                .strip_prefix('|')
                .and_then(|l| l.strip_suffix('|'))
                .ok_or_else(|| format!("not a table row: {l}"))?;
            ResultRow::from_cells(&inner.split('|').collect::<Vec<_>>())
        })
        .collect()
}
