//! Command-line driver.
//!
//! Exit codes: 0 on success, 1 when a result mismatches its oracle (in
//! `--check` mode or during timing), 2 on bad flags.

use std::io::Write;
use std::path::PathBuf;

use clap::Parser;
use streamfuse::{oracle, CounterSet, ParallelConfig, DEFAULT_SPLIT_THRESHOLD};

use crate::harness::{checksum, measure, BenchTask};
use crate::report::{emit_results, hex, Format, ResultRow};
use crate::suite::{
    gen_inputs, BenchName, BenchSpec, Engine, Prepared, DEFAULT_ITERS, DEFAULT_N, DEFAULT_WARMUP,
};

/// `all` or a comma-separated list of names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection<T>(pub Vec<T>);

fn parse_selection<T>(s: &str, all: &[T]) -> Result<Selection<T>, String>
where
    T: std::str::FromStr<Err = String> + Clone,
{
    if s == "all" {
        Ok(Selection(all.to_vec()))
    } else {
        s.split(',')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map(Selection)
    }
}

fn parse_benches(s: &str) -> Result<Selection<BenchName>, String> {
    parse_selection(s, &BenchName::ALL)
}

fn parse_engines(s: &str) -> Result<Selection<Engine>, String> {
    parse_selection(s, &Engine::ALL)
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "streamfuse",
    about = "Pull, push and fused stream pipeline benchmarks"
)]
pub struct Cli {
    /// Benchmark name, comma-separated list, or `all`.
    #[arg(long, default_value = "all", value_parser = parse_benches)]
    pub bench: Selection<BenchName>,
    /// Engine name, comma-separated list, or `all`.
    #[arg(long, default_value = "all", value_parser = parse_engines)]
    pub engine: Selection<Engine>,
    /// Input size; `cart` uses n/10 outer by 10 inner elements.
    #[arg(long, default_value_t = DEFAULT_N)]
    pub n: usize,
    /// Worker count for the parallel engines.
    #[arg(long, value_parser = positive)]
    pub threads: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    pub warmup: usize,
    #[arg(long, default_value_t = DEFAULT_ITERS)]
    pub iters: usize,
    #[arg(long, default_value_t = DEFAULT_SPLIT_THRESHOLD, value_parser = positive)]
    pub split_threshold: usize,
    #[arg(long, default_value = "csv")]
    pub format: Format,
    /// Cross-validate every engine against the reference evaluator; no timing.
    #[arg(long)]
    pub check: bool,
    /// Print the fused loop nest of each selected benchmark.
    #[arg(long)]
    pub show_plan: bool,
    /// Write results here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Cli {
    fn config(&self) -> ParallelConfig {
        ParallelConfig::new(
            self.threads
                .unwrap_or_else(|| ParallelConfig::default().workers),
            self.split_threshold,
        )
    }

    fn spec(&self, name: BenchName, engine: Engine) -> BenchSpec {
        let cfg = self.config();
        BenchSpec {
            name,
            engine,
            n: self.n,
            threads: cfg.workers,
            warmup: self.warmup,
            iters: self.iters,
            split_threshold: cfg.split_threshold,
        }
    }
}

pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 2;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> std::io::Result<i32> {
    if cli.show_plan {
        for &b in &cli.bench.0 {
            let plan =
                streamfuse::optimize(&crate::suite::query_for(b)).expect("suite query fuses");
            writeln!(out, "# {b}")?;
            write!(out, "{plan}")?;
        }
        if !cli.check {
            return Ok(0);
        }
    }
    if cli.check {
        return check(cli, out);
    }
    if cli.iters < 2 {
        writeln!(err, "error: --iters must be at least 2")?;
        return Ok(2);
    }
    let cfg = cli.config();
    let mut rows = Vec::new();
    for &b in &cli.bench.0 {
        let ds = gen_inputs(b, cli.n);
        let expected = match oracle::evaluate(&crate::suite::query_for(b), &ds) {
            Ok(v) => v,
            Err(e) => {
                writeln!(err, "{b}: reference evaluation failed: {e}")?;
                return Ok(1);
            }
        };
        for &e in &cli.engine.0 {
            let spec = cli.spec(b, e);
            let prepared = match Prepared::new(b, e, cfg) {
                Ok(p) => p,
                Err(x) => {
                    writeln!(err, "{b}/{e}: {x}")?;
                    return Ok(1);
                }
            };
            if prepared.plan().is_some() {
                writeln!(
                    err,
                    "{b}/{e}: optimize took {:?} (not timed)",
                    prepared.optimize_time
                )?;
            }
            let mut counters = CounterSet::default();
            let probe = prepared.run(&ds, &mut counters);
            if probe != Ok(expected) {
                writeln!(
                    err,
                    "{b}/{e}: result mismatch, expected {}, got {probe:?}",
                    hex(expected)
                )?;
                return Ok(1);
            }
            let task = BenchTask::new(
                format!("{b}/{e}"),
                || (),
                |_| prepared.run(&ds, &mut CounterSet::default()),
                expected,
            );
            let stats = match measure(task, spec.warmup, spec.iters) {
                Ok(s) => s,
                Err(x) => {
                    writeln!(err, "{x}")?;
                    return Ok(1);
                }
            };
            writeln!(
                err,
                "{b}/{e}: {:.3} ms ± {:.3}",
                stats.mean_ms, stats.ci95_half_ms
            )?;
            rows.push(ResultRow {
                benchmark: b.to_string(),
                engine: e.to_string(),
                n: spec.n,
                threads: spec.effective_threads(),
                warmup: spec.warmup,
                iters: spec.iters,
                mean_ms: stats.mean_ms,
                stddev_ms: stats.stddev_ms,
                ci95_ms: stats.ci95_half_ms,
                result: expected,
                control_dispatches: counters.total_control_dispatches(),
                lambda_applies: counters.total_lambda_applies(),
                closure_instantiations: counters.total_instantiations(),
            });
        }
    }
    let text = emit_results(&rows, cli.format);
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    writeln!(err, "sink checksum {:#018x}", checksum())?;
    Ok(0)
}

fn check(cli: &Cli, out: &mut dyn Write) -> std::io::Result<i32> {
    let cfg = cli.config();
    let mut failures = 0;
    for &b in &cli.bench.0 {
        let ds = gen_inputs(b, cli.n);
        let expected = oracle::evaluate(&crate::suite::query_for(b), &ds);
        for &e in &cli.engine.0 {
            let got = Prepared::new(b, e, cfg).and_then(|p| p.run(&ds, &mut CounterSet::default()));
            match (&expected, &got) {
                (Ok(want), Ok(v)) if want == v => writeln!(out, "ok {b} {e} {}", hex(*v))?,
                _ => {
                    failures += 1;
                    writeln!(out, "MISMATCH {b} {e} expected {expected:?} got {got:?}")?;
                }
            }
        }
    }
    Ok(if failures == 0 { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("streamfuse").chain(args.iter().copied());
        let code = run_cli(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn check_sum_all_engines() {
        let (code, out, _) = run(&[
            "--bench", "sum", "--engine", "all", "--n", "1000", "--check",
        ]);
        assert_eq!(code, 0, "{out}");
        assert_eq!(out.lines().count(), 6);
        assert!(out.lines().all(|l| l.starts_with("ok sum ")));
    }

    #[test]
    fn bad_flags_exit_2() {
        assert_eq!(run(&["--engine", "warp"]).0, 2);
        assert_eq!(run(&["--bench", "nope"]).0, 2);
        assert_eq!(run(&["--format", "xml"]).0, 2);
        assert_eq!(run(&["--threads", "0"]).0, 2);
        assert_eq!(run(&["--frobnicate"]).0, 2);
        assert_eq!(
            run(&["--iters", "1", "--n", "10", "--bench", "sum", "--engine", "push"]).0,
            2
        );
    }

    #[test]
    fn show_plan_cart() {
        let (code, out, _) = run(&["--bench", "cart", "--engine", "fused", "--show-plan"]);
        assert_eq!(code, 0);
        assert!(out.contains("loop 0: for x in 0..len(outer)"));
        assert!(out.contains("loop 1: for y in 0..len(inner) | - | sum += (y * x)"));
    }

    #[test]
    fn timed_run_emits_csv() {
        let (code, out, err) = run(&[
            "--bench",
            "sumOfSquaresEven,refs",
            "--engine",
            "pull,fused-par",
            "--n",
            "100",
            "--warmup",
            "1",
            "--iters",
            "3",
            "--threads",
            "2",
        ]);
        assert_eq!(code, 0, "{err}");
        let rows = crate::report::parse_csv(&out).unwrap();
        assert_eq!(rows.len(), 4);
        let brute: i64 = (0..100i64).filter(|x| x % 2 == 0).map(|x| x * x).sum();
        assert_eq!(rows[0].result, brute);
        assert_eq!(rows[0].threads, 1);
        assert_eq!(rows[1].threads, 2);
        assert_eq!(rows[1].control_dispatches, 0);
        assert_eq!(rows[2].result, 7);
    }

    #[test]
    fn markdown_to_file() {
        let dir = std::env::temp_dir().join(format!("streamfuse-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.md");
        let (code, out, _) = run(&[
            "--bench",
            "sum",
            "--engine",
            "baseline",
            "--n",
            "10",
            "--warmup",
            "0",
            "--iters",
            "2",
            "--format",
            "md",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        assert!(out.is_empty());
        let md = std::fs::read_to_string(&path).unwrap();
        let rows = crate::report::parse_markdown(&md).unwrap();
        assert_eq!(rows[0].result, 45);
        std::fs::remove_dir_all(dir).unwrap();
    }
}
