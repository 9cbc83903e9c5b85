//! Running the synthesizer from files and grading benchmark suites.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::cost::CostFn;
use crate::dsl::{equiv_mod_renaming, parse_program, print_program, ParseError, Program};
use crate::json::{JsonObject, JsonValue};
use crate::pbe::PbeOptions;
use crate::search::{self, LogEntry, Outcome, SearchConfig, SearchError, SearchResult, Strategy};
use crate::trace::{parse_traces, TraceError};

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub traces_path: PathBuf,
    pub benchmark: String,
    pub strategy: Strategy,
    pub cost: CostFn,
    pub retry_bound: Option<usize>,
    pub timeout: Duration,
    pub pbe_max_size: usize,
    pub pbe_timeout: Duration,
    pub golden: Option<PathBuf>,
    /// Report zero seconds so reports can be compared byte for byte.
    pub no_timing: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Traces { path: PathBuf, source: TraceError },
    #[error("{path}: {source}")]
    Golden { path: PathBuf, source: ParseError },
    #[error(transparent)]
    Search(#[from] SearchError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Search(SearchError::Psi(_)) => 3,
            _ => 1,
        }
    }
}

/// How a run compares with its reference program.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grade {
    Optimal,
    Terminated,
    Timeout,
}

impl Grade {
    pub fn name(self) -> &'static str {
        match self {
            Grade::Optimal => "Optimal",
            Grade::Terminated => "Terminated",
            Grade::Timeout => "Timeout",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub program: Program,
    pub text: String,
    pub grade: Grade,
    pub result: SearchResult,
    pub seconds: f64,
    pub report: JsonValue,
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn load_golden(path: &Path) -> Result<Program, CliError> {
    let text = String::from_utf8_lossy(&read(path)?).into_owned();
    parse_program(&text).map_err(|source| CliError::Golden { path: path.to_path_buf(), source })
}

fn log_json(log: &[LogEntry]) -> JsonValue {
    JsonValue::Array(
        log.iter()
            .map(|e| {
                let mut o = JsonObject::new();
                o.insert("rule".into(), e.rule.name().into());
                o.insert("site".into(), e.site.as_str().into());
                o.insert("cost_before".into(), JsonValue::Int(e.cost_before as i64));
                o.insert("cost_after".into(), JsonValue::Int(e.cost_after as i64));
                JsonValue::Object(o)
            })
            .collect(),
    )
}

pub fn rewrite_log_json(log: &[LogEntry]) -> String {
    log_json(log).to_json_string()
}

fn seconds_json(s: f64) -> JsonValue {
    JsonValue::Float(format!("{s:.3}"))
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let bytes = read(&cfg.traces_path)?;
    let traces =
        parse_traces(&bytes).map_err(|source| CliError::Traces { path: cfg.traces_path.clone(), source })?;
    let golden = cfg.golden.as_deref().map(load_golden).transpose()?;
    let scfg = SearchConfig {
        strategy: cfg.strategy,
        cost: cfg.cost,
        retry_bound: cfg.retry_bound,
        timeout: cfg.timeout,
        pbe: PbeOptions { max_size: cfg.pbe_max_size, timeout: cfg.pbe_timeout },
    };
    let start = Instant::now();
    let result = search::run(&traces, &scfg)?;
    let seconds = if cfg.no_timing { 0.0 } else { start.elapsed().as_secs_f64() };
    let grade = match (result.outcome, &golden) {
        (Outcome::TimedOut, _) => Grade::Timeout,
        (_, Some(g)) if equiv_mod_renaming(&result.program, g) => Grade::Optimal,
        _ => Grade::Terminated,
    };
    let text = print_program(&result.program);

    let mut inputs = Vec::new();
    for t in traces.indices() {
        let mut o = JsonObject::new();
        for (k, v) in result.sigma.inputs_for(t) {
            o.insert(k, v);
        }
        inputs.push(JsonValue::Object(o));
    }
    let mut r = JsonObject::new();
    r.insert("benchmark".into(), cfg.benchmark.as_str().into());
    r.insert("strategy".into(), cfg.strategy.name().into());
    r.insert("cost_function".into(), cfg.cost.name().into());
    r.insert("outcome".into(), grade.name().into());
    r.insert("cost".into(), JsonValue::Int(result.cost as i64));
    r.insert("seconds".into(), seconds_json(seconds));
    r.insert("pbe_calls".into(), JsonValue::Int(result.pbe_calls as i64));
    r.insert("pbe_sat".into(), JsonValue::Int(result.pbe_sat as i64));
    r.insert("rewrites".into(), log_json(&result.log));
    r.insert("inputs".into(), JsonValue::Array(inputs));
    Ok(RunOutput { program: result.program.clone(), text, grade, result, seconds, report: JsonValue::Object(r) })
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub name: String,
    pub grade: Result<Grade, String>,
    pub cost: Option<u64>,
    pub seconds: f64,
    pub pbe_calls: usize,
    pub pbe_sat: usize,
}

/// Runs every `<suite>/<name>/traces.json`, grading against `golden.syn`
/// when present.
pub fn run_benchmarks(suite: &Path, base: &RunConfig) -> Result<Vec<BenchRow>, CliError> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(suite)
        .map_err(|source| CliError::Io { path: suite.to_path_buf(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("traces.json").is_file())
        .collect();
    dirs.sort();
    let mut rows = Vec::new();
    for dir in dirs {
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        let golden = dir.join("golden.syn");
        let mut cfg = base.clone();
        cfg.traces_path = dir.join("traces.json");
        cfg.benchmark = name.clone();
        // a golden the language cannot express grades as Terminated at best
        cfg.golden = (golden.is_file() && load_golden(&golden).is_ok()).then_some(golden);
        let row = match run(&cfg) {
            Ok(out) => BenchRow {
                name,
                grade: Ok(out.grade),
                cost: Some(out.result.cost),
                seconds: out.seconds,
                pbe_calls: out.result.pbe_calls,
                pbe_sat: out.result.pbe_sat,
            },
            Err(e) => BenchRow { name, grade: Err(e.to_string()), cost: None, seconds: 0.0, pbe_calls: 0, pbe_sat: 0 },
        };
        rows.push(row);
    }
    Ok(rows)
}

pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut out = format!("{:<28} {:<11} {:>6} {:>9} {:>10}\n", "benchmark", "outcome", "cost", "seconds", "pbe(sat)");
    for r in rows {
        let grade = match &r.grade {
            Ok(g) => g.name().to_string(),
            Err(_) => "Error".to_string(),
        };
        let cost = r.cost.map_or_else(|| "-".to_string(), |c| c.to_string());
        out.push_str(&format!(
            "{:<28} {:<11} {:>6} {:>9.2} {:>10}\n",
            r.name,
            grade,
            cost,
            r.seconds,
            format!("{} ({})", r.pbe_calls, r.pbe_sat)
        ));
        if let Err(e) = &r.grade {
            out.push_str(&format!("  error: {e}\n"));
        }
    }
    out
}

pub fn bench_json(rows: &[BenchRow]) -> String {
    JsonValue::Array(
        rows.iter()
            .map(|r| {
                let mut o = JsonObject::new();
                o.insert("benchmark".into(), r.name.as_str().into());
                match &r.grade {
                    Ok(g) => o.insert("outcome".into(), g.name().into()),
                    Err(e) => o.insert("error".into(), e.as_str().into()),
                };
                o.insert("cost".into(), r.cost.map_or(JsonValue::Null, |c| JsonValue::Int(c as i64)));
                o.insert("seconds".into(), seconds_json(r.seconds));
                o.insert("pbe_calls".into(), JsonValue::Int(r.pbe_calls as i64));
                o.insert("pbe_sat".into(), JsonValue::Int(r.pbe_sat as i64));
                JsonValue::Object(o)
            })
            .collect(),
    )
    .to_json_string()
}
