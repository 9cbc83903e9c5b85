use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scriptsynth::cli::{self, CliError, Grade, RunConfig};
use scriptsynth::cost::{CostFn, SynCostWeights, TraceCostWeights};
use scriptsynth::pbe::{parse_examples, synthesize, PbeOptions, SynthesisResult};
use scriptsynth::search::Strategy;

#[derive(Parser)]
#[command(name = "scriptsynth", version, about = "Synthesize scripts from API call traces")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single programming-by-example problem.
    Pbe {
        #[arg(long)]
        examples: PathBuf,
        #[arg(long, default_value_t = 12)]
        max_size: usize,
        #[arg(long, default_value_t = 10.0)]
        timeout: f64,
    },
    /// Run every benchmark in a suite directory and print a table.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Alternating,
    Rts,
    Ksearch,
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    Syn,
    Traces,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "alternating")]
    strategy: StrategyArg,
    /// Depth for ksearch.
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, value_enum, default_value = "syn")]
    cost: CostArg,
    /// JSON object overriding the syntactic cost weights.
    #[arg(long)]
    cost_config: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    retry_bound: Option<u64>,
    #[arg(long, default_value_t = 600.0)]
    timeout: f64,
    #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u64).range(1..))]
    pbe_max_size: u64,
    #[arg(long, default_value_t = 10.0)]
    pbe_timeout: f64,
    #[arg(long)]
    golden: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    log_rewrites: Option<PathBuf>,
    /// Report zero seconds, making reports byte-stable.
    #[arg(long)]
    no_timing: bool,
}

fn secs(s: f64, flag: &str) -> Result<Duration, String> {
    Duration::try_from_secs_f64(s).ok().filter(|d| !d.is_zero()).ok_or_else(|| format!("--{flag} must be positive"))
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, String> {
        let cost = match self.cost {
            CostArg::Syn => {
                let w = match &self.cost_config {
                    Some(p) => {
                        let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                        SynCostWeights::from_json(&text).map_err(|e| format!("{}: {e}", p.display()))?
                    }
                    None => SynCostWeights::default(),
                };
                CostFn::Syn(w)
            }
            CostArg::Traces => CostFn::Traces(TraceCostWeights::default()),
        };
        let strategy = match self.strategy {
            StrategyArg::Alternating => Strategy::Alternating,
            StrategyArg::Rts => Strategy::Rts,
            StrategyArg::Ksearch => Strategy::KSearch(self.k),
        };
        let traces_path = self.traces.clone().unwrap_or_default();
        let benchmark = traces_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(RunConfig {
            traces_path,
            benchmark,
            strategy,
            cost,
            retry_bound: self.retry_bound.map(|k| k as usize),
            timeout: secs(self.timeout, "timeout")?,
            pbe_max_size: self.pbe_max_size as usize,
            pbe_timeout: secs(self.pbe_timeout, "pbe-timeout")?,
            golden: self.golden.clone(),
            no_timing: self.no_timing,
        })
    }
}

fn main_run(args: &RunArgs) -> Result<u8, CliError> {
    let cfg = match args.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(1);
        }
    };
    let out = cli::run(&cfg)?;
    match &args.out {
        Some(p) => cli::write(p, &out.text)?,
        None => print!("{}", out.text),
    }
    if let Some(p) = &args.report {
        cli::write(p, &format!("{}\n", out.report.to_json_string()))?;
    }
    if let Some(p) = &args.log_rewrites {
        cli::write(p, &format!("{}\n", cli::rewrite_log_json(&out.result.log)))?;
    }
    Ok(if out.grade == Grade::Timeout { 2 } else { 0 })
}

fn main() -> ExitCode {
    // usage errors exit 1; 2 is reserved for timeouts
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let code = match &cli.command {
        None => {
            if cli.run.traces.is_none() {
                eprintln!("error: --traces is required");
                return ExitCode::from(1);
            }
            main_run(&cli.run).unwrap_or_else(|e| {
                eprintln!("error: {e}");
                e.exit_code() as u8
            })
        }
        Some(Command::Pbe { examples, max_size, timeout }) => {
            let run = || -> Result<u8, String> {
                let bytes = std::fs::read(examples).map_err(|e| format!("{}: {e}", examples.display()))?;
                let ex = parse_examples(&bytes).map_err(|e| format!("{}: {e}", examples.display()))?;
                let opts = PbeOptions { max_size: *max_size, timeout: secs(*timeout, "timeout")? };
                Ok(match synthesize(&ex, &opts) {
                    SynthesisResult::Sat(f) => {
                        println!("{f}");
                        0
                    }
                    SynthesisResult::Unsat { timed_out } => {
                        println!("{}", if timed_out { "timeout" } else { "unsat" });
                        if timed_out { 2 } else { 1 }
                    }
                })
            };
            run().unwrap_or_else(|e| {
                eprintln!("error: {e}");
                1
            })
        }
        Some(Command::Bench { suite, json, run }) => {
            let bench = || -> Result<u8, String> {
                let cfg = run.config()?;
                let rows = cli::run_benchmarks(suite, &cfg).map_err(|e| e.to_string())?;
                print!("{}", cli::bench_table(&rows));
                if let Some(p) = json {
                    cli::write(p, &format!("{}\n", cli::bench_json(&rows))).map_err(|e| e.to_string())?;
                }
                Ok(if rows.iter().any(|r| r.grade.is_err()) { 1 } else { 0 })
            };
            bench().unwrap_or_else(|e| {
                eprintln!("error: {e}");
                1
            })
        }
    };
    ExitCode::from(code)
}
