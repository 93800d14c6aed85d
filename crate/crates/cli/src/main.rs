//! dynlab: replay compaction policies over traces, compute offline optima,
//! and run lower-bound constructions.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation failure, 3 resource
//! cap exceeded.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dynlab_cli::commands::{
    adversary_run, compare, lowerbound_minsum, run_experiment, solve_opt, OracleCaps, OracleKind,
};
use dynlab_core::error::Error;
use dynlab_core::model::{Time, Trace, Variant};
use dynlab_core::policy::PolicySpec;
use dynlab_core::weight::Weight;
use dynlab_core::workload::{gen_workload, read_trace, write_trace, WorkloadConfig};

#[derive(Parser)]
#[command(name = "dynlab", version, about = "compaction-policy laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a workload trace file.
    Gen(GenArgs),
    /// Replay one policy over a trace, optionally against an oracle.
    Run(RunArgs),
    /// Replay several policies over several traces into a CSV table.
    Compare(CompareArgs),
    /// Compute an offline optimum only.
    Opt(OptArgs),
    /// Drive a policy with the adaptive k-component adversary.
    Adversary(AdversaryArgs),
    /// Generate the Min-Sum lower-bound instance and verify the merge tree.
    LowerboundMinsum(LowerBoundArgs),
}

#[derive(Args)]
struct GenArgs {
    /// uniform | heavy-light | bursty | zipf-lsm
    #[arg(long)]
    workload: String,
    #[arg(long)]
    n: Time,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// bursty: probability (out of 8) that a step carries items
    #[arg(long, default_value_t = 6)]
    fill8: u64,
    /// bursty: largest batch size
    #[arg(long, default_value_t = 4)]
    max_batch: u64,
    /// zipf-lsm: key universe size
    #[arg(long, default_value_t = 16)]
    keys: u64,
    /// zipf-lsm: skew times 100
    #[arg(long, default_value_t = 100)]
    skew100: u64,
    /// zipf-lsm: per-mille delete rate
    #[arg(long, default_value_t = 100)]
    delete_pm: u64,
    /// zipf-lsm: per-mille expiry rate
    #[arg(long, default_value_t = 100)]
    expire_pm: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    policy: String,
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    trace: PathBuf,
    /// Assert the trace is of this variant.
    #[arg(long)]
    variant: Option<String>,
    /// brute | partition | dp
    #[arg(long)]
    oracle: Option<String>,
    /// Raise the brute-force non-empty-batch cap.
    #[arg(long)]
    brute_cap: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// json (default)
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated policy names.
    #[arg(long)]
    policies: String,
    #[arg(long)]
    k: Option<u64>,
    /// Comma-separated trace paths.
    #[arg(long)]
    traces: String,
    #[arg(long)]
    oracle: Option<String>,
    #[arg(long)]
    brute_cap: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv (default) | json
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args)]
struct OptArgs {
    /// brute | partition | dp
    #[arg(long, default_value = "brute")]
    oracle: String,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    brute_cap: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AdversaryArgs {
    #[arg(long)]
    policy: String,
    #[arg(long)]
    k: u64,
    /// Rational in (0,1), e.g. 1/16.
    #[arg(long)]
    epsilon: String,
    #[arg(long, default_value_t = 100_000)]
    step_cap: Time,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LowerBoundArgs {
    #[arg(long)]
    depth: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits; anything else is usage.
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            match e {
                Error::ResourceCap(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn emit(out: Option<&PathBuf>, payload: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            // Write atomically: temp file in place, then rename.
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, payload)?;
            std::fs::rename(&tmp, path)?;
        }
        None => {
            std::io::stdout().write_all(payload.as_bytes())?;
        }
    }
    Ok(())
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Validation(format!("serialize: {}", e)))
}

fn load_trace(path: &PathBuf, variant: Option<&str>) -> Result<Trace, Error> {
    let trace = read_trace(path)?;
    if let Some(v) = variant {
        let v = Variant::parse(v)?;
        if v != trace.variant {
            return Err(Error::Validation(format!(
                "trace {} is {} but --variant {} was given",
                path.display(),
                trace.variant.name(),
                v.name()
            )));
        }
    }
    Ok(trace)
}

fn caps_with(brute_cap: Option<usize>) -> OracleCaps {
    let mut caps = OracleCaps::new();
    if let Some(cap) = brute_cap {
        caps.brute.max_nonempty = cap;
    }
    caps
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen(args) => {
            let config = match args.workload.as_str() {
                "uniform" => WorkloadConfig::Uniform { n: args.n },
                "heavy-light" => WorkloadConfig::HeavyThenLight { n: args.n },
                "bursty" => WorkloadConfig::Bursty {
                    n: args.n,
                    seed: args.seed,
                    fill8: args.fill8,
                    max_batch: args.max_batch,
                },
                "zipf-lsm" => WorkloadConfig::ZipfLsm {
                    n: args.n,
                    seed: args.seed,
                    keys: args.keys,
                    skew100: args.skew100,
                    delete_pm: args.delete_pm,
                    expire_pm: args.expire_pm,
                },
                other => {
                    return Err(Error::Validation(format!(
                        "unknown workload {:?}",
                        other
                    )))
                }
            };
            let trace = gen_workload(&config)?;
            write_trace(&trace, &args.out)?;
            eprintln!(
                "wrote {} ({} steps, {} items)",
                args.out.display(),
                trace.len(),
                trace.item_count()
            );
            Ok(())
        }
        Command::Run(args) => {
            if args.format != "json" {
                return Err(Error::Validation(format!(
                    "run emits json, not {:?}",
                    args.format
                )));
            }
            let trace = load_trace(&args.trace, args.variant.as_deref())?;
            let policy = PolicySpec::parse(&args.policy, args.k)?;
            let oracle = args.oracle.as_deref().map(OracleKind::parse).transpose()?;
            let report = run_experiment(
                &policy,
                &trace,
                &args.trace.display().to_string(),
                oracle,
                &caps_with(args.brute_cap),
            )?;
            emit(args.out.as_ref(), &json(&report)?)
        }
        Command::Compare(args) => {
            let mut traces = Vec::new();
            for path in args.traces.split(',') {
                let path = PathBuf::from(path.trim());
                let trace = load_trace(&path, None)?;
                traces.push((path.display().to_string(), trace));
            }
            let mut policies = Vec::new();
            for name in args.policies.split(',') {
                policies.push(PolicySpec::parse(name.trim(), args.k)?);
            }
            let oracle = args.oracle.as_deref().map(OracleKind::parse).transpose()?;
            let (csv, reports) =
                compare(&policies, &traces, oracle, &caps_with(args.brute_cap))?;
            match args.format.as_str() {
                "csv" => emit(args.out.as_ref(), &csv),
                "json" => emit(args.out.as_ref(), &json(&reports)?),
                other => Err(Error::Validation(format!("unknown format {:?}", other))),
            }
        }
        Command::Opt(args) => {
            let trace = load_trace(&args.trace, args.variant.as_deref())?;
            let oracle = OracleKind::parse(&args.oracle)?;
            let report = solve_opt(&trace, oracle, args.k, &caps_with(args.brute_cap))?;
            emit(args.out.as_ref(), &json(&report)?)
        }
        Command::Adversary(args) => {
            let policy = PolicySpec::parse(&args.policy, Some(args.k))?;
            let epsilon: Weight = args.epsilon.parse()?;
            let run = adversary_run(&policy, args.k, &epsilon, args.step_cap)?;
            emit(args.out.as_ref(), &json(&run)?)
        }
        Command::LowerboundMinsum(args) => {
            let report = lowerbound_minsum(args.depth)?;
            emit(args.out.as_ref(), &json(&report)?)
        }
    }
}
