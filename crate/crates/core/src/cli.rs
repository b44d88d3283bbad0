//! Command-line front end: `run`, `sweep`, `compare` and `replay`.
//!
//! Exit codes: 0 success, 1 replay mismatch, 2 parse error, 3 validation
//! error, 4 runtime failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, ExperimentConfig, PolicyName};
use crate::error::{Error, Result};
use crate::policy::Statistic;
use crate::risk::{estimate_risk, summary_text, sweep, sweep_csv, CSV_HEADER};
use crate::trial::{parse_trace, replay_observations, write_trace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "scpa", about = "Sequential search for a change-point anomaly")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the risk at a single cost.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Cost per observation (defaults to the first configured cost).
        #[arg(long)]
        c: Option<f64>,
        /// Also write the step trace of this trial index.
        #[arg(long, value_name = "PATH")]
        trace_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        trace_trial: u64,
    },
    /// Sweep a list of costs and write one CSV row per cost.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',')]
        c_list: Option<Vec<f64>>,
    },
    /// Paired sweep of scpa, scpa-known-null and cusum on shared seeds.
    Compare {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',')]
        c_list: Option<Vec<f64>>,
    },
    /// Re-execute a trace file and check bitwise agreement.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// scpa | scpa-known-null | cusum
    #[arg(long)]
    policy: Option<String>,
    /// sallr | gllr
    #[arg(long)]
    statistic: Option<String>,
    #[arg(long)]
    cap: Option<u64>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.preset, &self.config) {
            (Some(name), None) => ExperimentConfig::preset(name)?,
            (None, Some(path)) => load_config(path)?,
            _ => {
                return Err(Error::config(
                    "preset",
                    "give exactly one of --preset or --config",
                ))
            }
        };
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(cap) = self.cap {
            cfg.cap = cap;
        }
        if let Some(p) = &self.policy {
            cfg.policy = PolicyName::parse(p)
                .ok_or_else(|| Error::config("policy", format!("unknown policy `{p}`")))?;
        }
        if let Some(s) = &self.statistic {
            cfg.statistic = match s.as_str() {
                "sallr" => Statistic::Sallr,
                "gllr" => Statistic::Gllr,
                _ => {
                    return Err(Error::config(
                        "statistic",
                        format!("unknown statistic `{s}`"),
                    ))
                }
            };
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.display().to_string());
        }
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) => EXIT_PARSE,
        Error::Config { .. } | Error::Domain(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn emit(output: Option<&str>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_PARSE,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run {
            exp,
            c,
            trace_out,
            trace_trial,
        } => {
            let mut cfg = exp.resolve()?;
            if let Some(c) = c {
                cfg.c_values = vec![c];
            }
            let scenario = cfg.scenario()?;
            let c = cfg.c_values[0];
            let report = estimate_risk(&scenario, c, cfg.trials, cfg.seed)?;
            emit(cfg.output.as_deref(), &summary_text(&report))?;
            if let Some(path) = trace_out {
                write_trace_file(&cfg, c, trace_trial, &path)?;
            }
            Ok(EXIT_OK)
        }
        Command::Sweep { exp, c_list } => {
            let mut cfg = exp.resolve()?;
            if let Some(list) = c_list {
                cfg.c_values = list;
            }
            let scenario = cfg.scenario()?;
            let reports = sweep(&scenario, &cfg.c_values, cfg.trials, cfg.seed)?;
            emit(cfg.output.as_deref(), &sweep_csv(&reports))?;
            Ok(EXIT_OK)
        }
        Command::Compare { exp, c_list } => {
            let mut cfg = exp.resolve()?;
            if let Some(list) = c_list {
                cfg.c_values = list;
            }
            cfg.validate()?;
            let mut out = format!("policy,{CSV_HEADER}\n");
            for policy in [
                PolicyName::Scpa,
                PolicyName::ScpaKnownNull,
                PolicyName::Cusum,
            ] {
                let pcfg = cfg.with_policy(policy);
                let scenario = pcfg.scenario()?;
                for r in sweep(&scenario, &pcfg.c_values, pcfg.trials, pcfg.seed)? {
                    out += &format!("{},{}\n", policy.as_str(), crate::risk::csv_row(&r));
                }
            }
            emit(cfg.output.as_deref(), &out)?;
            Ok(EXIT_OK)
        }
        Command::Replay { trace } => replay(&trace),
    }
}

/// Trace text of one trial, with enough header to re-run it.
pub fn trace_text(cfg: &ExperimentConfig, c: f64, trial: u64) -> Result<String> {
    let scenario = cfg.scenario()?;
    let trace = scenario.run_trial(c, cfg.seed, trial, true)?;
    let mut base = cfg.clone();
    base.output = None;
    let header = [
        ("config", base.to_json()),
        ("seed", cfg.seed.to_string()),
        ("trial", trial.to_string()),
        ("c", c.to_string()),
    ];
    Ok(write_trace(&trace, &header))
}

fn write_trace_file(cfg: &ExperimentConfig, c: f64, trial: u64, path: &Path) -> Result<()> {
    std::fs::write(path, trace_text(cfg, c, trial)?).map_err(Error::from)
}

fn header<'a>(parsed: &'a crate::trial::ParsedTrace, key: &str) -> Result<&'a str> {
    parsed
        .header_value(key)
        .ok_or_else(|| Error::Parse(format!("trace header lacks `{key}`")))
}

fn replay(path: &Path) -> Result<i32> {
    let text = std::fs::read_to_string(path)?;
    let parsed = parse_trace(&text)?;
    let cfg = ExperimentConfig::from_json(header(&parsed, "config")?)?;
    let seed: u64 = header(&parsed, "seed")?
        .parse()
        .map_err(|_| Error::Parse("bad seed in trace header".into()))?;
    let trial: u64 = header(&parsed, "trial")?
        .parse()
        .map_err(|_| Error::Parse("bad trial in trace header".into()))?;
    let c: f64 = header(&parsed, "c")?
        .parse()
        .map_err(|_| Error::Parse("bad c in trace header".into()))?;
    let mut cfg = cfg;
    cfg.seed = seed;

    // the recorded observations must drive a fresh policy to the same states
    let scenario = cfg.scenario()?;
    let mut policy = scenario.build_policy(c)?;
    if let Err(e) = replay_observations(policy.as_mut(), &parsed.lines) {
        eprintln!("replay mismatch: {e}");
        return Ok(EXIT_MISMATCH);
    }
    // and re-simulating from the seed must reproduce the file byte for byte
    let regenerated = trace_text(&cfg, c, trial)?;
    if regenerated != text {
        let line = regenerated
            .lines()
            .zip(text.lines())
            .position(|(a, b)| a != b)
            .map(|i| i + 1)
            .unwrap_or_else(|| regenerated.lines().count().min(text.lines().count()) + 1);
        eprintln!("replay mismatch: trace differs from re-simulation at line {line}");
        return Ok(EXIT_MISMATCH);
    }
    println!("replay ok: {} records", parsed.lines.len());
    Ok(EXIT_OK)
}
