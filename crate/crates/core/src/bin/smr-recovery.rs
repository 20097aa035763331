use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_rational::BigRational;

use smr_recovery::harness::{audit, report, resilience_schedule, sweep};
use smr_recovery::netsim::{run_with, Recording, RunOptions, ScenarioConfig, Trace};

#[derive(Parser)]
#[command(version, about = "Simulate and check recovery from consistency violations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and check every bound on its trace.
    Run {
        config: PathBuf,
        /// Write the trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the JSON report.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Print the JSON report instead of the table.
        #[arg(long)]
        json: bool,
        /// Keep only state and recovery records in the trace.
        #[arg(long)]
        summary_only: bool,
    },
    /// Run a scenario over a range of seeds.
    Sweep {
        config: PathBuf,
        /// `A..B` (exclusive) or `A..=B`.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Range<u64>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Replay a stored trace and re-derive its report.
    Audit {
        trace: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Print the resilience schedule g1, g2 for r = 0..=R.
    Schedule {
        #[arg(long, value_parser = parse_ratio)]
        rc: BigRational,
        #[arg(long, value_parser = parse_ratio)]
        rl: BigRational,
        #[arg(long)]
        r: u32,
    },
}

fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let (a, b, inclusive) = match s.split_once("..=") {
        Some((a, b)) => (a, b, true),
        None => {
            let (a, b) = s.split_once("..").ok_or("expected A..B")?;
            (a, b, false)
        }
    };
    let a: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    let end = if inclusive { b + 1 } else { b };
    if end <= a {
        return Err("empty seed range".into());
    }
    Ok(a..end)
}

fn parse_ratio(s: &str) -> Result<BigRational, String> {
    s.parse::<BigRational>().map_err(|e| format!("{s}: {e}"))
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

type Failure = Box<dyn std::error::Error>;

fn read_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let cfg: ScenarioConfig = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    Ok(cfg)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn execute(cmd: Command) -> Result<bool, Failure> {
    match cmd {
        Command::Run {
            config,
            trace,
            report: out,
            json,
            summary_only,
        } => {
            let cfg = read_config(&config)?;
            let opts = RunOptions {
                recording: if summary_only { Recording::Summary } else { Recording::Full },
                check_agreement: true,
            };
            let t = run_with(&cfg, opts)?;
            if let Some(path) = trace {
                t.write_jsonl(BufWriter::new(File::create(path)?))?;
            }
            let r = report(&t);
            if let Some(path) = out {
                write_json(&path, &r)?;
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                print!("{}", r.table());
            }
            Ok(r.passed)
        }
        Command::Sweep {
            config,
            seeds,
            report: out,
            json,
        } => {
            let cfg = read_config(&config)?;
            let s = sweep(&cfg, seeds)?;
            if let Some(path) = out {
                write_json(&path, &s)?;
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&s)?);
            } else {
                print!("{}", s.table());
            }
            Ok(s.passed)
        }
        Command::Audit { trace, json } => {
            let t = Trace::read_jsonl(BufReader::new(File::open(trace)?))?;
            let a = audit(&t)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&a)?);
            } else {
                print!("{}", a.report.table());
                for c in &a.checks {
                    let mark = if c.passed { "PASS" } else { "FAIL" };
                    println!("  {mark}  {}  {}", c.name, c.detail);
                }
            }
            Ok(a.passed)
        }
        Command::Schedule { rc, rl, r } => {
            println!("{:>3}  {:>12}  {:>12}", "r", "g1", "g2");
            for k in 0..=r {
                let (g1, g2) = resilience_schedule(&rc, &rl, k)?;
                println!("{k:>3}  {:>12}  {:>12}", g1.to_string(), g2.to_string());
            }
            Ok(true)
        }
    }
}
