use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ondemand_harness::impossibility::{self, ConstructionError, Demonstration};
use ondemand_harness::majority::check_fastpath_majority;
use ondemand_harness::properties;
use ondemand_harness::replay::ReplayBundle;
use ondemand_harness::report::RunSummary;
use ondemand_harness::scenario::{ProtocolName, Scenario};
use ondemand_harness::sweep::{self, StrategyKind, SweepConfig, Workload};

#[derive(Parser)]
#[command(name = "ondemand", version, about = "Simulate and check consensus-on-demand payment protocols")]
struct Cli {
    /// Report format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Human)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Jsonl,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario file and check every property.
    Run {
        scenario: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario step bound.
        #[arg(long)]
        max_steps: Option<u64>,
        /// Write the trace here, one JSON record per line.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Where to write the replay bundle on a violation.
        #[arg(long, default_value = "replay.json")]
        bundle: PathBuf,
    },
    /// Run the property suites over a grid of sizes, seeds and adversaries.
    Sweep {
        #[arg(long, default_value_t = 0)]
        seed_start: u64,
        #[arg(long, default_value_t = 1000)]
        seeds: u64,
        /// Comma separated `n:f` pairs.
        #[arg(long, value_delimiter = ',', default_value = "6:1,11:2,16:3")]
        sizes: Vec<String>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "brb,cod")]
        protocols: Vec<ProtocolArg>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "fault-free,double-spend")]
        workloads: Vec<WorkloadArg>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "silent,equivocate,ack-stuff")]
        strategies: Vec<StrategyArg>,
        #[arg(long)]
        post_consensus_sync: bool,
        #[arg(long, default_value_t = ondemand_simnet::DEFAULT_MAX_STEPS)]
        max_steps: u64,
        #[arg(long, default_value = "replay.json")]
        bundle: PathBuf,
    },
    /// Exhaustively check that a fast acceptance fixes the slow-path plurality.
    CheckMajority {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        f: usize,
    },
    /// Agreement violation of a one-round decider with n = 5f, asynchronous.
    ImpossibleAsync {
        #[arg(long, default_value_t = 1)]
        f: usize,
        /// Write the naive and control scenarios and traces into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agreement violation of a one-round decider with n = 4f, synchronous.
    ImpossibleSync {
        #[arg(long, default_value_t = 1)]
        f: usize,
        /// System size; defaults to 4f.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a replay bundle and compare traces byte for byte.
    Replay { bundle: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Brb,
    Cod,
}

#[derive(Clone, Copy, ValueEnum)]
enum WorkloadArg {
    FaultFree,
    DoubleSpend,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Silent,
    Equivocate,
    AckStuff,
}

/// Outcome of a verb that ran to completion.
enum Verdict {
    Holds,
    Violated,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(Verdict::Holds) => ExitCode::SUCCESS,
        Ok(Verdict::Violated) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<Verdict> {
    let fmt = cli.format;
    match cli.cmd {
        Cmd::Run {
            scenario,
            seed,
            max_steps,
            trace,
            bundle,
        } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(m) = max_steps {
                s.max_steps = m;
            }
            let run = ondemand_harness::run(&s)?;
            let props = properties::check(&run);
            if let Some(path) = trace {
                write(&path, &run.trace_jsonl())?;
            }
            let summary = RunSummary::new(&s, &run, &props);
            match fmt {
                Format::Human => print!("{}", summary.to_human()),
                Format::Jsonl => println!("{}", summary.to_json_line()),
            }
            if props.holds() {
                Ok(Verdict::Holds)
            } else {
                let b = ReplayBundle {
                    scenario: s.clone(),
                    scenario_digest: s.digest(),
                    trace_sha256: run.trace_sha256(),
                    trace: run.trace_jsonl(),
                };
                write(&bundle, &b.to_json())?;
                eprintln!("replay bundle written to {}", bundle.display());
                Ok(Verdict::Violated)
            }
        }
        Cmd::Sweep {
            seed_start,
            seeds,
            sizes,
            protocols,
            workloads,
            strategies,
            post_consensus_sync,
            max_steps,
            bundle,
        } => {
            let cfg = SweepConfig {
                sizes: sizes.iter().map(|s| parse_size(s)).collect::<Result<_>>()?,
                seeds: seed_start..seed_start.checked_add(seeds).context("seed range overflows")?,
                protocols: protocols
                    .into_iter()
                    .map(|p| match p {
                        ProtocolArg::Brb => ProtocolName::Brb,
                        ProtocolArg::Cod => ProtocolName::Cod,
                    })
                    .collect(),
                workloads: workloads
                    .into_iter()
                    .map(|w| match w {
                        WorkloadArg::FaultFree => Workload::FaultFree,
                        WorkloadArg::DoubleSpend => Workload::DoubleSpend,
                    })
                    .collect(),
                strategies: strategies
                    .into_iter()
                    .map(|s| match s {
                        StrategyArg::Silent => StrategyKind::Silent,
                        StrategyArg::Equivocate => StrategyKind::Equivocate,
                        StrategyArg::AckStuff => StrategyKind::AckStuff,
                    })
                    .collect(),
                post_consensus_sync,
                max_steps,
            };
            if max_steps == 0 {
                bail!("--max-steps must be positive");
            }
            let (rep, _) = sweep::sweep(&cfg);
            match fmt {
                Format::Jsonl => println!("{}", serde_json::to_string(&rep)?),
                Format::Human => {
                    println!("{} runs, {} failed", rep.runs, rep.failures);
                    for (p, (checked, failed)) in &rep.properties {
                        println!("  {:<20} checked {checked:>6}  failed {failed}", p.name());
                    }
                    for (k, t) in &rep.tallies {
                        println!(
                            "  {k:<18} runs {:>6}  undecided {:>5}  with consensus {:>5}  invocations {:>6}  truncated {}",
                            t.runs, t.undecided_runs, t.runs_with_consensus, t.consensus_invocations, t.truncated
                        );
                    }
                }
            }
            match &rep.first_failure {
                None => Ok(Verdict::Holds),
                Some(fail) => {
                    eprintln!(
                        "first failure: {:?} n={} f={} seed={}: {}",
                        fail.job.protocol,
                        fail.job.n,
                        fail.job.f,
                        fail.job.seed,
                        fail.violations[0].detail
                    );
                    let b = ReplayBundle::record(&fail.scenario)?;
                    write(&bundle, &b.to_json())?;
                    eprintln!("replay bundle written to {}", bundle.display());
                    Ok(Verdict::Violated)
                }
            }
        }
        Cmd::CheckMajority { n, f } => {
            let v = check_fastpath_majority(n, f)?;
            match fmt {
                Format::Jsonl => println!("{}", serde_json::to_string(&v)?),
                Format::Human => {
                    println!(
                        "n={n} f={f} fast threshold {}: {} assignments, {} samples checked",
                        v.fast_threshold, v.assignments, v.samples
                    );
                    match &v.counterexample {
                        None => println!("PASS: every n-f sample shows t as strict plurality"),
                        Some(cx) => println!(
                            "FAIL: assignment {:?}, sample {:?} has {} for t and {} otherwise",
                            cx.assignment, cx.sample, cx.sample_t, cx.sample_other
                        ),
                    }
                }
            }
            Ok(if v.pass() {
                Verdict::Holds
            } else {
                Verdict::Violated
            })
        }
        Cmd::ImpossibleAsync { f, out } => demo(impossibility::impossibility_async(f), out, fmt),
        Cmd::ImpossibleSync { f, n, out } => {
            demo(impossibility::impossibility_sync(f, n), out, fmt)
        }
        Cmd::Replay { bundle } => {
            let b = ReplayBundle::load(&bundle)?;
            let o = b.replay()?;
            match fmt {
                Format::Jsonl => println!("{}", serde_json::to_string(&o)?),
                Format::Human => match o.first_divergence {
                    None => println!("identical trace {}", o.actual_sha256),
                    Some(line) => println!(
                        "trace differs from line {line}: expected {} got {}",
                        o.expected_sha256, o.actual_sha256
                    ),
                },
            }
            Ok(if o.identical {
                Verdict::Holds
            } else {
                Verdict::Violated
            })
        }
    }
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (n, f) = s
        .split_once(':')
        .with_context(|| format!("size {s:?} is not n:f"))?;
    Ok((
        n.trim().parse().with_context(|| format!("bad n in {s:?}"))?,
        f.trim().parse().with_context(|| format!("bad f in {s:?}"))?,
    ))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Exit 0 when the naive decider breaks agreement and the control does not.
fn demo(
    d: Result<Demonstration, ConstructionError>,
    out: Option<PathBuf>,
    fmt: Format,
) -> Result<Verdict> {
    let d = d?;
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
        for (name, o) in [("naive", &d.naive), ("control", &d.control)] {
            write(&dir.join(format!("{name}.scenario.json")), &o.scenario.to_json())?;
            write(&dir.join(format!("{name}.trace.jsonl")), &o.run.trace_jsonl())?;
        }
    }
    match fmt {
        Format::Jsonl => println!("{}", serde_json::to_string(&d)?),
        Format::Human => {
            println!(
                "{:?}: n={} f={} victim {} t={} t'={}",
                d.model, d.groups.n, d.groups.f, d.groups.victim, d.t, d.t_prime
            );
            for (name, o) in [("naive", &d.naive), ("control", &d.control)] {
                println!(
                    "  {name} (n={}): agreement {}",
                    o.run.params.n,
                    if o.agreement_violated { "VIOLATED" } else { "holds" }
                );
                for (s, v) in &o.decisions {
                    println!("    server {s}: {}", v.as_deref().unwrap_or("undecided"));
                }
            }
            println!(
                "{}",
                if d.reproduced() {
                    "reproduced"
                } else {
                    "NOT reproduced"
                }
            );
        }
    }
    Ok(if d.reproduced() {
        Verdict::Holds
    } else {
        Verdict::Violated
    })
}
