use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use disaster_pay::adversary::{run_attack, AttackScript, Expected};
use disaster_pay::harness::{read_transcript, report, run_sweep, write_csv, write_transcript, RunSummary, SweepSpec};
use disaster_pay::ledger::{EventChain, QuorumPolicy, VerifyContext};
use disaster_pay::net::{ScenarioConfig, SimHooks, Simulation};
use disaster_pay::SimTime;

#[derive(Parser)]
#[command(name = "disaster-pay", version, about = "Offline endorsement payments: simulate, sweep, inspect")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and print its metrics.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the transcript here.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Write every endorser's final event chain into this directory.
        #[arg(long)]
        chains: Option<PathBuf>,
    },
    /// Run a parameter sweep and emit one CSV row per run.
    Sweep {
        spec: PathBuf,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute metrics from a saved transcript.
    Report {
        transcript: PathBuf,
        /// Width of the TCR-over-time bins, seconds.
        #[arg(long, default_value_t = 1800.0)]
        bin_s: f64,
    },
    /// Check a saved event chain.
    VerifyChain {
        chain: PathBuf,
        #[arg(long, default_value_t = 3)]
        quorum: usize,
        #[arg(long, default_value_t = 60.0)]
        staleness_s: f64,
        /// Verification time; defaults to the chain's last timestamp.
        #[arg(long)]
        now_s: Option<f64>,
    },
    /// Stage an attack on top of a scenario and report which defense caught it.
    Attack {
        scenario: PathBuf,
        script: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::parse(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    // Relative road-graph paths are relative to the scenario file.
    if !cfg.road_graph.is_empty() && Path::new(&cfg.road_graph).is_relative() {
        if let Some(dir) = path.parent() {
            cfg.road_graph = dir.join(&cfg.road_graph).to_string_lossy().into_owned();
        }
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn print_summary(s: &RunSummary) {
    println!("orders {}  successes {}  TCR {:.4}  VR {:.4}", s.orders, s.successes, s.tcr, s.vr);
    println!(
        "merchant bytes/tx {:.1}  completion {:.3} s  buffer drops {}  journal sum {}",
        s.merchant_bytes, s.completion_s, s.buffer_drops, s.journal_sum
    );
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run { scenario, seed, transcript, chains } => {
            let cfg = load_scenario(&scenario, seed)?;
            let run = Simulation::new(cfg.clone(), SimHooks::default())?.run();
            print_summary(&RunSummary::of(&run));
            if let Some(p) = transcript {
                fs::write(&p, write_transcript(&cfg, &run.transcript))
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            if let Some(dir) = chains {
                fs::create_dir_all(&dir)?;
                for c in &run.final_chains {
                    let p = dir.join(format!("{}.chain", c.owner));
                    fs::write(&p, c.encode(&run.directory.keys)).with_context(|| format!("writing {}", p.display()))?;
                }
            }
        }
        Cmd::Sweep { spec, out } => {
            let spec = SweepSpec::parse(&read(&spec)?)?;
            let rows = run_sweep(&spec)?;
            match out {
                Some(p) => write_csv(fs::File::create(&p)?, &rows)?,
                None => write_csv(std::io::stdout().lock(), &rows)?,
            }
        }
        Cmd::Report { transcript, bin_s } => {
            let (cfg, lines) = read_transcript(&read(&transcript)?)?;
            if let Some(cfg) = cfg {
                println!("scenario: {} nodes, seed {}", cfg.nodes, cfg.seed);
            }
            print!("{}", report(&lines, SimTime::from_secs_f64(bin_s)));
        }
        Cmd::VerifyChain { chain, quorum, staleness_s, now_s } => {
            let bytes = fs::read(&chain).with_context(|| format!("reading {}", chain.display()))?;
            let (chain, keys) = EventChain::decode(&bytes)?;
            let now = match now_s {
                Some(s) => SimTime::from_secs_f64(s),
                None => chain.last_block().map_or(SimTime::ZERO, |b| b.timestamp),
            };
            let policy = QuorumPolicy { quorum, staleness: SimTime::from_secs_f64(staleness_s) };
            let verdict = chain.verify(&VerifyContext { now, policy, keys: &keys });
            println!("owner {}  blocks {}  verdict {:?}", chain.owner, chain.len(), verdict);
            if !verdict.is_valid() {
                bail!("chain is invalid");
            }
        }
        Cmd::Attack { scenario, script, seed, transcript } => {
            let cfg = load_scenario(&scenario, seed)?;
            let script = AttackScript::parse(&read(&script)?)?;
            let r = run_attack(&cfg, &script)?;
            let expected = match r.expected {
                Expected::CaughtBy(reason) => format!("rejected with {reason}"),
                Expected::UndetectableByDesign => "completes (undetectable by design)".to_string(),
            };
            println!("attack {}  tx {}", script.kind, r.tx.as_deref().unwrap_or("-"));
            println!("expected: {expected}");
            println!("observed: {:?}", r.outcome);
            println!("journal sum {}", r.run.journal_sum);
            if let Some(p) = transcript {
                fs::write(&p, write_transcript(&r.run.config, &r.run.transcript))?;
            }
            if !r.as_expected() {
                bail!("attack outcome differs from the expected one");
            }
        }
    }
    Ok(())
}
