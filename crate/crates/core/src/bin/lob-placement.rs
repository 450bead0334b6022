use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lob_placement::empirics::{self, ProfileConfig};
use lob_placement::evaluator::write_paths_csv;
use lob_placement::latency::write_latency_csv;
use lob_placement::scenario::{self, ScenarioConfig};
use lob_placement::solver::{reachable, solve_on, write_solution_csv};
use lob_placement::{Control, Error, ExecFlag, OrderbookState, Result};

#[derive(Parser)]
#[command(name = "lob-placement", version, about = "Optimal limit order placement under queue imbalance")]
struct Cli {
    /// Worker threads for grid and layer parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; stdout when omitted or `-`. Falls back to the scenario's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal and fixed-control values for each grid state.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Also write the full value/policy table of the first grid state.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Optimal against always-stay metrics over the imbalance grid.
    SweepImbalance {
        #[command(flatten)]
        common: Common,
    },
    /// Value and stay share as functions of remaining time.
    SweepHorizon {
        #[command(flatten)]
        common: Common,
    },
    /// Latency cost curves over tau (and alpha).
    Latency {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo replay of the optimal policy.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        paths: Option<usize>,
        /// Per-path log of the first grid state.
        #[arg(long)]
        paths_log: Option<PathBuf>,
    },
    /// Imbalance diagnostics on quote and trade files.
    Empirics {
        #[arg(long)]
        quotes: PathBuf,
        #[arg(long)]
        trades: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Profile settings as JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Agents for neutralized imbalance and price profiles (repeatable).
        #[arg(long = "agent")]
        agents: Vec<String>,
    },
    /// One normalized kernel row as JSON.
    KernelDump {
        #[arg(long)]
        config: PathBuf,
        /// `q_before,q_after,q_opp,price_half_ticks[,exec]`.
        #[arg(long)]
        state: String,
        #[arg(long, default_value = "stay")]
        control: Control,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
        Some(p) if p.as_os_str() == "-" => Ok(Box::new(BufWriter::new(io::stdout()))),
        Some(p) => Ok(Box::new(BufWriter::new(File::create(p)?))),
    }
}

fn load(common: &Common) -> Result<(ScenarioConfig, Box<dyn Write>)> {
    let config = ScenarioConfig::load(&common.config)?;
    let fallback = config.output.as_ref().map(PathBuf::from);
    let out = output(common.out.as_deref().or(fallback.as_deref()))?;
    Ok((config, out))
}

fn parse_state(text: &str) -> Result<OrderbookState> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 && parts.len() != 5 {
        return Err(Error::Argument(format!("state needs 4 or 5 fields, got {text:?}")));
    }
    let bad = |e: std::num::ParseIntError| Error::Argument(format!("state {text:?}: {e}"));
    let q = |i: usize| parts[i].parse::<u32>().map_err(bad);
    let half: i64 = parts[3].parse().map_err(bad)?;
    let exec = match parts.get(4) {
        None => ExecFlag::NotExecuted,
        Some(c) => {
            let code: i8 = c.parse().map_err(bad)?;
            ExecFlag::from_code(code)
                .ok_or_else(|| Error::Argument(format!("exec code {code} is not -1, 0 or 1")))?
        }
    };
    Ok(OrderbookState {
        q_before: q(0)?,
        q_after: q(1)?,
        q_opp: q(2)?,
        price_half_ticks: half,
        exec,
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Argument(e.to_string()))?;
    }
    match cli.command {
        Command::Solve { common, table } => {
            let (config, out) = load(&common)?;
            scenario::write_rows(&scenario::run_solve(&config)?, out)?;
            if let Some(path) = table {
                let s = config.grid.states()[0];
                let space = std::sync::Arc::new(reachable(s, &config.params)?);
                write_solution_csv(&solve_on(&space, &config.params)?, output(Some(&path))?)?;
            }
        }
        Command::SweepImbalance { common } => {
            let (config, out) = load(&common)?;
            scenario::write_rows(&scenario::sweep_imbalance(&config)?, out)?;
        }
        Command::SweepHorizon { common } => {
            let (config, out) = load(&common)?;
            scenario::write_rows(&scenario::sweep_horizon(&config)?, out)?;
        }
        Command::Latency { common } => {
            let (config, out) = load(&common)?;
            write_latency_csv(&scenario::run_latency(&config)?, out)?;
        }
        Command::Simulate { common, seed, paths, paths_log } => {
            let (config, out) = load(&common)?;
            let n = paths.unwrap_or(config.n_paths);
            let (rows, first) = scenario::run_simulate(&config, n, seed.unwrap_or(config.seed))?;
            scenario::write_rows(&rows, out)?;
            if let Some(path) = paths_log {
                write_paths_csv(&first, output(Some(&path))?)?;
            }
        }
        Command::Empirics { quotes, trades, out, config, agents } => {
            let profile = match config {
                None => ProfileConfig::default(),
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            };
            empirics::run_report(&quotes, &trades, &out, &profile, &agents)?;
        }
        Command::KernelDump { config, state, control, out } => {
            let config = ScenarioConfig::load(&config)?;
            let dump = scenario::kernel_dump(parse_state(&state)?, control, &config.params)?;
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &dump)?;
            writeln!(w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
