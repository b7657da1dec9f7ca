//! `coalition-sense`: runs the coalition-formation experiments from a JSON
//! scenario description and writes CSV or JSON results.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

const SCHEMA: &str = "\
CONFIGURATION SCHEMA (JSON; every field optional, missing fields take the defaults shown)
  n_sus                       integer  50        number of secondary users
  area_m                      meters   3000      side of the square deployment area
  pu_position_m               [x, y]   null      primary user position; null = center of the area
  channel.kappa               real     1         path-loss constant
  channel.mu                  real     3         path-loss exponent
  channel.noise_power_dbm     dBm      -90       noise power
  channel.pu_tx_power_mw      mW       100       primary user transmit power
  su_tx_power_mw              mW       10        reporting power of every user
  detection.m                 integer  5         time-bandwidth product
  detection.alpha             prob     0.1       per-user false-alarm ceiling
  detection.pf                prob     null      single false-alarm target (excludes lambda)
  detection.lambda            real     null      single energy threshold (excludes pf)
  detection.pf_sweep.lo       prob     0.001     sweep start, used when pf and lambda are null
  detection.pf_sweep.hi       prob     0.09      sweep end, must stay below alpha
  detection.pf_sweep.points   integer  10        geometric sweep points
  requirement                 object   {chi: 0.95}  detection target; null disables CF-PD
  requirement.chi             prob     0.95      target detection probability
  theta_s                     seconds  5         re-formation period (mobility)
  mobility_speeds_kmh         [km/h]   [0, 30, 60, 120]
  duration_s                  seconds  300       simulated time per mobility run
  trials                      integer  200       independent networks per grid point
  seed                        integer  1         master seed; COALITION_SENSE_SEED and --seed override it
  formation.discovery_radius_m  meters null      neighbor discovery range; null = unlimited
  formation.order             string   id-order  id-order | nearest-first | {\"seeded-random\": seed}
  formation.epsilon           real     1e-12     minimum payoff gain that counts as an improvement
  oracle.max_n                integer  7         exhaustive baselines run only up to this many users

Overrides use dotted paths, e.g. --overrides n_sus=16 detection.pf=0.01 requirement=null.
Values are parsed as JSON and fall back to plain strings.

EXIT STATUS
  0 success, 1 runtime failure, 2 configuration or usage error";

#[derive(Debug, Parser)]
#[command(name = "coalition-sense", version, about, after_long_help = SCHEMA)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario JSON file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted-path overrides, `key=value`.
    #[arg(long, global = true, num_args = 1.., value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output file, written atomically; stdout when omitted.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Master seed; beats COALITION_SENSE_SEED and the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; the global pool when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    dump_effective_config: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Form coalitions on one network and write a JSON snapshot.
    Run {
        /// Trial index selecting the network.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Also write the CF formation trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep every algorithm over trials and false-alarm targets; summary CSV.
    Sweep {
        /// Also write the summary as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Periodic re-formation under random-direction mobility; rates CSV.
    Mobility {
        /// Also write per-round coalition counts and sizes as CSV.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Per-instance comparison of CF and CF-PD with the exhaustive oracles.
    OracleCompare,
    /// Approximate and exact merge thresholds with distances and angles.
    Theorem1Table,
    /// Stability certificates of CF outputs on small networks.
    StabilityCheck,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(what: impl AsRef<std::path::Path>, e: std::io::Error) -> Self {
        Self::Runtime(format!("{}: {e}", what.as_ref().display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Config { .. } => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl From<coalition_sense::Error> for CliError {
    fn from(e: coalition_sense::Error) -> Self {
        match e {
            coalition_sense::Error::Config { field, reason } => Self::Config { field, reason },
            other => Self::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let c = cli.common;
    let config = config::load(c.config.as_deref(), &c.overrides, c.seed)?;
    let out = c.output.as_deref();
    if c.dump_effective_config {
        return output::emit(out, |w| {
            serde_json::to_writer_pretty(&mut *w, &config).map_err(|e| CliError::Runtime(e.to_string()))?;
            writeln!(w).map_err(|e| CliError::io("output", e))
        });
    }
    match cli.command {
        Command::Run { trial, trace } => commands::run(&config, trial, out, trace.as_deref()),
        Command::Sweep { json } => commands::sweep(&config, c.threads, out, json.as_deref()),
        Command::Mobility { series } => commands::mobility(&config, c.threads, out, series.as_deref()),
        Command::OracleCompare => commands::oracle_compare(&config, c.threads, out),
        Command::Theorem1Table => commands::theorem1_table(&config, out),
        Command::StabilityCheck => commands::stability_check(&config, out),
    }
}
