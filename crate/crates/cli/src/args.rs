use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use sandpile_core::{MeasureSpec, SchedulerKind, Window};

#[derive(Debug, Parser)]
#[command(name = "sandpile", version, about = "Seeded sandpile stabilization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Stabilize one sampled window and write heights, topples and ledger.
    Stabilize(StabilizeArgs),
    /// One-sided run in d = 1: zero raster and event log.
    Zeros(ZerosArgs),
    /// Origin-cluster survival tails of toppled and occupied sites.
    Tail(TailArgs),
    /// KS checks on excursion lengths of the zero count.
    Iid(IidArgs),
    /// Scaled height sums over [-n, n].
    Clt(CltArgs),
    /// Interior density before and after stabilization.
    Density(DensityArgs),
    /// Exploratory growth of origin topple counts with box radius.
    Scan(ScanArgs),
    /// Re-run the command recorded in a manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Stabilize(_) => "stabilize",
            Command::Zeros(_) => "zeros",
            Command::Tail(_) => "tail",
            Command::Iid(_) => "iid",
            Command::Clt(_) => "clt",
            Command::Density(_) => "density",
            Command::Scan(_) => "scan",
            Command::Replay(_) => "replay",
        }
    }

    pub fn common(&self) -> Option<&CommonArgs> {
        match self {
            Command::Stabilize(a) => Some(&a.common),
            Command::Zeros(a) => Some(&a.common),
            Command::Tail(a) => Some(&a.common),
            Command::Iid(a) => Some(&a.common),
            Command::Clt(a) => Some(&a.common),
            Command::Density(a) => Some(&a.common),
            Command::Scan(a) => Some(&a.common),
            Command::Replay(_) => None,
        }
    }

    pub fn common_mut(&mut self) -> Option<&mut CommonArgs> {
        match self {
            Command::Stabilize(a) => Some(&mut a.common),
            Command::Zeros(a) => Some(&mut a.common),
            Command::Tail(a) => Some(&mut a.common),
            Command::Iid(a) => Some(&mut a.common),
            Command::Clt(a) => Some(&mut a.common),
            Command::Density(a) => Some(&mut a.common),
            Command::Scan(a) => Some(&mut a.common),
            Command::Replay(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Pgm,
    Json,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CommonArgs {
    /// Lattice dimension.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..=8))]
    pub d: u64,
    /// poisson:R, twopoint:V,P, constant:H or defect:BG,X1[,X2...],H.
    #[arg(long, value_parser = parse_measure)]
    pub measure: Option<String>,
    /// Window bounds per axis, e.g. -5:5 or -5:5,-3:3.
    #[arg(long, value_parser = parse_window_text, allow_hyphen_values = true)]
    pub window: Option<String>,
    /// Half-width of the centred box [-K, K]^d.
    #[arg(long)]
    pub radius: Option<u64>,
    /// nested, parallel, randomseq or waves.
    #[arg(long, default_value = "nested", value_parser = parse_scheduler)]
    pub scheduler: String,
    /// Master seed; replicate i uses stream i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub replicates: Option<u64>,
    /// Maximum elementary topplings per stabilization.
    #[arg(long, default_value_t = sandpile_core::DEFAULT_BUDGET)]
    pub budget: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct StabilizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ZerosArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Last time step.
    #[arg(long, default_value_t = 10_000)]
    pub nmax: usize,
    /// Collapse scale x scale pixel blocks of the raster into one.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub scale: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TailArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Largest cluster-size threshold.
    #[arg(long, default_value_t = 30)]
    pub max_threshold: usize,
    #[arg(long, default_value_t = 5)]
    pub fit_min: usize,
    #[arg(long, default_value_t = 30)]
    pub fit_max: usize,
    /// Replicates a threshold needs before it enters the fit.
    #[arg(long, default_value_t = sandpile_core::percolation::DEFAULT_MIN_COUNT)]
    pub min_count: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct IidArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 1_000_000)]
    pub nmax: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub levels: Vec<u64>,
    #[arg(long, default_value_t = 50)]
    pub min_intervals: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CltArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DensityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Poisson densities to scan.
    #[arg(long, value_delimiter = ',', default_value = "0.8,1.2")]
    pub densities: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "500,1000")]
    pub radii: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_measure(s: &str) -> Result<String, String> {
    s.parse::<MeasureSpec>().map_err(|e| e.to_string())?;
    Ok(s.to_string())
}

fn parse_scheduler(s: &str) -> Result<String, String> {
    s.parse::<SchedulerKind>()?;
    Ok(s.to_string())
}

fn parse_window_text(s: &str) -> Result<String, String> {
    parse_window(s)?;
    Ok(s.to_string())
}

/// `LO:HI[,LO:HI...]`.
pub fn parse_window(s: &str) -> Result<Window, String> {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for part in s.split(',') {
        let (lo, hi) = part
            .split_once(':')
            .ok_or_else(|| format!("window axis `{part}` is not LO:HI"))?;
        lower.push(lo.trim().parse::<i64>().map_err(|e| format!("`{lo}`: {e}"))?);
        upper.push(hi.trim().parse::<i64>().map_err(|e| format!("`{hi}`: {e}"))?);
    }
    Window::new(lower, upper).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_parse() {
        let w = parse_window("-1:1").unwrap();
        assert_eq!((w.lower(), w.upper()), (&[-1][..], &[1][..]));
        let w = parse_window("-2:2,0:3").unwrap();
        assert_eq!(w.len(), 20);
        assert!(parse_window("1:0").is_err());
        assert!(parse_window("3").is_err());
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "sandpile", "stabilize", "--d", "1", "--measure", "defect:1,0,2", "--window", "-1:1", "--scheduler",
            "parallel",
        ])
        .unwrap();
        let Command::Stabilize(a) = cli.command else { panic!() };
        assert_eq!(a.common.window.as_deref(), Some("-1:1"));
        assert!(Cli::try_parse_from(["sandpile", "stabilize", "--scheduler", "fifo"]).is_err());
        assert!(Cli::try_parse_from(["sandpile", "stabilize", "--measure", "poisson:-1"]).is_err());
    }

    #[test]
    fn commands_round_trip_through_json() {
        let cli = Cli::try_parse_from(["sandpile", "iid", "--levels", "1,3", "--seed", "5"]).unwrap();
        let text = serde_json::to_string(&cli.command).unwrap();
        let back: Command = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cli.command);
    }
}
