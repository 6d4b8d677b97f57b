//! `linflow`: generate power flow snapshots, fit data-driven linear models
//! and compare them with the DC and decoupled linear approximations.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use linflow_core::mapping::{BranchInput, ModelKind};
use linflow_core::regression::Engine;

use config::GenMode;

/// A failure with the exit code it maps to: 2 for bad usage or input,
/// 3 for numerical trouble.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<linflow_core::Error> for CliError {
    fn from(e: linflow_core::Error) -> Self {
        CliError {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "linflow", version, about = "Data-driven power flow linearization")]
pub struct Cli {
    /// Seed for every random draw (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML (or JSON) file with run settings; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for the written artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Only print errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Forward,
    Inverse,
    Branch,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Forward => ModelKind::Forward,
            KindArg::Inverse => ModelKind::Inverse,
            KindArg::Branch => ModelKind::Branch,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EngineArg {
    Ols,
    Pls,
    Blr,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Ols => Engine::Ols,
            EngineArg::Pls => Engine::Pls,
            EngineArg::Blr => Engine::Blr,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BranchInputArg {
    Injections,
    Voltages,
}

impl From<BranchInputArg> for BranchInput {
    fn from(b: BranchInputArg) -> Self {
        match b {
            BranchInputArg::Injections => BranchInput::Injections,
            BranchInputArg::Voltages => BranchInput::Voltages,
        }
    }
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<[T; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok([
            a.parse().map_err(|_| format!("not a number: {a:?}"))?,
            b.parse().map_err(|_| format!("not a number: {b:?}"))?,
        ]),
        _ => Err(format!("expected two comma-separated values, got {s:?}")),
    }
}

fn parse_range(s: &str) -> Result<[f64; 2], String> {
    parse_pair(s)
}

fn parse_split(s: &str) -> Result<[usize; 2], String> {
    parse_pair(s)
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Summarize a case: sizes, bus types, block ordering, nominal power flow.
    Inspect {
        /// Case file or bundled case name (two_bus, ieee5, ieee30, ieee33, ieee57, ieee118).
        case: String,
    },
    /// Draw operating snapshots and solve them with the AC power flow.
    Gen {
        case: String,
        #[arg(long, value_enum)]
        mode: Option<GenMode>,
        /// Number of snapshots.
        #[arg(long)]
        n: Option<usize>,
        /// Also split into train and test sets of these sizes.
        #[arg(long, value_name = "TRAIN,TEST", value_parser = parse_split)]
        split: Option<[usize; 2]>,
        /// Profile CSV (profiles mode); the built-in daily curve when absent.
        #[arg(long)]
        profiles: Option<String>,
        /// Swing of the built-in daily curve, as a fraction of demand.
        #[arg(long)]
        amplitude: Option<f64>,
        /// Multiplicative noise on profile demand.
        #[arg(long)]
        noise_sigma: Option<f64>,
        /// Output file stem (default `<case>_<mode>`).
        #[arg(long)]
        name: Option<String>,
    },
    /// Fit a forward, inverse or branch-flow model to a dataset.
    Fit {
        dataset: PathBuf,
        /// Case the dataset was generated from (default: the dataset's own reference).
        #[arg(long)]
        case: Option<String>,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[arg(long, value_enum)]
        engine: Option<EngineArg>,
        /// PLS component count (cross-validated when absent).
        #[arg(long)]
        components: Option<usize>,
        #[arg(long, value_enum)]
        branch_input: Option<BranchInputArg>,
        /// Output file stem (default `<kind>_<engine>`).
        #[arg(long)]
        name: Option<String>,
    },
    /// Score all baselines and regression engines on a test set.
    Eval {
        case: String,
        train: PathBuf,
        test: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',')]
        engines: Option<Vec<EngineArg>>,
        /// Also write the inverse-mapping collinearity contrast.
        #[arg(long)]
        contrast: bool,
        #[arg(long, value_enum)]
        branch_input: Option<BranchInputArg>,
    },
    /// θ₂ of a two-bus case over a (P₂, Q₂) grid by ACPF, DLPF and DCPF.
    Surface {
        case: String,
        #[arg(long, value_name = "MIN,MAX", value_parser = parse_range, allow_hyphen_values = true)]
        p_range: Option<[f64; 2]>,
        #[arg(long, value_name = "MIN,MAX", value_parser = parse_range, allow_hyphen_values = true)]
        q_range: Option<[f64; 2]>,
        /// Points per axis.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Compare a fitted model's matrix with its physical counterpart.
    Similarity {
        model: PathBuf,
        #[arg(long)]
        case: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
