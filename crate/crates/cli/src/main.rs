//! `bideconv` command-line interface.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use bideconv::evaluation::Association;
use bideconv::{CellRule, RhoMode};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bideconv", version, about = "Tumour-fraction estimation from paired cfDNA methylation profiles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a cohort: observations, truth, reference profiles and outcomes.
    Simulate(SimulateArgs),
    /// Estimate tumour fractions and feature parameters.
    Fit(FitArgs),
    /// Score estimates against a simulated truth or clinical outcomes.
    Eval(EvalArgs),
    /// Compare the grid likelihood with the quadrature oracle on a random battery.
    OracleCheck(OracleArgs),
    /// Kaplan-Meier curves, optionally split at the median of an estimate.
    Km(KmArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// JSON simulation config; defaults are used for missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum RhoModeArg {
    Separate,
    Shared,
    Zero,
}

impl From<RhoModeArg> for RhoMode {
    fn from(m: RhoModeArg) -> Self {
        match m {
            RhoModeArg::Separate => RhoMode::Separate,
            RhoModeArg::Shared => RhoMode::Shared,
            RhoModeArg::Zero => RhoMode::Zero,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Hybrid,
    Midpoint,
    Exact,
}

impl From<RuleArg> for CellRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Hybrid => CellRule::Hybrid,
            RuleArg::Midpoint => CellRule::Midpoint,
            RuleArg::Exact => CellRule::Exact,
        }
    }
}

#[derive(Args)]
pub struct FitArgs {
    /// Observation TSV: feature_id, then <patient>_pre / <patient>_post columns.
    #[arg(long)]
    pub counts: PathBuf,
    /// Tumour reference TSV: feature_id, log_mean, log_var.
    #[arg(long)]
    pub ref_tumour: PathBuf,
    /// Background reference TSV: feature_id, log_mean, log_var.
    #[arg(long)]
    pub ref_background: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Grid bins per axis.
    #[arg(long, default_value_t = 8)]
    pub bins: usize,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, value_enum, default_value = "separate")]
    pub rho_mode: RhoModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replacement for zero counts.
    #[arg(long, default_value_t = 0.5)]
    pub pseudo_count: f64,
    /// Initial correlation, or "random" for U(0, 0.95) draws from the seed.
    #[arg(long, default_value = "0.8")]
    pub rho_init: String,
    #[arg(long, value_enum, default_value = "hybrid")]
    pub rule: RuleArg,
    #[arg(long, default_value_t = 1e-4)]
    pub scalar_tol: f64,
    /// Coordinate cycles per block and sweep.
    #[arg(long, default_value_t = 1)]
    pub max_cycles: usize,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Predictor {
    Pi0,
    Pi1,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum AssociationArg {
    Pearson,
    Spearman,
}

impl From<AssociationArg> for Association {
    fn from(a: AssociationArg) -> Self {
        match a {
            AssociationArg::Pearson => Association::Pearson,
            AssociationArg::Spearman => Association::Spearman,
        }
    }
}

#[derive(Args)]
pub struct EvalArgs {
    /// Estimated fractions CSV: patient_id, pi0, pi1.
    #[arg(long)]
    pub pi_hat: PathBuf,
    /// Simulated truth JSON.
    #[arg(long, conflicts_with = "outcomes", required_unless_present = "outcomes")]
    pub truth: Option<PathBuf>,
    /// Outcomes CSV: patient_id, relapse_1yr, time_days, event.
    #[arg(long)]
    pub outcomes: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "pi1")]
    pub predictor: Predictor,
    #[arg(long, value_enum, default_value = "pearson")]
    pub association: AssociationArg,
    /// Also write Kaplan-Meier curves for the two predictor groups.
    #[arg(long)]
    pub km: bool,
}

#[derive(Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub cases: usize,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    pub bins: Vec<usize>,
}

#[derive(Args)]
pub struct KmArgs {
    #[arg(long)]
    pub outcomes: PathBuf,
    /// Split patients at the median of this estimate.
    #[arg(long)]
    pub pi_hat: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pi1")]
    pub predictor: Predictor,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<bideconv::Error> for CliError {
    fn from(e: bideconv::Error) -> Self {
        use bideconv::Error as E;
        let code = match &e {
            E::InvalidArgument(_) | E::Io(_) => 2,
            E::Data(_) | E::Csv(_) | E::Json(_) | E::UndefinedStatistic(_) | E::Separation(_) => 3,
            E::Numerical(_) | E::Initialisation(_) | E::QuadratureNonConvergence { .. } => 4,
        };
        Self { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Eval(a) => commands::eval(a),
        Command::OracleCheck(a) => commands::oracle_check(a),
        Command::Km(a) => commands::km(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
