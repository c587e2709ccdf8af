//! `revar`: fit, select, simulate and forecast VAR models from the command
//! line. Each run writes its results plus a `manifest.json` that `revar
//! replay` can re-execute.

mod commands;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use revar::{Algorithm, Criterion, ModelKind, RefitPolicy};
use serde::{Deserialize, Serialize};

use crate::io::{CliError, CliResult, OutDir};

#[derive(Parser, Debug)]
#[command(name = "revar", version, about = "Reduced-rank envelope VAR estimation")]
struct Cli {
    /// Worker threads for parallel work. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for results.
    #[arg(long, global = true, env = "REVAR_OUT_DIR", default_value = "revar-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Fit one model, or all four, at given dimensions.
    Fit(FitArgs),
    /// Choose the lag order, rank and envelope dimension.
    Select(SelectArgs),
    /// Run Monte-Carlo and selection studies from a scenario file.
    Simulate(SimulateArgs),
    /// Pseudo-real-time forecast comparison, optionally bootstrapped.
    Forecast(ForecastArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Olsvar,
    Rrvar,
    Evar,
    Revar,
    All,
}

impl ModelChoice {
    pub fn models(self) -> Vec<ModelKind> {
        match self {
            ModelChoice::Olsvar => vec![ModelKind::Olsvar],
            ModelChoice::Rrvar => vec![ModelKind::Rrvar],
            ModelChoice::Evar => vec![ModelKind::Evar],
            ModelChoice::Revar => vec![ModelKind::Revar],
            ModelChoice::All => ModelKind::ALL.to_vec(),
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectMode {
    /// Information criterion over the joint (d, u) grid.
    Grid,
    /// Sequential rank test, then sequential likelihood-ratio tests for u.
    Sequential,
    /// Information criterion over u with d fixed by `--d`.
    GivenRank,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Mc,
    Selection,
    Both,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerArgs {
    /// Envelope optimizer: fg, 1d or auto.
    #[arg(long, default_value = "auto")]
    pub algorithm: Algorithm,
    /// Seed for the optimizer's random starts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of FG starting points.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Iteration cap per start.
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl OptimizerArgs {
    pub fn options(&self) -> revar::OptimizerOptions {
        let mut opts = revar::OptimizerOptions {
            seed: self.seed,
            ..Default::default()
        };
        if let Some(r) = self.restarts {
            opts.restarts = r;
        }
        if let Some(m) = self.max_iter {
            opts.max_iter = m;
        }
        opts
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct FitArgs {
    /// CSV with a header row and one column per series, oldest row first.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "revar")]
    pub model: ModelChoice,
    /// Lag order.
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    /// Rank; needed by RRVAR and REVAR.
    #[arg(long)]
    pub d: Option<usize>,
    /// Envelope dimension; needed by EVAR and REVAR.
    #[arg(long)]
    pub u: Option<usize>,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SelectArgs {
    pub input: PathBuf,
    /// Largest lag order considered.
    #[arg(long, default_value_t = 4)]
    pub pmax: usize,
    #[arg(long, default_value = "bic")]
    pub criterion: Criterion,
    /// Level of the sequential tests.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "grid")]
    pub mode: SelectMode,
    /// Rank for `--mode given-rank`.
    #[arg(long)]
    pub d: Option<usize>,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// TOML scenario file: one scenario at top level, or `[[scenario]]`
    /// tables.
    #[arg(long, required_unless_present = "builtin", conflicts_with = "builtin")]
    pub config: Option<PathBuf>,
    /// Name of a bundled scenario file, e.g. `typical-3417-normal`.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Overrides every scenario's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides every scenario's replication count.
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long, value_enum, default_value = "mc")]
    pub study: Study,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ForecastArgs {
    pub input: PathBuf,
    /// Fraction of the sample before the first forecast origin.
    #[arg(long, default_value_t = 0.75)]
    pub eval_start: f64,
    /// Maximum forecast horizon.
    #[arg(long, default_value_t = 4)]
    pub horizons: usize,
    /// Stationary-bootstrap resamples; 0 evaluates the original series.
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    /// Mean block length; defaults to the cube root of T, rounded up.
    #[arg(long)]
    pub block_length: Option<f64>,
    /// Seed for the bootstrap resamples.
    #[arg(long, default_value_t = 0)]
    pub bootstrap_seed: u64,
    /// Re-estimate at every origin, or reuse the fit at the first origin.
    #[arg(long, default_value = "refit")]
    pub refit: RefitPolicy,
    #[arg(long, value_enum, default_value = "all")]
    pub model: ModelChoice,
    /// Lag order; selected on the pre-evaluation sample when omitted.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub u: Option<usize>,
    /// Largest lag order when selecting.
    #[arg(long, default_value_t = 4)]
    pub pmax: usize,
    #[arg(long, default_value = "bic")]
    pub criterion: Criterion,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// A `manifest.json` written by an earlier run.
    pub manifest: PathBuf,
}

/// Echo of a run, written next to its results.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub library_version: String,
    pub config: Command,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

/// What a command leaves behind besides its files.
#[derive(Default)]
pub struct RunSummary {
    pub seeds: Vec<u64>,
    pub warnings: Vec<String>,
}

fn absolute(path: &Path) -> CliResult<PathBuf> {
    if !path.exists() {
        let mut err = CliError::new("input", format!("{}: file not found", path.display()));
        err.path = Some(path.display().to_string());
        return Err(err);
    }
    Ok(std::path::absolute(path)?)
}

/// Resolves input paths so a manifest replays from any working directory.
fn normalize(command: Command) -> CliResult<Command> {
    Ok(match command {
        Command::Fit(mut a) => {
            a.input = absolute(&a.input)?;
            Command::Fit(a)
        }
        Command::Select(mut a) => {
            a.input = absolute(&a.input)?;
            Command::Select(a)
        }
        Command::Forecast(mut a) => {
            a.input = absolute(&a.input)?;
            Command::Forecast(a)
        }
        Command::Simulate(mut a) => {
            if let Some(c) = &a.config {
                a.config = Some(absolute(c)?);
            }
            Command::Simulate(a)
        }
        Command::Replay(a) => Command::Replay(a),
    })
}

fn execute(command: Command, out_dir: &Path) -> CliResult<RunSummary> {
    let command = match command {
        Command::Replay(args) => {
            let text = std::fs::read_to_string(&args.manifest)
                .map_err(|e| CliError::new("input", format!("{}: {e}", args.manifest.display())))?;
            let manifest: Manifest = serde_json::from_str(&text)
                .map_err(|e| CliError::new("input", format!("{}: {e}", args.manifest.display())))?;
            if matches!(manifest.config, Command::Replay(_)) {
                return Err(CliError::new("input", "a manifest cannot record a replay"));
            }
            manifest.config
        }
        other => normalize(other)?,
    };
    let mut out = OutDir::new(out_dir.to_path_buf())?;
    let summary = match &command {
        Command::Fit(a) => commands::fit(a, &mut out)?,
        Command::Select(a) => commands::select(a, &mut out)?,
        Command::Simulate(a) => commands::simulate(a, &mut out)?,
        Command::Forecast(a) => commands::forecast(a, &mut out)?,
        Command::Replay(_) => unreachable!("replay resolved above"),
    };
    let mut outputs = out.written().to_vec();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        tool: format!("revar-cli {}", env!("CARGO_PKG_VERSION")),
        library_version: revar::VERSION.to_string(),
        config: command,
        seeds: summary.seeds.clone(),
        outputs,
        warnings: summary.warnings.clone(),
    };
    out.json("manifest.json", &manifest)?;
    Ok(summary)
}

fn report_error(err: &CliError, out_dir: &Path) {
    let json = serde_json::to_string_pretty(err).unwrap_or_else(|_| format!("{{\"message\":{:?}}}", err.message));
    eprintln!("{json}");
    if std::fs::create_dir_all(out_dir).is_ok() {
        let _ = std::fs::write(out_dir.join("error.json"), json + "\n");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            report_error(&CliError::new("usage", e.to_string()), &cli.out_dir);
            return ExitCode::from(2);
        }
    }
    match execute(cli.command, &cli.out_dir) {
        Ok(summary) if summary.warnings.is_empty() => ExitCode::SUCCESS,
        Ok(summary) => {
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::from(1)
        }
        Err(err) => {
            report_error(&err, &cli.out_dir);
            ExitCode::from(2)
        }
    }
}
