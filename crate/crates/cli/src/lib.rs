//! Command-line pipeline: ingest daily records, fit or sweep mixtures,
//! analyze routine persistence, generate synthetic cohorts and render a
//! report. Every output carries the hash of the run configuration.

pub mod commands;
pub mod config;
pub mod figures;
pub mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use routinesig::stats::AgeEncoding;
use routinesig::{CovarianceStructure, Error, Metric, PeerAggregation};

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_COMPUTATION: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: msg.into(),
        }
    }

    pub fn computation(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_COMPUTATION,
            message: msg.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::input(format!("{}: {e}", path.display()))
    }

    pub fn at(path: &Path, e: Error) -> Self {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Schema(_) | Error::InvalidSpec { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::MissingData(_) => EXIT_INPUT,
            _ => EXIT_COMPUTATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "routinesig", version, about = "Routine discovery and routine-signature persistence")]
pub struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving all outputs.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// JSON run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply exclusions and standardize daily records into dataset.csv.
    Ingest(IngestArgs),
    /// Fit one mixture model.
    Fit(FitArgs),
    /// Fit a grid of K and covariance structures and keep the BIC minimum.
    Sweep(SweepArgs),
    /// Signatures, transitions, persistence, statistics and figures.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic cohort with ground truth.
    Synth(SynthArgs),
    /// Summarize an analysis directory as Markdown.
    Report,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Daily CSV in the ingest schema.
    #[arg(long)]
    pub daily: Option<PathBuf>,
    /// Screen-lock episodes (participant_id,start,end).
    #[arg(long)]
    pub lock: Option<PathBuf>,
    /// Accelerometer samples (participant_id,timestamp,ax,ay,az).
    #[arg(long)]
    pub accelerometer: Option<PathBuf>,
    /// Screen-use episodes (participant_id,start,end).
    #[arg(long)]
    pub screen: Option<PathBuf>,
    /// Daily CSV column holding the analysis group.
    #[arg(long)]
    pub group_column: Option<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub structure: Option<CovarianceStructure>,
    #[arg(long)]
    pub n_restarts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Fit only this K, with `--structure`.
    #[arg(long)]
    pub pin_k: Option<usize>,
    #[arg(long)]
    pub structure: Option<CovarianceStructure>,
    /// K grid as `lo:hi` or a comma list.
    #[arg(long)]
    pub k_values: Option<KList>,
    /// Comma list of covariance structures.
    #[arg(long, value_delimiter = ',')]
    pub structures: Option<Vec<CovarianceStructure>>,
    #[arg(long)]
    pub n_restarts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Participant profiles; enables the regression report.
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long)]
    pub segment_length: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<Metric>>,
    #[arg(long)]
    pub aggregation: Option<PeerAggregation>,
    #[arg(long)]
    pub max_gap_days: Option<i64>,
    /// K values for the rank-curve sensitivity figure, e.g. `6:11`.
    #[arg(long)]
    pub k_range: Option<KList>,
    /// Restarts for the sensitivity fits.
    #[arg(long)]
    pub n_restarts: Option<usize>,
    /// Add study indicators when profiles span several studies.
    #[arg(long)]
    pub pool_studies: bool,
    /// `binary` or `continuous`.
    #[arg(long, value_parser = parse_age_encoding)]
    pub age_encoding: Option<AgeEncoding>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Cohort spec JSON; the reference cohort when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

/// K values given as `lo:hi` or a comma list.
#[derive(Debug, Clone, PartialEq)]
pub struct KList(pub Vec<usize>);

impl std::str::FromStr for KList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        config::parse_k_list(s).map(KList)
    }
}

fn parse_age_encoding(s: &str) -> Result<AgeEncoding, String> {
    match s {
        "binary" => Ok(AgeEncoding::Binary),
        "continuous" => Ok(AgeEncoding::Continuous),
        _ => Err(format!("unknown age encoding `{s}`; expected binary or continuous")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

/// Config file (or defaults) overlaid with the command-line flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| CliError::at(p, e))?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    set(&mut cfg.out_dir, cli.out_dir.clone());
    match &cli.command {
        Command::Ingest(a) => {
            set_path(&mut cfg.inputs.daily, a.daily.clone());
            set_path(&mut cfg.inputs.lock, a.lock.clone());
            set_path(&mut cfg.inputs.accelerometer, a.accelerometer.clone());
            set_path(&mut cfg.inputs.screen, a.screen.clone());
            set(&mut cfg.group_column, a.group_column.clone());
        }
        Command::Fit(a) => {
            set_path(&mut cfg.inputs.dataset, a.dataset.clone());
            set(&mut cfg.k, a.k);
            set(&mut cfg.structure, a.structure);
            set(&mut cfg.n_restarts, a.n_restarts);
        }
        Command::Sweep(a) => {
            set_path(&mut cfg.inputs.dataset, a.dataset.clone());
            if a.pin_k.is_some() {
                cfg.pin_k = a.pin_k;
            }
            set(&mut cfg.structure, a.structure);
            set(&mut cfg.sweep_k, a.k_values.clone().map(|k| k.0));
            set(&mut cfg.sweep_structures, a.structures.clone());
            set(&mut cfg.n_restarts, a.n_restarts);
        }
        Command::Analyze(a) => {
            set_path(&mut cfg.inputs.dataset, a.dataset.clone());
            set_path(&mut cfg.inputs.model, a.model.clone());
            set_path(&mut cfg.inputs.profiles, a.profiles.clone());
            set(&mut cfg.segment_length, a.segment_length);
            set(&mut cfg.metrics, a.metrics.clone());
            set(&mut cfg.aggregation, a.aggregation);
            set(&mut cfg.max_gap_days, a.max_gap_days);
            set(&mut cfg.k_range, a.k_range.clone().map(|k| k.0));
            set(&mut cfg.n_restarts, a.n_restarts);
            cfg.pool_studies |= a.pool_studies;
            if a.age_encoding.is_some() {
                cfg.age_encoding = a.age_encoding;
            }
        }
        Command::Synth(a) => set_path(&mut cfg.inputs.spec, a.spec.clone()),
        Command::Report => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    match cli.command {
        Command::Ingest(_) => commands::ingest(&cfg),
        Command::Fit(_) => commands::fit(&cfg),
        Command::Sweep(_) => commands::sweep(&cfg),
        Command::Analyze(_) => commands::analyze(&cfg),
        Command::Synth(_) => commands::synth(&cfg),
        Command::Report => commands::report(&cfg),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
