mod config;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use catlearn::datagen::{read_exemplars_csv, write_exemplars_csv, DataError, Dataset};
use catlearn::experiment::{
    read_records_csv, read_summary_csv, run_grid, summarize, write_records_csv, write_summary_csv,
    DataSource, ExperimentError, GridOutput,
};
use catlearn::stats::{analyze, write_anova_csv, StatsError};
use clap::{Parser, Subcommand};
use config::RunConfig;
use log::{info, warn};
use thiserror::Error;

#[derive(Parser, Debug)]
#[command(name = "catlearn", version, about = "Simulate category learning under domain and label biases")]
struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the experiment grid (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the dataset used by the first replication to `dataset.csv`.
    GenData,
    /// Run the experiment grid; writes records, summary and diagnostics CSVs.
    Run,
    /// Recompute `summary.csv` from a records CSV.
    Summarize {
        /// Records CSV (default: `<out>/records.csv`).
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Wald tests of the bias effects, one `anova_<setting>.csv` per (w, s).
    Analyze {
        /// Records CSV (default: `<out>/records.csv`).
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Heatmaps, interaction plot and dot plot as SVG.
    Plot {
        /// Summary CSV (default: `<out>/summary.csv`).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("diagnostics failed: {0}")]
    Diagnostics(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diagnostics(_) => 3,
            CliError::Io(_) => 4,
            CliError::Data(_) => 5,
        }
    }
}

fn csv_is_io(e: &csv::Error) -> bool {
    matches!(e.kind(), csv::ErrorKind::Io(_))
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match &e {
            ExperimentError::Io(_) => CliError::Io(e.to_string()),
            ExperimentError::Csv(c) if csv_is_io(c) => CliError::Io(e.to_string()),
            ExperimentError::Data(DataError::Io(_)) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        ExperimentError::Data(e).into()
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match &e {
            StatsError::Io(_) => CliError::Io(e.to_string()),
            StatsError::Csv(c) if csv_is_io(c) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<fs::File, CliError> {
    fs::File::open(path).map_err(|e| io_err(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(CliError::Config)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

fn data_source(config: &RunConfig) -> Result<DataSource, CliError> {
    match &config.dataset {
        Some(path) => {
            let exemplars = read_exemplars_csv(open(path)?)?;
            Ok(DataSource::Fixed(Dataset {
                exemplars,
                diagnostic_feature: config.diagnostic_feature,
            }))
        }
        None => Ok(DataSource::Generate(config.dataset_spec())),
    }
}

fn cmd_gen_data(config: &RunConfig) -> Result<(), CliError> {
    let dataset = DataSource::Generate(config.dataset_spec()).dataset(config.seed, 0)?;
    let mut buf = Vec::new();
    write_exemplars_csv(&dataset.exemplars, &mut buf)?;
    ensure_dir(&config.out_dir)?;
    write_file(&config.out_dir.join("dataset.csv"), &buf)
}

fn diagnostics_csv(grid: &GridOutput) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "domain_bias", "label_bias", "w", "s", "seed", "block", "max_mu_rhat", "min_ess", "accept_rate", "retried", "flagged",
    ];
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for cell in &grid.cells {
        let c = cell.context.condition;
        for b in &cell.blocks {
            w.write_record([
                c.domain_bias.to_string(),
                c.label_bias.to_string(),
                format!("{:?}", c.w),
                format!("{:?}", c.s),
                cell.context.seed.to_string(),
                b.block.to_string(),
                format!("{:.4}", b.max_mu_rhat),
                format!("{:.1}", b.min_ess),
                format!("{:.4}", b.accept_rate),
                u8::from(b.retried).to_string(),
                u8::from(b.flagged).to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn cmd_run(config: &RunConfig) -> Result<(), CliError> {
    let conditions = config.conditions();
    let source = data_source(config)?;
    info!(
        "running {} conditions x {} seeds x {} blocks",
        conditions.len(),
        config.n_seeds,
        config.n_blocks
    );
    let grid = run_grid(&conditions, &source, &config.experiment(), config.n_seeds, config.seed)?;

    ensure_dir(&config.out_dir)?;
    let mut records = Vec::new();
    write_records_csv(&grid.records, &mut records)?;
    write_file(&config.out_dir.join("records.csv"), &records)?;
    let mut summary = Vec::new();
    write_summary_csv(&summarize(&grid.records), &mut summary)?;
    write_file(&config.out_dir.join("summary.csv"), &summary)?;
    write_file(&config.out_dir.join("diagnostics.csv"), &diagnostics_csv(&grid)?)?;

    let flagged = grid.n_flagged();
    let total: usize = grid.cells.iter().map(|c| c.blocks.len()).sum();
    if flagged > 0 {
        warn!("{flagged} of {total} block fits failed convergence checks after a retry; see diagnostics.csv");
        return Err(CliError::Diagnostics(format!(
            "{flagged} of {total} block fits flagged (outputs were still written)"
        )));
    }
    info!("all {total} block fits passed convergence checks");
    Ok(())
}

fn records_path(config: &RunConfig, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| config.out_dir.join("records.csv"))
}

fn cmd_summarize(config: &RunConfig, records: Option<PathBuf>) -> Result<(), CliError> {
    let records = read_records_csv(open(&records_path(config, records))?)?;
    if records.is_empty() {
        return Err(CliError::Data("records CSV has no rows".into()));
    }
    let mut buf = Vec::new();
    write_summary_csv(&summarize(&records), &mut buf)?;
    ensure_dir(&config.out_dir)?;
    write_file(&config.out_dir.join("summary.csv"), &buf)
}

fn cmd_analyze(config: &RunConfig, records: Option<PathBuf>) -> Result<(), CliError> {
    let records = read_records_csv(open(&records_path(config, records))?)?;
    let settings = analyze(&records)?;
    ensure_dir(&config.out_dir)?;
    for a in &settings {
        if !a.fit.converged {
            warn!("logistic fit for w={}, s={} did not converge", a.w, a.s);
        }
        let mut buf = Vec::new();
        write_anova_csv(&a.rows, &mut buf)?;
        write_file(&config.out_dir.join(format!("anova_w{}_s{}.csv", a.w, a.s)), &buf)?;
    }
    Ok(())
}

fn cmd_plot(config: &RunConfig, summary: Option<PathBuf>) -> Result<(), CliError> {
    let path = summary.unwrap_or_else(|| config.out_dir.join("summary.csv"));
    let rows = read_summary_csv(open(&path)?)?;
    let files = plot::render_all(&rows).map_err(CliError::Data)?;
    ensure_dir(&config.out_dir)?;
    for (name, svg) in files {
        write_file(&config.out_dir.join(name), svg.as_bytes())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(&cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::GenData => cmd_gen_data(&config),
        Command::Run => cmd_run(&config),
        Command::Summarize { records } => cmd_summarize(&config, records),
        Command::Analyze { records } => cmd_analyze(&config, records),
        Command::Plot { summary } => cmd_plot(&config, summary),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
