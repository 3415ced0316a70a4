//! `restobench`: generate the restaurant-booking dialog tasks, train and
//! evaluate rankers on them, sweep hyperparameters and chat with a model.

mod chat;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "restobench", version, about = "Goal-oriented dialog testbed")]
struct Cli {
    /// File of key=value lines applied over the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    task: Option<u8>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Overwrite an existing output directory.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write every task's dialog splits, both KBs and the candidate set.
    Generate,
    /// Train a model and write its checkpoint and training curve.
    Train,
    /// Evaluate a checkpoint or a baseline on the configured splits.
    Eval,
    /// Train every grid point, keep the best on validation.
    Sweep,
    /// Talk to a model on standard input.
    Chat,
    /// Merge result CSVs into one markdown table.
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print every config key with its default and description.
    Keys,
}

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(restobench::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(restobench::Error::NonFiniteLoss { .. }) => 3,
            CliError::Core(e) if e.is_data_error() => 2,
            CliError::Core(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<restobench::Error> for CliError {
    fn from(e: restobench::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

/// Defaults, then the config file, then `RESTOBENCH_*` variables, then flags.
fn resolve_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut c = RunConfig::default();
    if let Some(p) = &cli.config {
        c.merge_file(p)?;
    }
    c.merge_env(std::env::vars())?;
    for s in &cli.set {
        c.set_assignment(s)?;
    }
    if let Some(v) = cli.seed {
        c.set("seed", &v.to_string())?;
    }
    if let Some(v) = cli.task {
        c.set("task", &v.to_string())?;
    }
    if let Some(v) = &cli.model {
        c.set("model", v)?;
    }
    if let Some(v) = &cli.data_dir {
        c.set("data_dir", &v.to_string_lossy())?;
    }
    if let Some(v) = &cli.out_dir {
        c.set("out_dir", &v.to_string_lossy())?;
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Generate => commands::generate(&cfg, cli.force),
        Command::Train => commands::train(cfg),
        Command::Eval => commands::eval(cfg),
        Command::Sweep => commands::sweep(cfg),
        Command::Chat => {
            let stdin = std::io::stdin();
            chat::run(cfg, &mut stdin.lock(), &mut std::io::stdout())
        }
        Command::Report { paths, out } => commands::report(&paths, out.as_deref()),
        Command::Keys => {
            for (k, v, help) in config::KEYS {
                println!("{k:<22} {v:<14} {help}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
