//! `quadlag`: run solvers and experiments from a JSON config.
//!
//! Exit status: 0 on success, 2 for a resonant or singular problem, 3 for
//! an invalid config, 1 for any other numeric failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use config::{Command, Figure, RunConfig};
use quadlag_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Core(e) => match e {
                Error::ResonantDiscrete { .. } | Error::ResonantContinuous { .. } | Error::Singular(_) => 2,
                Error::InvalidArgument(_) | Error::OutOfRange(_) | Error::Unsupported(_) | Error::Alignment { .. } => 3,
                _ => 1,
            },
            CliError::Io { .. } => 1,
        }
    }
}

#[derive(Parser)]
#[command(version, about = "Discrete and continuous Euler-Lagrange solvers for quadratic Lagrangians")]
struct Cli {
    command: Command,
    /// Figure to reproduce (repro only)
    figure: Option<Figure>,
    /// JSON run config; omitted keys take baseline values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path prefix
    #[arg(long)]
    out: Option<String>,
    /// Print the resolved config and exit
    #[arg(long)]
    dump_config: bool,
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match (&cli.config, cli.command, cli.figure) {
        (Some(p), _, _) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::Io { path: p.clone(), source })?;
            RunConfig::parse(&text)?
        }
        (None, Command::Repro, Some(fig)) => RunConfig::repro(fig),
        (None, _, _) => RunConfig::default(),
    };
    if cfg.command.is_some_and(|c| c != cli.command) {
        return Err(CliError::Config(format!(
            "config is for `{}`, not `{}`",
            cfg.command.unwrap().name(),
            cli.command.name()
        )));
    }
    cfg.command = Some(cli.command);
    if cli.figure.is_some() {
        if cli.command != Command::Repro {
            return Err(CliError::Config("a figure is only accepted by repro".into()));
        }
        cfg.figure = cli.figure;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if cfg.out.is_none() {
        let name = cfg.figure.map_or(cli.command.name(), Figure::name);
        cfg.out = Some(name.to_string());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|cfg| {
        if cli.dump_config {
            println!("{}", cfg.to_json());
            return Ok(commands::OK);
        }
        let prefix = cfg.out.clone().unwrap();
        commands::run(&cfg, &prefix)
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
