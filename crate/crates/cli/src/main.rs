//! `wavemode run <config>` executes a scenario; `wavemode validate <config>`
//! checks it and prints the resolved manifest.
//!
//! Exit status: 0 on success, 1 on I/O failure, 2 on a configuration error,
//! 3 on a numerical failure.

mod config;
mod pipeline;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, Scenario};
use pipeline::RunError;

#[derive(Parser)]
#[command(name = "wavemode", version, about = "Mode coupling and radiative decay in random Pekeris waveguides")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Random seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario and write its outputs.
    Run { config: PathBuf },
    /// Check the scenario and print the resolved configuration.
    Validate { config: PathBuf },
}

fn load(path: &Path, cli: &Cli) -> Result<Scenario, ConfigError> {
    let source = fs::read_to_string(path).map_err(|e| ConfigError {
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut scenario = config::parse(&source, base)?;
    if let Some(seed) = cli.seed {
        scenario.config.seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        scenario.config.output_dir = dir.clone();
    }
    Ok(scenario)
}

fn run(scenario: &Scenario) -> Result<(), RunError> {
    let out = &scenario.config.output_dir;
    fs::create_dir_all(out)?;
    fs::write(out.join("manifest.txt"), config::manifest(&scenario.config))?;
    let summary = pipeline::run(scenario, out)?;
    let mut text = format!("pipeline = {}\n", pipeline_name(scenario));
    for line in summary {
        text.push_str(&line);
        text.push('\n');
    }
    fs::write(out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn pipeline_name(scenario: &Scenario) -> String {
    toml::Value::try_from(scenario.config.pipeline)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let path = match &cli.command {
        Command::Run { config } | Command::Validate { config } => config.clone(),
    };
    let scenario = match load(&path, &cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("config error: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    match cli.command {
        Command::Validate { .. } => {
            print!("{}", config::manifest(&scenario.config));
            ExitCode::SUCCESS
        }
        Command::Run { .. } => match run(&scenario) {
            Ok(()) => ExitCode::SUCCESS,
            Err(RunError::Numerical(e)) => {
                eprintln!("numerical failure: {}: {e}", e.name());
                ExitCode::from(3)
            }
            Err(RunError::Io(e)) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
