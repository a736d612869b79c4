use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use risjam_cli::{compare_runs, execute, normalized_json, parse_scenario, synthesize_environment, CliError, OutputFormat};
use risjam_core::env::EnvironmentSpec;
use risjam_core::scenario::desk;

#[derive(Parser)]
#[command(name = "risjam", version, about = "Simulate RIS-based selective jamming scenarios")]
struct Cli {
    /// Worker threads for independent optimizations (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        scenario: PathBuf,
        /// Override the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
    },
    /// Check a scenario and print it with all defaults filled in.
    Validate {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Diff two run directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Separation drop in dB tolerated before flagging a regression.
        #[arg(long, default_value_t = 1.0)]
        tolerance_db: f64,
    },
    /// Environment utilities.
    Env {
        #[command(subcommand)]
        command: EnvCommand,
    },
}

#[derive(Subcommand)]
enum EnvCommand {
    /// Synthesize an environment and print its JSON document.
    Synth {
        /// Environment description; the desk preset when omitted.
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::validation(None, e.to_string().trim())),
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::validation(Some("--threads"), "must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Run { scenario, seed, out, format } => {
            let parsed = parse_scenario(&scenario)?.with_seed(seed);
            let manifest = execute(&parsed, &out, format)?;
            print_json(&manifest)
        }
        Command::Validate { scenario, seed } => {
            let parsed = parse_scenario(&scenario)?.with_seed(seed);
            println!("{}", normalized_json(&parsed.spec)?);
            Ok(())
        }
        Command::Compare { a, b, tolerance_db } => print_json(&compare_runs(&a, &b, tolerance_db)?),
        Command::Env { command: EnvCommand::Synth { spec, seed, out } } => {
            let spec = match spec {
                Some(path) => read_environment(&path)?,
                None => desk::desk_environment(),
            };
            let doc = synthesize_environment(spec, seed)? + "\n";
            match out {
                Some(path) => std::fs::write(&path, doc).map_err(|e| CliError::io(&path, e)),
                None => {
                    print!("{doc}");
                    Ok(())
                }
            }
        }
    }
}

fn read_environment(path: &Path) -> Result<EnvironmentSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let at = e.path().to_string();
        CliError::validation(Some(&at), e.into_inner().to_string())
    })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}
