use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use floqryd_cli::runner::{prepare, run, RunOptions};
use floqryd_cli::scenario::{self, Scenario};
use floqryd_cli::{catalog, CliError, CliResult};

#[derive(Parser)]
#[command(name = "floqryd", version, about = "Run frequency-modulated Rydberg pair scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, or a bundled scenario by name.
    Run {
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, env = "FLOQRYD_THREADS", default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the bundled scenarios.
    List,
    /// Check a scenario without running it.
    Validate { scenario: String },
}

fn resolve(arg: &str) -> CliResult<(Scenario, String)> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(text) = catalog::source(arg) {
            return Ok((scenario::parse(text)?, text.to_string()));
        }
    }
    scenario::load(path)
}

fn main_inner(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            threads,
            seed,
        } => {
            let (s, text) = resolve(&scenario)?;
            let m = run(&s, &text, &RunOptions { out: out.clone(), threads, seed })?;
            println!("{} -> {} ({} files)", m.scenario, out.join(&m.scenario).display(), m.files.len());
        }
        Command::List => {
            println!("{:<18} {:<16} {:<13} {:>9}  description", "name", "figure", "kind", "budget_s");
            for e in catalog::list()? {
                println!(
                    "{:<18} {:<16} {:<13} {:>9}  {}",
                    e.name, e.figure, e.kind, e.runtime_budget_s, e.description
                );
            }
        }
        Command::Validate { scenario } => {
            let (s, _) = resolve(&scenario)?;
            prepare(&s)?;
            println!("{}: ok ({})", s.name, s.kind.as_str());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit(&e)
        }
    }
}

fn exit(e: &CliError) -> ExitCode {
    ExitCode::from(e.exit_code() as u8)
}
