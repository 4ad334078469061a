use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use chatscope::pipeline::{self, Stage};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Synth,
    Ingest,
    Prep,
    Embed,
    Expand,
    Colloc,
    LdaSweep,
    Assign,
    Mdi,
    Patterns,
    Report,
    All,
}

impl From<Command> for Stage {
    fn from(c: Command) -> Stage {
        match c {
            Command::Synth => Stage::Synth,
            Command::Ingest => Stage::Ingest,
            Command::Prep => Stage::Prep,
            Command::Embed => Stage::Embed,
            Command::Expand => Stage::Expand,
            Command::Colloc => Stage::Colloc,
            Command::LdaSweep => Stage::LdaSweep,
            Command::Assign => Stage::Assign,
            Command::Mdi => Stage::Mdi,
            Command::Patterns => Stage::Patterns,
            Command::Report => Stage::Report,
            Command::All => Stage::All,
        }
    }
}

/// Grooming analysis of live-stream chat corpora.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    /// Pipeline stage to run.
    #[arg(value_enum)]
    command: Command,

    /// Run configuration file.
    #[arg(short, long)]
    config: PathBuf,

    /// Override a setting, e.g. `--set lda.ks=2,4,8`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match pipeline::run(cli.command.into(), &cli.config, &cli.overrides) {
        Ok(dir) => {
            log::info!("done: {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline::exit_code(&e) as u8)
        }
    }
}
