use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lipgeom_cli::run::filter_tasks;
use lipgeom_cli::{CliError, ExperimentConfig, EXIT_CONFIG};

#[derive(Parser, Debug)]
#[command(
    name = "lipgeom",
    version,
    about = "Run metric experiments described by a TOML config"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run certify, nss and sin tasks.
    Certify(Common),
    /// Run construct tasks.
    Construct(Common),
    /// Run oneparam tasks.
    Oneparam(Common),
    /// Run compare tasks.
    Compare(Common),
    /// Run every task.
    Report(Common),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config budget.
    #[arg(long)]
    budget: Option<usize>,
    /// Format written to standard output.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Path for the machine report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run independent tasks concurrently.
    #[arg(long)]
    parallel: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Machine,
    Text,
}

fn load(common: &Common, kinds: Option<&[&str]>) -> Result<ExperimentConfig, CliError> {
    let path = common.config.display().to_string();
    let text = std::fs::read_to_string(&common.config).map_err(|e| CliError::Io {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(b) = common.budget {
        cfg.budget = b;
    }
    filter_tasks(&mut cfg, kinds);
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, kinds): (&Common, Option<&[&str]>) = match &cli.command {
        Command::Certify(c) => (c, Some(&["certify", "nss", "sin"])),
        Command::Construct(c) => (c, Some(&["construct"])),
        Command::Oneparam(c) => (c, Some(&["oneparam"])),
        Command::Compare(c) => (c, Some(&["compare"])),
        Command::Report(c) => (c, None),
    };
    let report = match load(common, kinds).and_then(|cfg| lipgeom_cli::run(&cfg, common.parallel)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let machine = report.to_machine();
    if let Some(out) = &common.out {
        if let Err(e) = std::fs::write(out, &machine) {
            eprintln!("error: cannot write {}: {e}", out.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    match common.format {
        Format::Machine => print!("{machine}"),
        Format::Text => print!("{}", report.to_text()),
    }
    ExitCode::from(report.exit_code() as u8)
}
