use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ivnnt_cli::config::FileConfig;
use ivnnt_cli::{cmd_estimate, cmd_simulate, cmd_truths, CliError};
use ivnnt_core::LinkKind;

/// IV-based estimation of EIN, NNE and NNT.
#[derive(Parser)]
#[command(name = "ivnnt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the data-generating process and print the true indices.
    Truths(Common),
    /// Run a Monte Carlo study and write CSV, JSON and SVG outputs.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Estimate the indices from a CSV file.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Data file; overrides `estimate.data` in the config.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `study.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `model.link`.
    #[arg(long, value_parser = parse_link)]
    link: Option<LinkKind>,
}

fn parse_link(s: &str) -> Result<LinkKind, String> {
    match s {
        "logit" => Ok(LinkKind::Logit),
        "probit" => Ok(LinkKind::Probit),
        other => Err(format!("unknown link `{other}` (expected logit or probit)")),
    }
}

fn load(common: &Common) -> Result<(FileConfig, PathBuf), CliError> {
    let mut cfg = FileConfig::load(&common.config)?;
    if let Some(link) = common.link {
        cfg.model.link = link;
    }
    if let Some(seed) = common.seed {
        match cfg.study.as_mut() {
            Some(s) => s.master_seed = seed,
            None => return Err(CliError::Usage("--seed given but the config has no `study` section".into())),
        }
    }
    let base = common.config.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Ok((cfg, base))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values serialize"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Truths(common) => {
            let (cfg, _) = load(&common)?;
            let (_, json) = cmd_truths(&cfg)?;
            print_json(&json);
        }
        Command::Simulate { common, out } => {
            let (cfg, _) = load(&common)?;
            let summary = cmd_simulate(&cfg, &out)?;
            eprintln!("wrote {} summary rows and {} replications to {}", summary.rows.len(), summary.records.len(), out.display());
        }
        Command::Estimate { common, data } => {
            let (cfg, base) = load(&common)?;
            let (_, ingestion, json) = cmd_estimate(&cfg, &base, data.as_deref())?;
            if !ingestion.dropped.is_empty() {
                let lines: Vec<String> = ingestion.dropped.iter().map(|d| d.line.to_string()).collect();
                eprintln!("dropped {} of {} rows with missing values (lines {})", ingestion.dropped.len(), ingestion.n_read, lines.join(", "));
            }
            print_json(&json);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
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
