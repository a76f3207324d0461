use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use riesz_lab::cli::{run_file, ExperimentConfig, RunOptions};
use riesz_lab::LabError;

#[derive(Parser)]
#[command(name = "riesz-lab", version, about = "Riesz self-intersection experiments for stable processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a key = value config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-key override, repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print the default config with every key.
    Template,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Template => {
            print!("{}", ExperimentConfig::default().to_text());
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            replicas,
            seed,
            jobs,
            out,
            set,
        } => {
            let mut overrides = Vec::new();
            for kv in &set {
                match kv.split_once('=') {
                    Some((k, v)) => overrides.push((k.trim().to_string(), v.trim().to_string())),
                    None => {
                        eprintln!("error: --set expects KEY=VALUE, got '{kv}'");
                        return ExitCode::from(64);
                    }
                }
            }
            let opts = RunOptions {
                replicas,
                seed,
                jobs,
                out,
                overrides,
            };
            match run_file(&config, &opts) {
                Ok(report) => {
                    println!("{}", serde_json::to_string_pretty(&report.summary).unwrap_or_default());
                    for f in &report.files {
                        println!("wrote {}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    match e {
                        LabError::Regime(_) => ExitCode::from(3),
                        LabError::Config(_) | LabError::Parameter(_) => ExitCode::from(2),
                        _ => ExitCode::FAILURE,
                    }
                }
            }
        }
    }
}
