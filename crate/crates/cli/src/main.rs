use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qlimit::scenario::{builtin_scenarios, find_scenario, run_scenario, PointStatus, RunOptions};
use qlimit::{Execution, ModelConfig};

#[derive(Parser)]
#[command(name = "qlimit", version, about = "Entanglement of driven oscillators in non-Markovian thermal baths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a builtin scenario and write CSV output.
    Run {
        scenario: String,
        /// Replace the scenario's base configuration with this TOML file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also run the discrete-bath oracle for every sweep value.
        #[arg(long)]
        oracle: bool,
        /// Worker threads; 1 runs sequentially.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List builtin scenarios.
    List,
    /// Parse and validate a configuration file.
    Validate { file: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::List => {
            for s in builtin_scenarios() {
                println!("{:<20} {}", s.name, s.description);
            }
            ExitCode::SUCCESS
        }
        Command::Validate { file } => match std::fs::read_to_string(&file)
            .map_err(qlimit::Error::from)
            .and_then(|t| ModelConfig::from_toml_str(&t))
        {
            Ok(c) => {
                let report = c.validate();
                if report.is_ok() {
                    println!("{}: valid (hash {})", file.display(), c.content_hash().unwrap_or_default());
                    ExitCode::SUCCESS
                } else {
                    eprintln!("{}: {report}", file.display());
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("{}: {e}", file.display());
                ExitCode::from(1)
            }
        },
        Command::Run { scenario, config, out, oracle, threads } => run(&scenario, config, out, oracle, threads),
    }
}

fn run(name: &str, config: Option<PathBuf>, out: PathBuf, oracle: bool, threads: Option<usize>) -> ExitCode {
    let mut scenario = match find_scenario(name) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(path) = config {
        match std::fs::read_to_string(&path).map_err(qlimit::Error::from).and_then(|t| ModelConfig::from_toml_str(&t)) {
            Ok(c) => scenario = scenario.with_base(c),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
    }
    if let Err(e) = scenario.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let exec = match threads {
        Some(1) => Execution::Sequential,
        _ => Execution::Parallel,
    };
    #[cfg(feature = "parallel")]
    if let Some(n) = threads.filter(|n| *n > 1) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let opts = RunOptions { out_dir: out, oracle, exec, ..Default::default() };
    let report = match run_scenario(&scenario, &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    for p in &report.points {
        match &p.status {
            PointStatus::Failed(msg) => println!("{:<32} FAILED  {msg}", p.label),
            status => println!(
                "{:<32} {:<9} steady E_N = {:.6} +- {:.2e}",
                p.label,
                if *status == PointStatus::Skipped { "skipped" } else { "ok" },
                p.steady_log_negativity,
                p.steady_std
            ),
        }
    }
    println!("wrote {}", report.directory.join("summary.csv").display());
    ExitCode::from(report.exit_code() as u8)
}
