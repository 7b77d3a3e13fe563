use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cp2_cli::report::Status;
use cp2_cli::{emit_table, read_report, threads_from_env, write_report, RunConfig};
use cp2_core::selfcheck::run_selfcheck;
use cp2_core::SyntheticDgp;

#[derive(Parser)]
#[command(name = "cp2", version, about = "Conditionally valid conformal prediction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Write the report here instead of the config's `output`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sample a synthetic dataset to CSV.
    Synth {
        /// bimodal1d, gmm4 or hetero1d.
        dgp: SyntheticDgp,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one or more reports as a results table.
    Table {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Run the randomized invariant self-checks.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> cp2_cli::Result<ExitCode> {
    match cli.command {
        Command::Run { config, output } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(o) = output {
                cfg.output = o;
            }
            let out = cfg.output.clone();
            let report = cp2_cli::run(cfg, threads_from_env()?)?;
            write_report(&report, &out)?;
            print!("{}", emit_table(std::slice::from_ref(&report)));
            if report.status == Status::Failed {
                eprintln!("error: {}", report.error.as_deref().unwrap_or("run failed"));
                eprintln!("partial report written to {}", out.display());
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { dgp, n, seed, out } => {
            cp2_cli::synth(&dgp, n, seed, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Table { reports } => {
            let reports = reports.iter().map(|p| read_report(p)).collect::<cp2_cli::Result<Vec<_>>>()?;
            print!("{}", emit_table(&reports));
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { seed } => {
            let outcomes = run_selfcheck(seed);
            for c in &outcomes {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if outcomes.iter().all(|c| c.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
