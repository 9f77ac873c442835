use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use otpf::engine::{iteration_schedule, TrainSchedule};
use otpf::harness::{parse_config, run_experiment, RunConfig, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "otpf", version, about = "Run optimal transport particle filter benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Parse and validate a config, printing it with defaults filled in.
    Validate { config: PathBuf },
    /// Print the number of outer training iterations at step `t` (default schedule).
    Schedule { t: usize },
}

fn load(path: &PathBuf) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        cfg.output_dir = dir.into();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Schedule { t } => {
            if t == 0 {
                Err("time steps start at 1".to_string())
            } else {
                println!("{}", iteration_schedule(t, &TrainSchedule::default()));
                Ok(true)
            }
        }
        Command::Validate { config } => load(&config).map(|cfg| {
            print!("{}", toml::to_string(&cfg).expect("config serializes"));
            true
        }),
        Command::Run { config } => load(&config).and_then(|cfg| {
            let art = run_experiment(&cfg).map_err(|e| e.to_string())?;
            for (name, secs) in &art.timings {
                eprintln!("{name}: {secs:.2} s");
            }
            for w in &art.warnings {
                eprintln!("warning: {w}");
            }
            for f in &art.failures {
                eprintln!("failed: sim {}, {}, t = {}: {}", f.sim, f.filter, f.t, f.message);
            }
            println!("wrote {}", art.output_dir.display());
            Ok(art.is_complete())
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
