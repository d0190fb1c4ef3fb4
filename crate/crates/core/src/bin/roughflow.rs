use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use roughflow::cli::{exit_code, run, Command, Config};

fn parse_command(s: &str) -> Result<Command, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
        format!("expected one of: {}", names.join(", "))
    })
}

/// Run one experiment from a JSON config and write its summary and tables.
#[derive(Parser)]
#[command(name = "roughflow", version)]
struct Args {
    /// simulate | stability | invert | transport | lipschitz | identities | calibrate
    #[arg(value_parser = parse_command)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides ROUGHFLOW_OUT and the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every path ensemble (overrides the config's seeds).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let status = match Config::load(&args.config) {
        Ok(cfg) => {
            let cfg = match args.seed {
                Some(seed) => cfg.with_seed(seed),
                None => cfg,
            };
            let out = args
                .out
                .or_else(|| std::env::var_os("ROUGHFLOW_OUT").map(PathBuf::from))
                .or_else(|| cfg.out.clone())
                .unwrap_or_else(|| PathBuf::from("roughflow-out"));
            match run(args.command, &cfg, &out) {
                Ok(outcome) => {
                    for check in &outcome.checks {
                        println!("{:<32} {}", check.name, if check.passed { "pass" } else { "FAIL" });
                    }
                    for file in &outcome.files {
                        println!("wrote {}", file.display());
                    }
                    outcome.exit_code()
                }
                Err(err) => {
                    eprintln!("roughflow {}: {err}", args.command.name());
                    exit_code(&err)
                }
            }
        }
        Err(err) => {
            eprintln!("roughflow: {err}");
            exit_code(&err)
        }
    };
    ExitCode::from(status as u8)
}
