//! Drive a command from a JSON config the way the binary does, writing the
//! summary and tables into a temporary directory.

use roughflow::cli::{run, Command, Config};

fn main() -> roughflow::Result<()> {
    let cfg = Config::from_json(r#"{ "scenario": "additive-linear", "seed_base": 3, "simulate": { "paths": 2, "grid": 4 } }"#)?;
    let out = std::env::temp_dir().join(format!("roughflow-example-{}", std::process::id()));
    let outcome = run(Command::Simulate, &cfg, &out)?;
    for check in &outcome.checks {
        println!("{:<28} {}", check.name, if check.passed { "pass" } else { "FAIL" });
    }
    for file in &outcome.files {
        println!("wrote {}", file.display());
    }
    std::fs::remove_dir_all(&out)?;
    Ok(())
}
