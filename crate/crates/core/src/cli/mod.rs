//! Batch command runner behind the `roughflow` binary: one JSON config, one
//! command per invocation, a JSON summary plus CSV detail files per run.

mod commands;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::brownian::step_count;
use crate::decomposition::{IdentityConfig, SimulationConfig};
use crate::error::{Result, RoughFlowError};
use crate::flow_analysis::{InverseConfig, StabilityConfig};
use crate::maximal::{CalibrationConfig, LipschitzConfig};
use crate::scenario::scenario;
use crate::transport::TransportConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Exit statuses of the binary. Usage errors (2) come from argument parsing.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const UNKNOWN_SCENARIO: i32 = 4;
    pub const RESOURCE: i32 = 5;
    pub const IO: i32 = 6;
}

/// Exit status for an error that stopped a run.
pub fn exit_code(err: &RoughFlowError) -> i32 {
    use RoughFlowError::*;
    match err {
        UnknownScenario(_) => exit::UNKNOWN_SCENARIO,
        ChartExhausted { .. }
        | NoConvergence { .. }
        | NonFiniteState { .. }
        | SingularJacobian { .. }
        | UnboundedDivergence
        | OutOfChart => exit::RESOURCE,
        Io(_) => exit::IO,
        Config(_)
        | InvalidArgument(_)
        | NonIntegralSteps { .. }
        | ZeroMollificationLevel
        | KernelSupportTooWide(_)
        | MissingHessian(_)
        | Resolution(_)
        | Coverage(_) => exit::CONFIG,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Stability,
    Invert,
    Transport,
    Lipschitz,
    Identities,
    Calibrate,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Simulate,
        Command::Stability,
        Command::Invert,
        Command::Transport,
        Command::Lipschitz,
        Command::Identities,
        Command::Calibrate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Stability => "stability",
            Command::Invert => "invert",
            Command::Transport => "transport",
            Command::Lipschitz => "lipschitz",
            Command::Identities => "identities",
            Command::Calibrate => "calibrate",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = RoughFlowError;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| RoughFlowError::Config(format!("unknown command `{s}`")))
    }
}

/// One JSON document configures every command. `scenario` and `seed_base`,
/// when present, override the matching fields of every section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: Option<String>,
    pub seed_base: Option<u64>,
    /// Output directory; the command line and `ROUGHFLOW_OUT` take precedence.
    pub out: Option<PathBuf>,
    pub simulate: SimulationConfig,
    pub stability: StabilityConfig,
    pub invert: InverseConfig,
    pub transport: TransportConfig,
    pub lipschitz: LipschitzConfig,
    pub identities: IdentityConfig,
    pub calibrate: CalibrationConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: Config = serde_json::from_str(text).map_err(|e| RoughFlowError::Config(e.to_string()))?;
        cfg.apply_overrides();
        Ok(cfg)
    }

    pub fn load(file: &Path) -> Result<Self> {
        let text = fs::read_to_string(file).map_err(|e| RoughFlowError::Config(format!("{}: {e}", file.display())))?;
        Self::from_json(&text)
    }

    /// Replaces the seed of every section (the calibration catalogs keep
    /// their frozen seeds).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed_base = Some(seed);
        self.apply_overrides();
        self
    }

    fn apply_overrides(&mut self) {
        if let Some(name) = &self.scenario {
            self.simulate.scenario = name.clone();
            self.stability.scenario = name.clone();
            self.invert.scenario = name.clone();
            self.transport.scenario = name.clone();
            self.lipschitz.scenario = name.clone();
            self.identities.scenario = name.clone();
        }
        if let Some(seed) = self.seed_base {
            self.simulate.seed_base = seed;
            self.stability.seed_base = seed;
            self.invert.seed = seed;
            self.transport.seed_base = seed;
            self.lipschitz.seed = seed;
            self.identities.seed = seed;
        }
    }

    /// The section a command reads, as JSON.
    pub fn section(&self, command: Command) -> Value {
        let v = match command {
            Command::Simulate => serde_json::to_value(&self.simulate),
            Command::Stability => serde_json::to_value(&self.stability),
            Command::Invert => serde_json::to_value(&self.invert),
            Command::Transport => serde_json::to_value(&self.transport),
            Command::Lipschitz => serde_json::to_value(&self.lipschitz),
            Command::Identities => serde_json::to_value(&self.identities),
            Command::Calibrate => serde_json::to_value(&self.calibrate),
        };
        v.expect("configs serialize")
    }

    /// Checks the section a command reads: known scenario, integral step
    /// count, ascending levels, nonzero counts.
    pub fn validate(&self, command: Command) -> Result<()> {
        let bad = |msg: &str| Err(RoughFlowError::Config(msg.into()));
        match command {
            Command::Simulate => {
                let c = &self.simulate;
                scenario(&c.scenario)?;
                step_count(c.t_final, c.h)?;
                if c.paths == 0 || c.grid == 0 || !(c.radius > 0.0) {
                    return bad("simulate needs paths ≥ 1, grid ≥ 1 and a positive radius");
                }
            }
            Command::Stability => {
                let c = &self.stability;
                scenario(&c.scenario)?;
                step_count(c.t_final, c.h)?;
                if c.levels.is_empty() || c.levels.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("stability levels must be non-empty and strictly ascending");
                }
                if c.paths == 0 || c.grid == 0 {
                    return bad("stability needs paths ≥ 1 and grid ≥ 1");
                }
            }
            Command::Invert => {
                let c = &self.invert;
                scenario(&c.scenario)?;
                step_count(c.t_final, c.h)?;
                if c.grid == 0 || !(c.radius > 0.0) {
                    return bad("invert needs grid ≥ 1 and a positive radius");
                }
            }
            Command::Transport => {
                let c = &self.transport;
                scenario(&c.scenario)?;
                step_count(c.t_final, c.h)?;
                if c.paths == 0 || c.cells < 4 {
                    return bad("transport needs paths ≥ 1 and cells ≥ 4");
                }
            }
            Command::Lipschitz => {
                let c = &self.lipschitz;
                scenario(&c.scenario)?;
                step_count(c.t_final, c.h)?;
                if c.grid < 9 || c.gradient_grid < 9 || c.times == 0 || c.radii < 2 {
                    return bad("lipschitz needs grids ≥ 9, times ≥ 1 and radii ≥ 2");
                }
                if !(c.eps_fraction > 0.0 && c.eps_fraction < 1.0) {
                    return bad("eps_fraction must lie in (0, 1)");
                }
            }
            Command::Identities => {
                let c = &self.identities;
                scenario(&c.scenario)?;
                step_count(c.t_final, c.liouville_h)?;
                step_count(c.t_final, c.density_h)?;
                if c.grid < 2 || !(c.fd_step > 0.0) {
                    return bad("identities need grid ≥ 2 and a positive difference step");
                }
            }
            Command::Calibrate => {
                let c = &self.calibrate;
                if c.grid < 9 || c.catalog_size == 0 || c.alphas.is_empty() || c.seeds[0] == c.seeds[1] {
                    return bad("calibration needs grid ≥ 9, a non-empty catalog and alphas, and two distinct seeds");
                }
            }
        }
        Ok(())
    }
}

/// A named pass/fail flag derived from a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool) -> Self {
        Self { name: name.into(), passed }
    }
}

/// What a command produced before it is written out.
pub(crate) struct Produced {
    pub report: Value,
    pub checks: Vec<Check>,
    /// `(file name, contents)`.
    pub files: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub command: Command,
    pub checks: Vec<Check>,
    /// The summary document exactly as written.
    pub summary: String,
    pub files: Vec<PathBuf>,
    pub wall_time_s: f64,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            exit::OK
        } else {
            exit::CHECK_FAILED
        }
    }
}

/// Runs `command` and writes `<command>.json`, `<command>.timings.json` and
/// the command's CSV files into `out`. The summary holds no wall times, so
/// reruns with the same config are byte-identical.
pub fn run(command: Command, cfg: &Config, out: &Path) -> Result<Outcome> {
    cfg.validate(command)?;
    let start = Instant::now();
    let produced = commands::execute(command, cfg)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let passed = produced.checks.iter().all(|c| c.passed);
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command.name(),
        "config": cfg.section(command),
        "checks": produced.checks,
        "passed": passed,
        "report": produced.report,
    });
    let summary = serde_json::to_string_pretty(&summary).map_err(|e| RoughFlowError::Io(e.to_string()))? + "\n";
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut write = |name: String, bytes: &[u8]| -> Result<()> {
        let file = out.join(name);
        fs::write(&file, bytes)?;
        files.push(file);
        Ok(())
    };
    write(format!("{}.json", command.name()), summary.as_bytes())?;
    let timings = json!({ "command": command.name(), "wall_time_s": wall_time_s });
    write(format!("{}.timings.json", command.name()), format!("{timings}\n").as_bytes())?;
    for (name, bytes) in produced.files {
        write(name, &bytes)?;
    }
    Ok(Outcome { command, checks: produced.checks, summary, files, wall_time_s })
}
