use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compose, lagrangian_flow, FlowField, FlowOptions, PointSet};
use crate::brownian::sample_path;
use crate::error::{Result, RoughFlowError};
use crate::fields::MollifierSpec;
use crate::linalg::dist;
use crate::scenario::{additive_linear_solution, scenario};
use crate::sde::{direct_flow, DiffusionChart};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub scenario: String,
    pub t_final: f64,
    pub h: f64,
    /// Initial points: cell centres of a `grid × grid` box on `[−R, R]²`
    /// inside `B(R)`.
    pub radius: f64,
    pub grid: usize,
    pub paths: usize,
    pub seed_base: u64,
    /// Mollification level for rough drifts; required for them.
    pub level: Option<u32>,
    pub mollifier: MollifierSpec,
    /// Store every `stride` steps.
    pub stride: usize,
    /// Bridge refinements of the path used for the closed-form reference.
    pub oracle_refinements: u32,
    /// Largest accepted endpoint gap to the direct solver.
    pub tolerance: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            scenario: "additive-linear".into(),
            t_final: 1.0,
            h: 1.0 / 128.0,
            radius: 1.0,
            grid: 8,
            paths: 4,
            seed_base: 0,
            level: None,
            mollifier: MollifierSpec::default(),
            stride: 16,
            oracle_refinements: 4,
            tolerance: 5e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSimulation {
    pub seed: u64,
    /// `max_x |φ_T(Y_T(x)) − X_T^{direct}(x)|`.
    pub direct_gap: f64,
    /// `max_x |φ_T(Y_T(x)) − X_T^{closed form}(x)|`, where one exists.
    pub closed_form_gap: Option<f64>,
    /// `max_x |φ_T(Y_T(x)) − x|`.
    pub displacement: f64,
    pub reanchors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub scenario: String,
    pub seed_base: u64,
    pub h: f64,
    pub t_final: f64,
    pub points: usize,
    pub level: Option<u32>,
    pub paths: Vec<PathSimulation>,
    pub max_direct_gap: f64,
    pub max_closed_form_gap: Option<f64>,
    pub finite: bool,
    /// `max_direct_gap ≤ tolerance`, and the closed-form gap too when present.
    pub within_tolerance: bool,
}

/// Report plus the composed flows `X_t = φ_t(Y_t)`, one per path.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub report: SimulationReport,
    pub flows: Vec<FlowField>,
}

/// Solves the decomposed flow on a grid of initial points for each path and
/// compares its endpoint with the Heun solution of the full equation on the
/// same increments, and with the closed form where the scenario has one.
pub fn simulate(cfg: &SimulationConfig) -> Result<Simulation> {
    if cfg.paths == 0 || cfg.grid == 0 {
        return Err(RoughFlowError::InvalidArgument("need at least one path and one grid cell".into()));
    }
    let s = scenario(&cfg.scenario)?;
    let drift = s.drift_field(cfg.level, &cfg.mollifier)?;
    let dif = s.diffusion();
    let points = PointSet::ball_grid(s.dim, cfg.radius, cfg.grid);
    let opts = FlowOptions { stride: cfg.stride, ..Default::default() };
    let mut paths = Vec::with_capacity(cfg.paths);
    let mut flows = Vec::with_capacity(cfg.paths);
    for i in 0..cfg.paths as u64 {
        let seed = cfg.seed_base + i;
        let path = sample_path(seed, s.m(), cfg.t_final, cfg.h)?;
        let chart = DiffusionChart::new(dif.clone(), Arc::new(path.clone()))?;
        let flow = lagrangian_flow(&points, &chart, drift.as_ref(), &opts)?;
        let composed = compose(&chart, &flow)?;
        let last = composed.last();
        let direct: Vec<Vec<f64>> = (0..points.len())
            .into_par_iter()
            .map(|p| Ok(direct_flow(points.point(p), &path, &dif, drift.as_ref(), path.steps())?.last_state().to_vec()))
            .collect::<Result<_>>()?;
        let reference = (cfg.scenario == "additive-linear").then(|| {
            let mut fine = path.clone();
            for _ in 0..cfg.oracle_refinements {
                fine = fine.refine();
            }
            fine
        });
        let (mut direct_gap, mut displacement, mut closed) = (0.0f64, 0.0f64, 0.0f64);
        for p in 0..points.len() {
            let x = composed.y_at(p, last);
            direct_gap = direct_gap.max(dist(x, &direct[p]));
            displacement = displacement.max(dist(x, points.point(p)));
            if let Some(fine) = &reference {
                closed = closed.max(dist(x, &additive_linear_solution(points.point(p), fine)));
            }
        }
        paths.push(PathSimulation {
            seed,
            direct_gap,
            closed_form_gap: reference.is_some().then_some(closed),
            displacement,
            reanchors: flow.reanchors,
        });
        flows.push(composed);
    }
    let max_direct_gap = paths.iter().map(|p| p.direct_gap).fold(0.0, f64::max);
    let max_closed_form_gap =
        paths.iter().filter_map(|p| p.closed_form_gap).reduce(f64::max);
    let finite = flows.iter().all(|f| f.y.iter().chain(&f.log_rho).all(|v| v.is_finite()));
    let within_tolerance =
        max_direct_gap <= cfg.tolerance && max_closed_form_gap.is_none_or(|g| g <= cfg.tolerance);
    let report = SimulationReport {
        scenario: cfg.scenario.clone(),
        seed_base: cfg.seed_base,
        h: cfg.h,
        t_final: cfg.t_final,
        points: points.len(),
        level: if s.is_smooth() { None } else { cfg.level },
        paths,
        max_direct_gap,
        max_closed_form_gap,
        finite,
        within_tolerance,
    };
    Ok(Simulation { report, flows })
}
