use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_bv_chain_rule, check_det_gradient_identity, integrate_point, lagrangian_flow, ChainRuleReport,
    DetIdentityReport, FlowOptions, PointSet, SineShear,
};
use crate::brownian::sample_path;
use crate::error::{Result, RoughFlowError};
use crate::fields::MollifierSpec;
use crate::linalg::{determinant, MAX_DIM};
use crate::scenario::scenario;
use crate::sde::{diffusion_flow, DiffusionChart};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityConfig {
    /// `φ(x) = x + amplitude·sin(x)` for the chain-rule and determinant checks.
    pub amplitude: f64,
    /// Nodes per axis on `[−half_width, half_width]²`.
    pub grid: usize,
    pub half_width: f64,
    pub fd_step: f64,
    pub tolerance: f64,
    /// Supplies the drift for the chain rule and the flows for the density
    /// identities.
    pub scenario: String,
    pub level: Option<u32>,
    pub mollifier: MollifierSpec,
    pub seed: u64,
    pub t_final: f64,
    /// Step of the diffusion flow for the Liouville check (error `O(h)`).
    pub liouville_h: f64,
    /// Step of the random ODE for the density check (error `O(h²)`).
    pub density_h: f64,
    /// Nodes per axis of the density-check grid on `[−1, 1]²`.
    pub density_grid: usize,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            amplitude: 0.1,
            grid: 21,
            half_width: 2.0,
            fd_step: 1e-4,
            tolerance: 1e-3,
            scenario: "smooth-nonlinear".into(),
            level: None,
            mollifier: MollifierSpec::default(),
            seed: 0,
            t_final: 0.5,
            liouville_h: 1.0 / 4096.0,
            density_h: 1.0 / 256.0,
            density_grid: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub scenario: String,
    pub seed: u64,
    pub points: usize,
    pub chain_rule: ChainRuleReport,
    pub det_identity: DetIdentityReport,
    /// `max |log det J_T − Σ div A_i(X)∘dw^i|` along the diffusion flow.
    pub liouville_residual: f64,
    /// `max |log ρ_T − log det ∇Y_T|`, `∇Y_T` by central differences.
    pub density_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn grid_points(n: usize, half_width: f64) -> Vec<f64> {
    let step = 2.0 * half_width / (n - 1) as f64;
    (0..n * n).flat_map(|k| [-half_width + (k / n) as f64 * step, -half_width + (k % n) as f64 * step]).collect()
}

/// Chain rule for `b∘φ`, the determinant-gradient and Jacobi identities on a
/// sine shear, Liouville's formula for the diffusion flow and the explicit
/// density of the random ODE, each as a maximal residual.
pub fn identity_suite(cfg: &IdentityConfig) -> Result<IdentityReport> {
    if cfg.grid < 2 || cfg.density_grid == 0 {
        return Err(RoughFlowError::InvalidArgument("identity grids need at least two nodes".into()));
    }
    let s = scenario(&cfg.scenario)?;
    let d = s.dim;
    let drift = s.drift_field(cfg.level, &cfg.mollifier)?;
    let phi = SineShear { dim: d, amplitude: cfg.amplitude };
    let pts = grid_points(cfg.grid, cfg.half_width);
    let chain_rule = check_bv_chain_rule(drift.as_ref(), &phi, &pts, cfg.fd_step);
    let det_identity = check_det_gradient_identity(&phi, &pts, cfg.fd_step)?;

    let dif = s.diffusion();
    let path = sample_path(cfg.seed, s.m(), cfg.t_final, cfg.liouville_h)?;
    let liouville_residual = (0..pts.len() / d)
        .into_par_iter()
        .map(|p| {
            let tr = diffusion_flow(&pts[p * d..(p + 1) * d], &path, &dif, 1)?;
            let mut log_det = 0.0;
            for k in 0..path.steps() {
                let mut mid = [0.0; MAX_DIM];
                for i in 0..d {
                    mid[i] = 0.5 * (tr.state(k)[i] + tr.state(k + 1)[i]);
                }
                for (field, dw) in dif.fields().iter().zip(path.step(k)) {
                    log_det += field.divergence(&mid[..d]) * dw;
                }
            }
            Ok((tr.dets[tr.len() - 1].ln() - log_det).abs())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let ode_path = sample_path(cfg.seed, s.m(), cfg.t_final, cfg.density_h)?;
    let chart = DiffusionChart::new(dif, Arc::new(ode_path))?;
    let starts = PointSet::box_grid(d, -1.0, 1.0, cfg.density_grid);
    let opts = FlowOptions { stride: chart.steps(), ..Default::default() };
    let flow = lagrangian_flow(&starts, &chart, drift.as_ref(), &opts)?;
    let steps = chart.steps();
    let eps = cfg.fd_step;
    let density_residual = (0..starts.len())
        .into_par_iter()
        .map(|p| {
            let x = starts.point(p);
            let mut jac = [0.0; MAX_DIM * MAX_DIM];
            for b in 0..d {
                let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
                xp[b] += eps;
                xm[b] -= eps;
                let (yp, _) = integrate_point(&xp, &chart, drift.as_ref(), steps)?;
                let (ym, _) = integrate_point(&xm, &chart, drift.as_ref(), steps)?;
                for a in 0..d {
                    jac[a * d + b] = (yp[a] - ym[a]) / (2.0 * eps);
                }
            }
            Ok((flow.log_rho_at(p, flow.last()) - determinant(d, &jac[..d * d]).ln()).abs())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let passed = [
        chain_rule.max_residual,
        det_identity.gradient_residual,
        det_identity.jacobi_residual,
        liouville_residual,
        density_residual,
    ]
    .iter()
    .all(|&r| r <= cfg.tolerance);
    Ok(IdentityReport {
        scenario: cfg.scenario.clone(),
        seed: cfg.seed,
        points: pts.len() / d,
        chain_rule,
        det_identity,
        liouville_residual,
        density_residual,
        tolerance: cfg.tolerance,
        passed,
    })
}
