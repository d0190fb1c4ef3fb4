use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brownian::sample_path;
use crate::error::{Result, RoughFlowError};
use crate::fields::{ball_samples, VectorField};
use crate::linalg::{norm, operator_norm, MAX_DIM};
use crate::scenario::scenario;
use crate::sde::diffusion_flow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthConfig {
    pub scenario: String,
    pub paths: usize,
    pub seed_base: u64,
    pub t_final: f64,
    pub h: f64,
    pub radius: f64,
    /// Sample points per path besides the origin.
    pub samples: usize,
    /// Exponent in `|φ_t(x)| ≤ F(1+|x|^α)`, `α > 1`.
    pub alpha: f64,
    /// Exponent in `‖J_t‖ ∨ ‖K_t‖ ≤ G(1+|x|^β)`, `β > 0`.
    pub beta: f64,
    /// Exponent in `|Ã₀| ≤ Φ_T(1+|x|^{1−ε₁})`; the drift's own `ε₀` when unset.
    pub eps1: Option<f64>,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        Self {
            scenario: "rotation-bv".into(),
            paths: 100,
            seed_base: 0,
            t_final: 1.0,
            h: 1.0 / 64.0,
            radius: 4.0,
            samples: 64,
            alpha: 1.01,
            beta: 0.5,
            eps1: None,
        }
    }
}

/// Distribution over paths of one pathwise maximum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStats {
    pub max: f64,
    pub median: f64,
    pub q90: f64,
    pub mean: f64,
    /// Mean of squares, a surrogate for the `L²(Ω)` norm.
    pub second_moment: f64,
    pub per_path: Vec<f64>,
}

impl PathStats {
    fn from(per_path: Vec<f64>) -> Self {
        let mut s = per_path.clone();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let q = |f: f64| s[((n - 1) as f64 * f).round() as usize];
        Self {
            max: s[n - 1],
            median: q(0.5),
            q90: q(0.9),
            mean: s.iter().sum::<f64>() / n as f64,
            second_moment: s.iter().map(|v| v * v).sum::<f64>() / n as f64,
            per_path,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthDiagnostics {
    pub scenario: String,
    pub alpha: f64,
    pub beta: f64,
    pub eps1: f64,
    /// `sup |φ_t(x)| / (1+|x|^α)`.
    pub f_hat: PathStats,
    /// `sup ‖J_t(x)‖ ∨ ‖K_t(x)‖ / (1+|x|^β)`, operator norms.
    pub g_hat: PathStats,
    /// `sup |K_t(x)A₀(φ_t(x))| / (1+|x|^{1−ε₁})`.
    pub phi_hat: PathStats,
    pub finite: bool,
}

/// Pathwise maxima over every grid time and the sample points (origin plus
/// the fixed ball/sphere stream) of the three growth ratios. The drift enters
/// unmollified.
pub fn growth_diagnostics(cfg: &GrowthConfig) -> Result<GrowthDiagnostics> {
    if cfg.paths == 0 || cfg.alpha <= 1.0 || cfg.beta <= 0.0 {
        return Err(RoughFlowError::InvalidArgument("need paths > 0, α > 1, β > 0".into()));
    }
    let s = scenario(&cfg.scenario)?;
    let d = s.dim;
    let eps1 = cfg.eps1.unwrap_or(s.drift.growth.eps0);
    let dif = s.diffusion();
    let mut points = vec![0.0; d];
    points.extend(ball_samples(d, cfg.samples, cfg.radius, 0x7068_6974));
    let per_path: Vec<[f64; 3]> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(cfg.seed_base + i as u64, s.m(), cfg.t_final, cfg.h)?;
            let mut best = [0.0f64; 3];
            for x in points.chunks(d) {
                let r = norm(x);
                let traj = diffusion_flow(x, &path, &dif, 1)?;
                for t in 0..traj.len() {
                    let phi = traj.state(t);
                    let (j, k) = (traj.jacobian(t), traj.inverse(t));
                    best[0] = best[0].max(norm(phi) / (1.0 + r.powf(cfg.alpha)));
                    let jk = operator_norm(d, j).max(operator_norm(d, k));
                    best[1] = best[1].max(jk / (1.0 + r.powf(cfg.beta)));
                    let mut a = [0.0; MAX_DIM];
                    s.drift.value(phi, &mut a);
                    let v: Vec<f64> = (0..d).map(|row| (0..d).map(|c| k[row * d + c] * a[c]).sum()).collect();
                    best[2] = best[2].max(norm(&v) / (1.0 + r.powf(1.0 - eps1)));
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let col = |c: usize| per_path.iter().map(|b| b[c]).collect::<Vec<f64>>();
    let finite = per_path.iter().all(|b| b.iter().all(|v| v.is_finite()));
    Ok(GrowthDiagnostics {
        scenario: cfg.scenario.clone(),
        alpha: cfg.alpha,
        beta: cfg.beta,
        eps1,
        f_hat: PathStats::from(col(0)),
        g_hat: PathStats::from(col(1)),
        phi_hat: PathStats::from(col(2)),
        finite,
    })
}
