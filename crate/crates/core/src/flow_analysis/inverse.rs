use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brownian::{sample_path, BrownianPath};
use crate::decomposition::{compose, lagrangian_flow, FlowField, FlowOptions, PointSet};
use crate::error::{Result, RoughFlowError};
use crate::fields::{MollifierSpec, Scaled, VectorField};
use crate::scenario::scenario;
use crate::linalg::{dist, MAX_DIM};
use crate::sde::{heun_value_step, Diffusion, DiffusionChart};

/// `X̂_T^T`: the flow of `dX̂ = −Σ A_i(X̂)∘dŵ^i − A₀(X̂)dt` with
/// `ŵ_t = w_T − w_{T−t}`, solved by the same decomposition as the forward
/// flow. Evaluated at `points`, its final output approximates `X_T^{-1}`.
/// Both noise and drift change sign: each reversed step undoes one forward
/// step, so for constant `A_i` the result is exactly `y − Σ A_i w_T^i`.
pub fn inverse_flow(
    diffusion: &Diffusion,
    drift: Arc<dyn VectorField>,
    path: &BrownianPath,
    points: &PointSet,
    opts: &FlowOptions,
) -> Result<FlowField> {
    let chart = DiffusionChart::new(diffusion.clone(), Arc::new(path.reverse().negate()))?;
    let reversed = Scaled { inner: drift, scale: -1.0 };
    let flow = lagrangian_flow(points, &chart, &reversed, opts)?;
    compose(&chart, &flow)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundtripReport {
    pub h: f64,
    pub points: usize,
    /// `|X̂_T^T(X_T(x)) − x|` per grid point.
    pub errors: Vec<f64>,
    pub median: f64,
    pub max: f64,
}

/// Forward flow to `T`, then the reversed flow from the images back to time 0.
pub fn roundtrip(
    diffusion: &Diffusion,
    drift: Arc<dyn VectorField>,
    path: &BrownianPath,
    points: &PointSet,
) -> Result<RoundtripReport> {
    let opts = FlowOptions { stride: path.steps(), density: false, ..Default::default() };
    let chart = DiffusionChart::new(diffusion.clone(), Arc::new(path.clone()))?;
    let forward = compose(&chart, &lagrangian_flow(points, &chart, drift.as_ref(), &opts)?)?;
    let last = forward.last();
    let images: Vec<f64> = (0..points.len()).flat_map(|p| forward.y_at(p, last).to_vec()).collect();
    let images = PointSet::new(points.dim, images, points.weights.clone())?;
    let back = inverse_flow(diffusion, drift, path, &images, &opts)?;
    let errors: Vec<f64> = (0..points.len()).map(|p| dist(back.y_at(p, back.last()), points.point(p))).collect();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    let median = match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2],
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    };
    Ok(RoundtripReport { h: path.h(), points: points.len(), max: sorted.last().copied().unwrap_or(0.0), median, errors })
}

/// `σ_T(x) = exp(Σ_i ∫ div(A_i)(X_s)∘dw^i + ∫ div(A₀)(X_s)ds)` along the
/// direct trajectory: midpoint-state rule for the Stratonovich sums,
/// trapezoid rule for the time integral. `div_bound` is the standing global
/// bound on `|div A₀|`; exceeding it along the trajectory is an error.
pub fn sigma_density(
    x: &[f64],
    path: &BrownianPath,
    diffusion: &Diffusion,
    drift: &dyn VectorField,
    div_bound: f64,
) -> Result<f64> {
    let d = diffusion.dim();
    let h = path.h();
    let mut s = [0.0; MAX_DIM];
    s[..d].copy_from_slice(&x[..d]);
    let mut log_sigma = 0.0;
    let mut div0 = drift.divergence(&s[..d]);
    for k in 0..path.steps() {
        let prev = s;
        heun_value_step(&mut s, diffusion, path.step(k), Some(drift), h)?;
        if !s[..d].iter().all(|v| v.is_finite()) {
            return Err(RoughFlowError::NonFiniteState { step: k + 1 });
        }
        let mut mid = [0.0; MAX_DIM];
        for i in 0..d {
            mid[i] = 0.5 * (prev[i] + s[i]);
        }
        for (field, dw) in diffusion.fields().iter().zip(path.step(k)) {
            log_sigma += field.divergence(&mid[..d]) * dw;
        }
        let div1 = drift.divergence(&s[..d]);
        if div0.abs().max(div1.abs()) > div_bound {
            return Err(RoughFlowError::UnboundedDivergence);
        }
        log_sigma += 0.5 * h * (div0 + div1);
        div0 = div1;
    }
    Ok(log_sigma.exp())
}

/// [`sigma_density`] at every point of a set.
pub fn sigma_field(
    points: &PointSet,
    path: &BrownianPath,
    diffusion: &Diffusion,
    drift: &dyn VectorField,
    div_bound: f64,
) -> Result<Vec<f64>> {
    (0..points.len())
        .into_par_iter()
        .map(|p| sigma_density(points.point(p), path, diffusion, drift, div_bound))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverseConfig {
    pub scenario: String,
    pub t_final: f64,
    /// Coarsest step; each halving bridge-refines the same path.
    pub h: f64,
    pub halvings: usize,
    pub radius: f64,
    /// Cells per axis of the ball grid on `B(R)`.
    pub grid: usize,
    pub seed: u64,
    /// Mollification level for rough drifts; ignored by smooth ones.
    pub level: Option<u32>,
    pub mollifier: MollifierSpec,
    /// Largest accepted median roundtrip error at the coarsest step.
    pub tolerance: f64,
    /// Largest accepted `|σ_T − 1|` for divergence-free scenarios.
    pub sigma_tolerance: f64,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            scenario: "smooth-nonlinear".into(),
            t_final: 0.5,
            h: 1e-3,
            halvings: 3,
            radius: 1.0,
            grid: 8,
            seed: 0,
            level: Some(16),
            mollifier: MollifierSpec::default(),
            tolerance: 1e-2,
            sigma_tolerance: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InverseReport {
    pub scenario: String,
    pub seed: u64,
    pub level: Option<u32>,
    pub points: usize,
    pub h: Vec<f64>,
    pub medians: Vec<f64>,
    pub maxima: Vec<f64>,
    /// Each median below the previous one, or at roundoff.
    pub decreasing: bool,
    /// Coarsest median within tolerance.
    pub median_ok: bool,
    /// `max |σ_T − 1|` at the coarsest step, for divergence-free scenarios.
    pub sigma_max_deviation: Option<f64>,
    pub sigma_ok: Option<bool>,
    pub passed: bool,
    #[serde(skip)]
    pub runs: Vec<RoundtripReport>,
    #[serde(skip)]
    pub grid_points: Vec<f64>,
}

impl InverseReport {
    /// CSV with columns `h, x_1, x_2, error`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "h,x_1,x_2,error")?;
        for run in &self.runs {
            for (p, e) in run.errors.iter().enumerate() {
                let x = &self.grid_points[2 * p..2 * p + 2];
                writeln!(w, "{:e},{:e},{:e},{:e}", run.h, x[0], x[1], e)?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, file: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(file)?))
    }
}

/// Medians at or below this are roundoff: translation charts invert exactly.
const ROUNDOFF: f64 = 1e-12;

/// Roundtrip `X̂_T^T ∘ X_T` on a ball grid along a ladder of bridge-refined
/// steps, plus `σ_T ≡ 1` for divergence-free scenarios.
pub fn inverse_experiment(cfg: &InverseConfig) -> Result<InverseReport> {
    let s = scenario(&cfg.scenario)?;
    if s.dim != 2 {
        return Err(RoughFlowError::InvalidArgument("inverse experiment is planar".into()));
    }
    let drift = s.drift_field(cfg.level, &cfg.mollifier)?;
    let dif = s.diffusion();
    let points = PointSet::ball_grid(s.dim, cfg.radius, cfg.grid);
    let mut path = sample_path(cfg.seed, s.m(), cfg.t_final, cfg.h)?;
    let sigma_max_deviation = if s.divergence_free {
        let sig = sigma_field(&points, &path, &dif, drift.as_ref(), f64::INFINITY)?;
        Some(sig.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max))
    } else {
        None
    };
    let mut runs = Vec::with_capacity(cfg.halvings + 1);
    for i in 0..=cfg.halvings {
        if i > 0 {
            path = path.refine();
        }
        runs.push(roundtrip(&dif, drift.clone(), &path, &points)?);
    }
    let medians: Vec<f64> = runs.iter().map(|r| r.median).collect();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0] || w[1] <= ROUNDOFF);
    let median_ok = medians[0] <= cfg.tolerance;
    let sigma_ok = sigma_max_deviation.map(|v| v <= cfg.sigma_tolerance);
    Ok(InverseReport {
        scenario: cfg.scenario.clone(),
        seed: cfg.seed,
        level: if s.is_smooth() { None } else { cfg.level },
        points: points.len(),
        h: runs.iter().map(|r| r.h).collect(),
        maxima: runs.iter().map(|r| r.max).collect(),
        decreasing,
        median_ok,
        sigma_ok,
        passed: decreasing && median_ok && sigma_ok != Some(false),
        medians,
        sigma_max_deviation,
        runs,
        grid_points: points.points.clone(),
    })
}
