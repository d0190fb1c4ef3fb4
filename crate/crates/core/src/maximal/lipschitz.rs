use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimates::{lens_ratio, CalibratedConstants};
use super::grid::{local_max_on_ball, BallStencil, RadiusLadder, ScalarGrid};
use crate::brownian::sample_path;
use crate::decomposition::{lagrangian_flow, FlowField, FlowOptions, PointSet};
use crate::error::{Result, RoughFlowError};
use crate::fields::{ball_samples, mollify_drift, MollifierSpec, VectorField};
use crate::linalg::{dist, frobenius, matmul, norm, operator_norm, MAX_DIM};
use crate::scenario::scenario;
use crate::sde::{ChartKind, ChartPoint, DiffusionChart};

const D: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LipschitzConfig {
    pub scenario: String,
    /// Radius of the ball on which the Lipschitz set is sought.
    pub radius: f64,
    pub t_final: f64,
    pub h: f64,
    pub seed: u64,
    /// Mollify the drift at this level; the rough drift itself otherwise.
    pub level: Option<u32>,
    pub mollifier: MollifierSpec,
    /// Nodes per axis of the flow grid on `[−3R, 3R]²`.
    pub grid: usize,
    /// Nodes per axis of the drift-gradient grid on `B(R₁ + R̃)`.
    pub gradient_grid: usize,
    /// Output times after `t = 0`.
    pub times: usize,
    /// Radii in the geometric ladder for the supremum over `r ≤ 2R`.
    pub radii: usize,
    /// Excluded measure as a fraction of `L_d(B(R))`.
    pub eps_fraction: f64,
    /// Samples for the growth constant of the transformed drift.
    pub growth_samples: usize,
    pub constants: CalibratedConstants,
}

impl Default for LipschitzConfig {
    fn default() -> Self {
        Self {
            scenario: "sobolev-log".into(),
            radius: 0.5,
            t_final: 0.5,
            h: 1.0 / 128.0,
            seed: 0,
            level: None,
            mollifier: MollifierSpec::default(),
            grid: 129,
            gradient_grid: 257,
            times: 8,
            radii: 16,
            eps_fraction: 0.1,
            growth_samples: 512,
            constants: CalibratedConstants::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzSetReport {
    pub scenario: String,
    pub seed: u64,
    pub radius: f64,
    pub t_final: f64,
    pub h: f64,
    pub spacing: f64,
    pub eps: f64,
    /// Sampled `sup |Ã₀(t,x)|/(1+|x|)`.
    pub growth_constant: f64,
    pub r1: f64,
    pub r_tilde: f64,
    /// `exp(∫ ‖div Ã₀‖_{L^∞(B(R₁))} dt)`.
    pub density_bound: f64,
    pub l1: f64,
    pub lens_ratio: f64,
    pub constants: CalibratedConstants,
    /// `max(L₁/ε, 3 log 2)`.
    pub threshold: f64,
    /// Discrete measure of `B(R)`.
    pub ball_measure: f64,
    pub excluded_measure: f64,
    pub cell_area: f64,
    /// `L_d(B(R) \ E) ≤ ε + one cell`.
    pub measure_ok: bool,
    /// Largest `|Y_t(x)−Y_t(y)|/|x−y|` over pairs in `E`, per output time.
    pub lipschitz_by_time: Vec<f64>,
    pub empirical_lipschitz: f64,
    /// `2C̃_d L₁/ε`, the logarithm of the Lipschitz bound.
    pub log_lipschitz_bound: f64,
    pub lipschitz_ok: bool,
    /// Largest `sup_{t,r} Q(t,x,r)` over `B(R)`.
    pub q_sup_max: f64,
    /// Nodes where `sup Q > log 2 + CΦ + C·M_{2R}Φ`.
    pub q_bound_violations: usize,
    pub q_bound_nodes: usize,
    /// The same construction with the smallest threshold `λ` that still
    /// excludes at most `ε`; the proof's second half then gives
    /// `Lip ≤ exp(2C̃_d λ)`.
    pub tight_threshold: f64,
    pub tight_excluded_measure: f64,
    pub tight_lipschitz: f64,
    pub tight_log_bound: f64,
    pub tight_ok: bool,
}

/// Everything [`lipschitz_set`] computes, for export and for
/// [`approx_diff_check`].
#[derive(Debug, Clone)]
pub struct LipschitzSet {
    pub report: LipschitzSetReport,
    /// 1 on `E`, 0 on `B(R) \ E`, NaN outside `B(R)`.
    pub mask: ScalarGrid,
    /// `sup_{t,r} Q(t,x,r)` on `B(R)`.
    pub sup_q: ScalarGrid,
    /// `Φ` on `B(3R)`.
    pub phi: ScalarGrid,
    /// Flow from the nodes of `B(3R)` on the mask's grid.
    pub flow: FlowField,
    pub chart: DiffusionChart,
}

/// `∇Ã₀ = (∇K)A₀(φ) + K(∇A₀)(φ)J`, row-major. `∇K` by central differences
/// when the chart is not a translation; the drift enters only through its
/// a.e. Jacobian.
pub fn transformed_gradient(
    chart: &DiffusionChart,
    drift: &dyn VectorField,
    step: usize,
    x: &[f64],
) -> Result<(ChartPoint, [f64; MAX_DIM * MAX_DIM])> {
    let d = chart.dim();
    let cp = chart.exact(step, x)?;
    let (mut a, mut ga) = ([0.0; MAX_DIM], [0.0; MAX_DIM * MAX_DIM]);
    drift.value(&cp.phi[..d], &mut a);
    drift.jacobian(&cp.phi[..d], &mut ga);
    let (mut kg, mut out) = ([0.0; MAX_DIM * MAX_DIM], [0.0; MAX_DIM * MAX_DIM]);
    matmul(d, &cp.k, &ga, &mut kg);
    matmul(d, &kg, &cp.j, &mut out);
    if !matches!(chart.kind(), ChartKind::Identity | ChartKind::Translation) {
        let delta = 1e-5;
        let mut xp = [0.0; MAX_DIM];
        for b in 0..d {
            xp[..d].copy_from_slice(&x[..d]);
            xp[b] = x[b] + delta;
            let kp = chart.exact(step, &xp[..d])?.k;
            xp[b] = x[b] - delta;
            let km = chart.exact(step, &xp[..d])?.k;
            for i in 0..d {
                out[i * d + b] += (0..d).map(|j| (kp[i * d + j] - km[i * d + j]) / (2.0 * delta) * a[j]).sum::<f64>();
            }
        }
    }
    Ok((cp, out))
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

/// Largest `|F(x)−F(y)|/|x−y|` over pairs of listed nodes.
fn pair_lipschitz(grid: &ScalarGrid, nodes: &[usize], image: impl Fn(usize) -> [f64; 2] + Sync) -> f64 {
    let pos: Vec<[f64; 2]> = nodes.iter().map(|&i| grid.node(i)).collect();
    let img: Vec<[f64; 2]> = nodes.iter().map(|&i| image(i)).collect();
    (0..nodes.len())
        .into_par_iter()
        .map(|a| {
            let mut best: f64 = 0.0;
            for b in a + 1..nodes.len() {
                let sep = dist(&pos[a], &pos[b]);
                best = best.max(dist(&img[a], &img[b]) / sep);
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// The Lipschitz set of the random ODE flow: `Q(t,x,r)` over a geometric
/// radius ladder and the output times, `Φ` from the maximal function of
/// `|∇Ã₀|` along trajectories, the constant chain `L, L₁`, and the set
/// `E = {sup Q ≤ L₁/ε}` with its measured Lipschitz constant.
pub fn lipschitz_set(cfg: &LipschitzConfig) -> Result<LipschitzSet> {
    let s = scenario(&cfg.scenario)?;
    if s.dim != D {
        return Err(RoughFlowError::InvalidArgument("Lipschitz sets are computed in the plane".into()));
    }
    if !(cfg.radius > 0.0) || cfg.times == 0 || !(cfg.eps_fraction > 0.0 && cfg.eps_fraction < 1.0) {
        return Err(RoughFlowError::InvalidArgument("need R > 0, at least one time and 0 < ε-fraction < 1".into()));
    }
    let drift: Arc<dyn VectorField> = match cfg.level {
        None => Arc::new(s.drift.clone()),
        Some(n) => Arc::new(mollify_drift(&s.drift, n, &cfg.mollifier)?),
    };
    let path = sample_path(cfg.seed, s.m(), cfg.t_final, cfg.h)?;
    let chart = DiffusionChart::new(s.diffusion(), Arc::new(path))?;
    let r = cfg.radius;

    let grid = ScalarGrid::centered(3.0 * r, cfg.grid, |_| 0.0)?;
    let spacing = grid.spacing;
    let r_min = 4.0 * spacing;
    if r_min >= 2.0 * r {
        return Err(RoughFlowError::Resolution(format!(
            "smallest radius {r_min:.3e} (four cells) is not below 2R = {}",
            2.0 * r
        )));
    }
    let flow_nodes = grid.ball_nodes(3.0 * r);
    let pts: Vec<f64> = flow_nodes.iter().flat_map(|&i| grid.node(i)).collect();
    let points = PointSet::new(D, pts, vec![grid.cell_area(); flow_nodes.len()])?;
    let n = chart.steps();
    let stride = n.div_ceil(cfg.times).max(1);
    let opts = FlowOptions { stride, density: false, ..Default::default() };
    let flow = lagrangian_flow(&points, &chart, drift.as_ref(), &opts)?;
    let outputs = flow.outputs();
    let mut slot = vec![usize::MAX; grid.len()];
    for (p, &idx) in flow_nodes.iter().enumerate() {
        slot[idx] = p;
    }
    let y_of = |idx: usize, o: usize| -> [f64; 2] {
        let y = flow.y_at(slot[idx], o);
        [y[0], y[1]]
    };

    // sup over t and r of Q(t, x, r) on B(R)
    let inner = grid.ball_nodes(r);
    let stencil = BallStencil::new(spacing, 2.0 * r);
    let q = (2.0 * r / r_min).powf(1.0 / (cfg.radii.max(2) - 1) as f64);
    let ladder: Vec<(f64, usize)> = (0..cfg.radii.max(2))
        .map(|j| {
            let rj = (r_min * q.powi(j as i32)).min(2.0 * r);
            (rj, stencil.prefix(rj))
        })
        .collect();
    let sup_q_vals: Vec<f64> = inner
        .par_iter()
        .map(|&x| {
            let mut best: f64 = 0.0;
            for o in 0..outputs {
                let yx = y_of(x, o);
                for &(rj, len) in &ladder {
                    let mut sum = 0.0;
                    for &(di, dj, _) in &stencil.offsets[..len] {
                        let z = grid.offset(x, di, dj).expect("B(3R) lies in the grid");
                        sum += (dist(&yx, &y_of(z, o)) / rj + 1.0).ln();
                    }
                    best = best.max(sum / len as f64);
                }
            }
            best
        })
        .collect();
    let mut sup_q = grid.with_values(vec![f64::NAN; grid.len()])?;
    for (&idx, &v) in inner.iter().zip(&sup_q_vals) {
        sup_q.values[idx] = v;
    }

    // growth constant, radii and the gradient grid
    let samples = ball_samples(D, cfg.growth_samples, 10.0, cfg.seed ^ 0x6772_6f77);
    let mut growth: f64 = 0.0;
    for &k in &flow.output_steps {
        for z in std::iter::once(&[0.0, 0.0][..]).chain(samples.chunks(D)) {
            let cp = chart.exact(k, z)?;
            let (v, _) = crate::decomposition::transformed_at(&cp, drift.as_ref(), D, false);
            growth = growth.max(norm(&v[..D]) / (1.0 + norm(z)));
        }
    }
    let ect = (growth * cfg.t_final).exp();
    let r1 = (1.0 + 3.0 * r) * ect;
    let r_tilde = 2.0 * (1.0 + 2.0 * r) * ect;
    let ng = cfg.gradient_grid.max(9);
    let half = (r1 + r_tilde) / (1.0 - 6.0 / (ng - 1) as f64);
    let gspacing = 2.0 * half / (ng - 1) as f64;
    let rho_m = r1 + 2.0 * gspacing;

    let mut max_div = Vec::with_capacity(outputs);
    let mut log_integrals = Vec::with_capacity(outputs);
    let mut max_grids = Vec::with_capacity(outputs);
    let outer_r1 = {
        let g = ScalarGrid::centered(half, ng, |_| 0.0)?;
        (g.ball_nodes(r1), g.ball_nodes(r1 + r_tilde))
    };
    for &k in &flow.output_steps {
        let pairs: Vec<(f64, f64)> = (0..ng * ng)
            .into_par_iter()
            .map(|idx| {
                let x = [-half + (idx / ng) as f64 * gspacing, -half + (idx % ng) as f64 * gspacing];
                let (_, g) = transformed_gradient(&chart, drift.as_ref(), k, &x)?;
                Ok((frobenius(&g[..D * D]), g[0] + g[3]))
            })
            .collect::<Result<_>>()?;
        let gnorm = ScalarGrid::new([-half; 2], gspacing, [ng, ng], pairs.iter().map(|p| p.0).collect())?;
        max_div.push(outer_r1.0.iter().map(|&i| pairs[i].1.abs()).fold(0.0, f64::max));
        log_integrals.push(gnorm.integral_over(&outer_r1.1, |v| v * (2.0 + v).ln()));
        max_grids.push(local_max_on_ball(&gnorm, r_tilde, rho_m, RadiusLadder::Shells)?);
    }
    let times = &flow.times;

    // Φ(x) = ∫ M_{R̃}|∇Ã₀(s)|(Y_s(x)) ds on B(3R), then M_{2R}Φ on B(R)
    let phi_vals: Vec<f64> = flow_nodes
        .par_iter()
        .map(|&x| {
            let vals = (0..outputs)
                .map(|o| {
                    max_grids[o].interpolate(&y_of(x, o)).ok_or_else(|| {
                        RoughFlowError::Coverage("trajectory left B(R₁); the growth constant is too small".into())
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(trapezoid(times, &vals))
        })
        .collect::<Result<_>>()?;
    let mut phi = grid.with_values(vec![0.0; grid.len()])?;
    for (&idx, &v) in flow_nodes.iter().zip(&phi_vals) {
        phi.values[idx] = v;
    }
    let max_phi = local_max_on_ball(&phi, 2.0 * r, r, RadiusLadder::Shells)?;
    for (idx, v) in phi.values.iter_mut().enumerate() {
        if slot[idx] == usize::MAX {
            *v = f64::NAN;
        }
    }
    let c = cfg.constants;
    let ln2 = std::f64::consts::LN_2;
    let q_bound_violations = inner
        .iter()
        .filter(|&&x| sup_q.values[x] > (ln2 + c.pointwise * (phi.values[x] + max_phi.values[x])) * (1.0 + 1e-12))
        .count();

    // constant chain
    let density_bound = trapezoid(times, &max_div).exp();
    let l1 = 3.0 * c.pointwise * (1.0 + c.weak_type) * density_bound * c.log_integral * trapezoid(times, &log_integrals);
    let ball_measure = inner.len() as f64 * grid.cell_area();
    let eps = cfg.eps_fraction * std::f64::consts::PI * r * r;
    // The splitting of the superlevel set needs 1/(3η) ≥ log 2.
    let threshold = (l1 / eps).max(3.0 * std::f64::consts::LN_2);
    let lens = lens_ratio(D)?;

    let select = |lambda: f64| -> Vec<usize> { inner.iter().copied().filter(|&x| sup_q.values[x] <= lambda).collect() };
    let lipschitz_on = |nodes: &[usize]| -> Vec<f64> {
        (0..outputs).map(|o| pair_lipschitz(&grid, nodes, |i| y_of(i, o))).collect()
    };
    let e_nodes = select(threshold);
    let excluded_measure = (inner.len() - e_nodes.len()) as f64 * grid.cell_area();
    let lipschitz_by_time = lipschitz_on(&e_nodes);
    let empirical_lipschitz = lipschitz_by_time.iter().copied().fold(0.0, f64::max);
    let log_lipschitz_bound = 2.0 * lens * threshold;

    let mut sorted = sup_q_vals.clone();
    sorted.sort_by(f64::total_cmp);
    let allowed = (eps / grid.cell_area()).floor() as usize;
    let tight_threshold = sorted[sorted.len().saturating_sub(allowed + 1).min(sorted.len() - 1)];
    let tight_nodes = select(tight_threshold);
    let tight_lipschitz = lipschitz_on(&tight_nodes).into_iter().fold(0.0, f64::max);
    let tight_log_bound = 2.0 * lens * tight_threshold;

    let mut mask = grid.with_values(vec![f64::NAN; grid.len()])?;
    for &x in &inner {
        mask.values[x] = 0.0;
    }
    for &x in &e_nodes {
        mask.values[x] = 1.0;
    }
    let report = LipschitzSetReport {
        scenario: cfg.scenario.clone(),
        seed: cfg.seed,
        radius: r,
        t_final: cfg.t_final,
        h: cfg.h,
        spacing,
        eps,
        growth_constant: growth,
        r1,
        r_tilde,
        density_bound,
        l1,
        lens_ratio: lens,
        constants: c,
        threshold,
        ball_measure,
        excluded_measure,
        cell_area: grid.cell_area(),
        measure_ok: excluded_measure <= eps + grid.cell_area(),
        empirical_lipschitz,
        lipschitz_ok: empirical_lipschitz.ln() <= log_lipschitz_bound,
        lipschitz_by_time,
        log_lipschitz_bound,
        q_sup_max: sup_q_vals.iter().copied().fold(0.0, f64::max),
        q_bound_violations,
        q_bound_nodes: inner.len(),
        tight_threshold,
        tight_excluded_measure: (inner.len() - tight_nodes.len()) as f64 * grid.cell_area(),
        tight_lipschitz,
        tight_log_bound,
        tight_ok: tight_lipschitz.ln() <= tight_log_bound,
    };
    Ok(LipschitzSet { report, mask, sup_q, phi, flow, chart })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxDiffReport {
    pub output: usize,
    pub t: f64,
    /// Largest `|X_t(x)−X_t(y)|/|x−y|` over pairs in `E`.
    pub lipschitz_x: f64,
    pub lipschitz_y: f64,
    /// Sampled `sup ‖J_t‖` over the bounding box of `Y_t(E)`.
    pub lipschitz_phi: f64,
    pub product_ok: bool,
    /// Nodes of `E` whose four-cell neighbours along each axis lie in `E`.
    pub interior: usize,
    pub stabilized: usize,
    pub fraction: f64,
    pub stabilization_ok: bool,
}

/// Lipschitz constant of `X_t = φ_t(Y_t)` on `E` against
/// `Lip(φ_t)·Lip(Y_t|_E)`, and stabilization of difference-quotient
/// matrices at scales of 4, 2 and 1 cells (successive operator-norm changes
/// at most 20%) on the interior of `E`.
pub fn approx_diff_check(set: &LipschitzSet, output: usize) -> Result<ApproxDiffReport> {
    let flow = &set.flow;
    if output >= flow.outputs() {
        return Err(RoughFlowError::InvalidArgument("output index out of range".into()));
    }
    let grid = &set.mask;
    let mut slot = vec![usize::MAX; grid.len()];
    for p in 0..flow.points.len() {
        let x = flow.points.point(p);
        let i = ((x[0] - grid.lo[0]) / grid.spacing).round() as usize;
        let j = ((x[1] - grid.lo[1]) / grid.spacing).round() as usize;
        slot[grid.index(i, j)] = p;
    }
    let e_nodes: Vec<usize> = (0..grid.len()).filter(|&i| grid.values[i] == 1.0).collect();
    let x_of = |idx: usize| -> [f64; 2] {
        let v = flow.x_at(slot[idx], output);
        [v[0], v[1]]
    };
    let y_of = |idx: usize| -> [f64; 2] {
        let v = flow.y_at(slot[idx], output);
        [v[0], v[1]]
    };
    let lipschitz_x = pair_lipschitz(grid, &e_nodes, x_of);
    let lipschitz_y = pair_lipschitz(grid, &e_nodes, y_of);

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &i in &e_nodes {
        let y = y_of(i);
        for a in 0..2 {
            lo[a] = lo[a].min(y[a]);
            hi[a] = hi[a].max(y[a]);
        }
    }
    let k = flow.output_steps[output];
    let samples = 33;
    let mut lipschitz_phi: f64 = 0.0;
    if !e_nodes.is_empty() {
        for a in 0..samples {
            for b in 0..samples {
                let z = [
                    lo[0] + (hi[0] - lo[0]) * a as f64 / (samples - 1) as f64,
                    lo[1] + (hi[1] - lo[1]) * b as f64 / (samples - 1) as f64,
                ];
                let cp = set.chart.exact(k, &z)?;
                lipschitz_phi = lipschitz_phi.max(operator_norm(D, &cp.j[..D * D]));
            }
        }
    }
    let product_ok = lipschitz_x <= lipschitz_phi * lipschitz_y * (1.0 + 1e-6) + 1e-12;

    let in_e = |idx: Option<usize>| idx.is_some_and(|i| grid.values[i] == 1.0);
    let quotient = |idx: usize, s: isize| -> Option<[f64; 4]> {
        let mut m = [0.0; 4];
        for (b, (di, dj)) in [(s, 0), (0, s)].into_iter().enumerate() {
            let (p, q) = (grid.offset(idx, di, dj)?, grid.offset(idx, -di, -dj)?);
            let (xp, xq) = (x_of(p), x_of(q));
            for a in 0..2 {
                m[a * 2 + b] = (xp[a] - xq[a]) / (2.0 * s as f64 * grid.spacing);
            }
        }
        Some(m)
    };
    let mut interior = 0;
    let mut stabilized = 0;
    for &idx in &e_nodes {
        if ![(4, 0), (-4, 0), (0, 4), (0, -4)].iter().all(|&(di, dj)| in_e(grid.offset(idx, di, dj))) {
            continue;
        }
        interior += 1;
        let (Some(m4), Some(m2), Some(m1)) = (quotient(idx, 4), quotient(idx, 2), quotient(idx, 1)) else {
            continue;
        };
        let diff = |a: &[f64; 4], b: &[f64; 4]| {
            let d: Vec<f64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
            operator_norm(D, &d)
        };
        if diff(&m2, &m4) <= 0.2 * operator_norm(D, &m4) && diff(&m1, &m2) <= 0.2 * operator_norm(D, &m2) {
            stabilized += 1;
        }
    }
    let fraction = if interior == 0 { 0.0 } else { stabilized as f64 / interior as f64 };
    Ok(ApproxDiffReport {
        output,
        t: flow.times[output],
        lipschitz_x,
        lipschitz_y,
        lipschitz_phi,
        product_ok,
        interior,
        stabilized,
        fraction,
        stabilization_ok: fraction >= 0.9,
    })
}
