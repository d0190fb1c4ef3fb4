use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::transformed_at;
use crate::error::{Result, RoughFlowError};
use crate::fields::VectorField;
use crate::linalg::{determinant, dist, invert, unit_ball_volume, MAX_DIM};
use crate::sde::{diffusion_state, ChartPoint, DiffusionChart};

const D: usize = MAX_DIM;

/// Weighted point cloud (quadrature nodes and volumes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != dim * weights.len() {
            return Err(RoughFlowError::InvalidArgument("points and weights disagree".into()));
        }
        Ok(Self { dim, points, weights })
    }

    /// Single point with unit weight.
    pub fn single(x: &[f64]) -> Self {
        Self { dim: x.len(), points: x.to_vec(), weights: vec![1.0] }
    }

    /// Cell centres of the uniform `n^d` grid on `[lo, hi]^d`, weight = cell volume.
    pub fn box_grid(dim: usize, lo: f64, hi: f64, n: usize) -> Self {
        let dx = (hi - lo) / n as f64;
        let mut points = Vec::new();
        let mut idx = vec![0usize; dim];
        let total = n.pow(dim as u32);
        for _ in 0..total {
            for a in 0..dim {
                points.push(lo + (idx[a] as f64 + 0.5) * dx);
            }
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] < n {
                    break;
                }
                idx[a] = 0;
            }
        }
        Self { dim, points, weights: vec![dx.powi(dim as i32); total] }
    }

    /// Cell centres of an `n^d` grid on `[−R, R]^d` lying in the closed ball
    /// `B(R)`, rescaled so the weights sum to the exact ball volume.
    pub fn ball_grid(dim: usize, radius: f64, n: usize) -> Self {
        let full = Self::box_grid(dim, -radius, radius, n);
        let mut points = Vec::new();
        for i in 0..full.len() {
            let p = full.point(i);
            if p.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
                points.extend_from_slice(p);
            }
        }
        let count = points.len() / dim;
        let w = unit_ball_volume(dim) * radius.powi(dim as i32) / count as f64;
        Self { dim, points, weights: vec![w; count] }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    /// Output every `stride` steps (and at the final step).
    pub stride: usize,
    /// Accumulate `log ρ_t`.
    pub density: bool,
    /// Abort with `ChartExhausted` when `|Y_t|` exceeds this radius.
    pub max_radius: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { stride: 1, density: true, max_radius: 1e6 }
    }
}

/// `Y_t` on a point set, with `log ρ_t` and the chart value `φ_t(Y_t)`.
/// Arrays are point-major: `[point][output][component]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowField {
    pub dim: usize,
    pub points: PointSet,
    pub h: f64,
    pub output_steps: Vec<usize>,
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub log_rho: Vec<f64>,
    /// `φ_t(Y_t)` from the chart.
    pub x: Vec<f64>,
    pub reanchors: usize,
}

impl FlowField {
    pub fn outputs(&self) -> usize {
        self.times.len()
    }

    pub fn last(&self) -> usize {
        self.times.len() - 1
    }

    pub fn y_at(&self, p: usize, o: usize) -> &[f64] {
        let i = (p * self.outputs() + o) * self.dim;
        &self.y[i..i + self.dim]
    }

    pub fn x_at(&self, p: usize, o: usize) -> &[f64] {
        let i = (p * self.outputs() + o) * self.dim;
        &self.x[i..i + self.dim]
    }

    pub fn log_rho_at(&self, p: usize, o: usize) -> f64 {
        self.log_rho[p * self.outputs() + o]
    }

    pub fn rho_at(&self, p: usize, o: usize) -> f64 {
        self.log_rho_at(p, o).exp()
    }

    /// CSV with columns `t, x_1..x_d (initial), Y_1..Y_d, rho`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim;
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        header.extend((1..=d).map(|i| format!("Y_{i}")));
        header.push("rho".into());
        writeln!(w, "{}", header.join(","))?;
        for o in 0..self.outputs() {
            for p in 0..self.points.len() {
                let mut row = vec![format!("{:e}", self.times[o])];
                row.extend(self.points.point(p).iter().map(|v| format!("{v:e}")));
                row.extend(self.y_at(p, o).iter().map(|v| format!("{v:e}")));
                row.push(format!("{:e}", self.rho_at(p, o)));
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, file: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(file)?))
    }
}

fn output_steps(n: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut v: Vec<usize> = (0..=n).step_by(stride).collect();
    if *v.last().unwrap() != n {
        v.push(n);
    }
    v
}

/// Midpoint-in-time transformed drift: `½(K_k+K_{k+1})·A₀(½(φ_k+φ_{k+1}))`.
fn mid_drift(a: &ChartPoint, b: &ChartPoint, drift: &dyn VectorField, d: usize) -> [f64; D] {
    let mut mid = *a;
    for i in 0..d {
        mid.phi[i] = 0.5 * (a.phi[i] + b.phi[i]);
    }
    for q in 0..d * d {
        mid.k[q] = 0.5 * (a.k[q] + b.k[q]);
    }
    transformed_at(&mid, drift, d, false).0
}

struct PointRun {
    y: Vec<f64>,
    log_rho: Vec<f64>,
    x: Vec<f64>,
    reanchors: usize,
}

fn run_point(
    x0: &[f64],
    chart: &DiffusionChart,
    drift: &dyn VectorField,
    outputs: &[usize],
    opts: &FlowOptions,
    last_step: usize,
) -> Result<PointRun> {
    let d = chart.dim();
    let h = chart.h();
    let mut cur = chart.cursor();
    let mut y = [0.0; D];
    y[..d].copy_from_slice(&x0[..d]);
    let mut log_rho = 0.0;
    let mut run = PointRun { y: vec![], log_rho: vec![], x: vec![], reanchors: 0 };
    let mut cp = cur.eval(0, &y)?;
    let (mut v, mut div) = transformed_at(&cp, drift, d, opts.density);
    let mut next_out = 0;
    let record = |k: usize, y: &[f64], cp: &ChartPoint, lr: f64, run: &mut PointRun, next_out: &mut usize| {
        if *next_out < outputs.len() && outputs[*next_out] == k {
            run.y.extend_from_slice(&y[..d]);
            run.x.extend_from_slice(&cp.phi[..d]);
            run.log_rho.push(lr);
            *next_out += 1;
        }
    };
    record(0, &y, &cp, log_rho, &mut run, &mut next_out);
    for k in 0..last_step {
        let k1 = v;
        let mut ys = [0.0; D];
        for i in 0..d {
            ys[i] = y[i] + 0.5 * h * k1[i];
        }
        let (a, b) = (cur.eval(k, &ys)?, cur.eval(k + 1, &ys)?);
        let k2 = mid_drift(&a, &b, drift, d);
        for i in 0..d {
            ys[i] = y[i] + 0.5 * h * k2[i];
        }
        let (a, b) = (cur.eval(k, &ys)?, cur.eval(k + 1, &ys)?);
        let k3 = mid_drift(&a, &b, drift, d);
        for i in 0..d {
            ys[i] = y[i] + h * k3[i];
        }
        let k4 = transformed_at(&cur.eval(k + 1, &ys)?, drift, d, false).0;
        for i in 0..d {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !y[..d].iter().all(|v| v.is_finite()) {
            return Err(RoughFlowError::NonFiniteState { step: k + 1 });
        }
        if y[..d].iter().map(|v| v * v).sum::<f64>() > opts.max_radius * opts.max_radius {
            return Err(RoughFlowError::ChartExhausted { step: k + 1 });
        }
        cp = cur.eval(k + 1, &y)?;
        let (nv, ndiv) = transformed_at(&cp, drift, d, opts.density);
        log_rho += 0.5 * h * (div + ndiv);
        v = nv;
        div = ndiv;
        record(k + 1, &y, &cp, log_rho, &mut run, &mut next_out);
    }
    run.reanchors = cur.reanchors;
    Ok(run)
}

/// Solves `dY = Ã₀(t, Y)dt` from every point by RK4 on the path's grid, with
/// `(φ, K)` interpolated linearly in time inside each step, and accumulates
/// `log ρ_t = ∫ div Ã₀(s, Y_s) ds` by the trapezoid rule.
pub fn lagrangian_flow(
    points: &PointSet,
    chart: &DiffusionChart,
    drift: &dyn VectorField,
    opts: &FlowOptions,
) -> Result<FlowField> {
    let d = chart.dim();
    if points.dim != d || drift.dim() != d {
        return Err(RoughFlowError::InvalidArgument("dimension mismatch".into()));
    }
    let n = chart.steps();
    let outs = output_steps(n, opts.stride);
    let runs: Vec<PointRun> = (0..points.len())
        .into_par_iter()
        .map(|p| run_point(points.point(p), chart, drift, &outs, opts, n))
        .collect::<Result<_>>()?;
    let mut field = FlowField {
        dim: d,
        points: points.clone(),
        h: chart.h(),
        times: outs.iter().map(|&k| k as f64 * chart.h()).collect(),
        output_steps: outs,
        y: Vec::with_capacity(points.len() * d),
        log_rho: vec![],
        x: vec![],
        reanchors: 0,
    };
    for r in runs {
        field.y.extend(r.y);
        field.x.extend(r.x);
        field.log_rho.extend(r.log_rho);
        field.reanchors += r.reanchors;
    }
    Ok(field)
}

/// `(Y_t(x), log ρ_t(x))` for one point after `step` steps.
pub fn integrate_point(
    x: &[f64],
    chart: &DiffusionChart,
    drift: &dyn VectorField,
    step: usize,
) -> Result<(Vec<f64>, f64)> {
    let opts = FlowOptions::default();
    let r = run_point(x, chart, drift, &[step], &opts, step)?;
    Ok((r.y, r.log_rho[0]))
}

/// `ρ̃_t(z) = exp(−∫₀ᵗ div Ã₀(s, Y_s(Y_t^{-1} z)) ds)` at output index `o`.
///
/// `Y_t^{-1}(z)` is found by Newton iteration seeded from the grid point with
/// the nearest image, with a central-difference Jacobian of `x ↦ Y_t(x)`.
pub fn forward_density(
    flow: &FlowField,
    chart: &DiffusionChart,
    drift: &dyn VectorField,
    o: usize,
    z: &[f64],
) -> Result<f64> {
    let d = flow.dim;
    let step = flow.output_steps[o];
    let (p0, _) = (0..flow.points.len())
        .map(|p| (p, dist(flow.y_at(p, o), z)))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let mut x = flow.points.point(p0).to_vec();
    let eps = 1e-6;
    let mut residual = f64::INFINITY;
    for _ in 0..50 {
        let (y, lr) = integrate_point(&x, chart, drift, step)?;
        residual = dist(&y, z);
        if residual <= 1e-10 {
            return Ok((-lr).exp());
        }
        let mut jac = [0.0; D * D];
        for b in 0..d {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[b] += eps;
            xm[b] -= eps;
            let (yp, _) = integrate_point(&xp, chart, drift, step)?;
            let (ym, _) = integrate_point(&xm, chart, drift, step)?;
            for a in 0..d {
                jac[a * d + b] = (yp[a] - ym[a]) / (2.0 * eps);
            }
        }
        let mut inv = [0.0; D * D];
        invert(d, &jac[..d * d], &mut inv);
        for a in 0..d {
            x[a] -= (0..d).map(|b| inv[a * d + b] * (y[b] - z[b])).sum::<f64>();
        }
    }
    Err(RoughFlowError::NoConvergence { residual })
}

/// `X_t(x) = φ_t(Y_t(x))` with `φ_t` re-integrated from `Y_t(x)` on the same
/// increments. The returned field stores `X_t` in `y` and `x`, and
/// `log|det ∇X_t| = log ρ_t + log det J_t(Y_t)` in `log_rho`.
pub fn compose(chart: &DiffusionChart, flow: &FlowField) -> Result<FlowField> {
    let d = flow.dim;
    let path = chart.path();
    let dif = chart.diffusion();
    let outs = flow.outputs();
    let per_point: Vec<(Vec<f64>, Vec<f64>)> = (0..flow.points.len())
        .into_par_iter()
        .map(|p| {
            let mut xs = Vec::with_capacity(outs * d);
            let mut lr = Vec::with_capacity(outs);
            for o in 0..outs {
                let step = flow.output_steps[o];
                let y = flow.y_at(p, o);
                let s = diffusion_state(y, path, dif, step, false)?;
                xs.extend_from_slice(&s.x[..d]);
                let det = determinant(d, &s.j[..d * d]);
                lr.push(flow.log_rho_at(p, o) + det.ln());
            }
            Ok((xs, lr))
        })
        .collect::<Result<_>>()?;
    let mut out = flow.clone();
    out.y.clear();
    out.log_rho.clear();
    for (xs, lr) in per_point {
        out.y.extend(xs);
        out.log_rho.extend(lr);
    }
    out.x = out.y.clone();
    Ok(out)
}
