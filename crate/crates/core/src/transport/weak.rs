use std::sync::Arc;

use serde::Serialize;

use super::{InitialProfile, QuadGrid, TestFunction, D};
use crate::brownian::BrownianPath;
use crate::decomposition::{transformed_at, FlowField, FlowOptions, PointSet};
use crate::error::Result;
use crate::fields::{SmoothVectorField, VectorField};
use crate::flow_analysis::{inverse_flow, sigma_density};
use crate::linalg::{determinant, dot};
use crate::sde::{diffusion_state, Diffusion, DiffusionChart};

/// `X_{t_k}^{-1}` at every point, through the reversed flow on `[0, t_k]`.
pub fn inverse_points(
    diffusion: &Diffusion,
    drift: Arc<dyn VectorField>,
    path: &BrownianPath,
    step: usize,
    points: &PointSet,
) -> Result<Vec<f64>> {
    if step == 0 {
        return Ok(points.points.clone());
    }
    let opts = FlowOptions { stride: step, density: false, ..Default::default() };
    let inv = inverse_flow(diffusion, drift, &path.truncate(step)?, points, &opts)?;
    Ok((0..points.len()).flat_map(|p| inv.y_at(p, inv.last()).to_vec()).collect())
}

/// `θ₀(X_t^{-1}(x))` at the points of an inverse flow field (its last output).
pub fn representation_solution(theta0: &InitialProfile, inverse: &FlowField) -> Vec<f64> {
    (0..inverse.points.len()).map(|p| theta0.value(inverse.y_at(p, inverse.last()))).collect()
}

/// Residuals of the weak Itô form and of the weak Stratonovich form of the
/// stochastic transport equation on one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakResidual {
    pub times: Vec<f64>,
    /// `|LHS − RHS|` of the Itô form (left-point stochastic sums plus the
    /// second-order correction).
    pub ito: Vec<f64>,
    /// `|LHS − RHS|` of the Stratonovich form (trapezoid stochastic sums).
    pub stratonovich: Vec<f64>,
    /// `‖θ₀‖·‖φ‖` in `L²` of the quadrature box.
    pub scale: f64,
    /// Largest gap at `t = 0` between difference-quotient and closed-form
    /// divergences in the pairings, relative to `scale`.
    pub analytic_gap: f64,
    pub dx: f64,
    pub h: f64,
    pub nodes: usize,
}

impl WeakResidual {
    pub fn max_ito(&self) -> f64 {
        self.ito.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_stratonovich(&self) -> f64 {
        self.stratonovich.iter().copied().fold(0.0, f64::max)
    }

    /// Largest Itô residual relative to `‖θ₀‖·‖φ‖`.
    pub fn normalized(&self) -> f64 {
        normalize(self.max_ito(), self.scale)
    }

    /// Itô residual at the final time relative to `‖θ₀‖·‖φ‖`.
    pub fn terminal(&self) -> f64 {
        normalize(last(&self.ito), self.scale)
    }

    pub fn terminal_stratonovich(&self) -> f64 {
        normalize(last(&self.stratonovich), self.scale)
    }
}

fn last(v: &[f64]) -> f64 {
    v.last().copied().unwrap_or(0.0)
}

fn normalize(v: f64, scale: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v / scale
    }
}

fn l2_scale(grid: &QuadGrid, theta0: &[f64], test: &[f64]) -> f64 {
    (grid.pairing(theta0, theta0) * grid.pairing(test, test)).sqrt()
}

/// `div(φA)(x) = ⟨∇φ, A⟩ + φ·div A`.
fn div_product(test: &TestFunction, field: &dyn VectorField, x: &[f64]) -> f64 {
    let d = x.len();
    let (mut g, mut a) = ([0.0; D], [0.0; D]);
    test.gradient(x, &mut g);
    field.value(x, &mut a);
    dot(&g[..d], &a[..d]) + test.value(x) * field.divergence(x)
}

/// `div(div(φA)A)(x)` expanded in closed form: `⟨∇g, A⟩ + g·div A` with
/// `g = div(φA)`.
fn double_divergence(test: &TestFunction, field: &dyn VectorField, x: &[f64]) -> Result<f64> {
    let d = x.len();
    let (mut grad, mut hess, mut a, mut jac, mut h3) = ([0.0; D], [0.0; D * D], [0.0; D], [0.0; D * D], [0.0; D * D * D]);
    test.gradient(x, &mut grad);
    test.hessian(x, &mut hess);
    field.value(x, &mut a);
    field.jacobian(x, &mut jac);
    if !field.is_constant() {
        field.hessian(x, &mut h3)?;
    }
    let phi = test.value(x);
    let div_a: f64 = (0..d).map(|i| jac[i * d + i]).sum();
    let g = dot(&grad[..d], &a[..d]) + phi * div_a;
    let mut grad_g = [0.0; D];
    for b in 0..d {
        let grad_div_a: f64 = (0..d).map(|c| h3[c * d * d + b * d + c]).sum();
        grad_g[b] = (0..d).map(|c| hess[b * d + c] * a[c] + grad[c] * jac[c * d + b]).sum::<f64>()
            + grad[b] * div_a
            + phi * grad_div_a;
    }
    Ok(dot(&grad_g[..d], &a[..d]) + g * div_a)
}

/// Weak Itô form of the stochastic transport equation for
/// `θ(t,x) = θ₀(X_t^{-1}(x))` against one test function, at every grid
/// time. Spatial pairings use the midpoint grid around the test support with
/// difference-quotient divergences; time integrals use the trapezoid rule,
/// stochastic integrals left-point (Itô) or trapezoid (Stratonovich) sums.
pub fn ito_weak_residual(
    diffusion: &Diffusion,
    drift: Arc<dyn VectorField>,
    path: &BrownianPath,
    theta0: &InitialProfile,
    test: &TestFunction,
    cells: usize,
) -> Result<WeakResidual> {
    let grid = QuadGrid::around(test, cells);
    let pts = grid.point_set();
    let d = grid.dim;
    let (n, h, m) = (path.steps(), path.h(), diffusion.m());
    let fields = diffusion.fields();
    let test_vals: Vec<f64> = pts.points.chunks(d).map(|x| test.value(x)).collect();
    let noise_flux: Vec<Vec<f64>> = fields
        .iter()
        .map(|f| {
            grid.sample_flux(|x, out| {
                let mut a = [0.0; D];
                f.value(x, &mut a);
                let phi = test.value(x);
                (0..d).for_each(|i| out[i] = phi * a[i]);
            })
        })
        .collect();
    let correction_flux: Vec<Vec<f64>> = fields
        .iter()
        .map(|f| {
            grid.sample_flux(|x, out| {
                let mut a = [0.0; D];
                f.value(x, &mut a);
                let g = div_product(test, f.as_ref(), x);
                (0..d).for_each(|i| out[i] = g * a[i]);
            })
        })
        .collect();
    let drift_flux = grid.sample_flux(|x, out| {
        let mut a = [0.0; D];
        drift.value(x, &mut a);
        let phi = test.value(x);
        (0..d).for_each(|i| out[i] = phi * a[i]);
    });

    let mut lhs = Vec::with_capacity(n + 1);
    let mut noise = Vec::with_capacity(n + 1);
    let mut corr = Vec::with_capacity(n + 1);
    let mut drift_term = Vec::with_capacity(n + 1);
    let mut theta_initial = Vec::new();
    for k in 0..=n {
        let inv = inverse_points(diffusion, drift.clone(), path, k, &pts)?;
        let theta: Vec<f64> = inv.chunks(d).map(|y| theta0.value(y)).collect();
        lhs.push(grid.pairing(&theta, &test_vals));
        noise.push(noise_flux.iter().map(|g| grid.flux_pairing_with(&theta, g)).collect::<Vec<f64>>());
        corr.push(correction_flux.iter().map(|g| grid.flux_pairing_with(&theta, g)).sum::<f64>());
        drift_term.push(grid.flux_pairing_with(&theta, &drift_flux));
        if k == 0 {
            theta_initial = theta;
        }
    }

    let scale = l2_scale(&grid, &theta_initial, &test_vals);
    let w = theta_initial.as_slice();
    let mut gap: f64 = 0.0;
    for (i, f) in fields.iter().enumerate() {
        let b: Vec<f64> = pts.points.chunks(d).map(|x| div_product(test, f.as_ref(), x)).collect();
        gap = gap.max((grid.pairing(w, &b) - noise[0][i]).abs());
        let e: Vec<f64> = pts.points.chunks(d).map(|x| double_divergence(test, f.as_ref(), x)).collect::<Result<_>>()?;
        gap = gap.max((grid.pairing(w, &e) - grid.flux_pairing_with(w, &correction_flux[i])).abs());
    }
    let c: Vec<f64> = pts.points.chunks(d).map(|x| div_product(test, drift.as_ref(), x)).collect();
    gap = gap.max((grid.pairing(w, &c) - drift_term[0]).abs());

    let (mut ito_rhs, mut strat_rhs) = (lhs[0], lhs[0]);
    let mut ito = vec![0.0];
    let mut stratonovich = vec![0.0];
    for k in 0..n {
        let dw = path.step(k);
        let ds = 0.5 * h * (drift_term[k] + drift_term[k + 1]);
        ito_rhs += ds + 0.25 * h * (corr[k] + corr[k + 1]);
        strat_rhs += ds;
        for i in 0..m {
            ito_rhs += noise[k][i] * dw[i];
            strat_rhs += 0.5 * (noise[k][i] + noise[k + 1][i]) * dw[i];
        }
        ito.push((lhs[k + 1] - ito_rhs).abs());
        stratonovich.push((lhs[k + 1] - strat_rhs).abs());
    }
    Ok(WeakResidual {
        times: (0..=n).map(|k| k as f64 * h).collect(),
        ito,
        stratonovich,
        scale,
        analytic_gap: normalize(gap, scale),
        dx: grid.dx,
        h,
        nodes: grid.len(),
    })
}

/// Residual of the weak random transport equation for `u_t = θ_t(φ_t)`:
/// `(u_t, ψ) = (θ₀, ψ) + ∫₀ᵗ (u_s, div(ψÃ₀(s))) ds`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomTransportResidual {
    pub times: Vec<f64>,
    pub residual: Vec<f64>,
    pub scale: f64,
    /// Gap at `t = 0` between the difference-quotient pairing and the closed
    /// form `⟨∇ψ, Ã₀⟩ + ψ·div Ã₀`, relative to `scale`.
    pub analytic_gap: f64,
    pub dx: f64,
    pub h: f64,
}

impl RandomTransportResidual {
    pub fn max(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn normalized(&self) -> f64 {
        normalize(self.max(), self.scale)
    }

    pub fn terminal(&self) -> f64 {
        normalize(last(&self.residual), self.scale)
    }
}

/// `u_s(x) = θ₀(X_s^{-1}(φ_s(x)))` is paired with `div(ψÃ₀(s))` on the grid;
/// the time integral uses the trapezoid rule.
pub fn random_transport_check(
    diffusion: &Diffusion,
    drift: Arc<dyn VectorField>,
    path: &BrownianPath,
    theta0: &InitialProfile,
    test: &TestFunction,
    cells: usize,
) -> Result<RandomTransportResidual> {
    let grid = QuadGrid::around(test, cells);
    let pts = grid.point_set();
    let d = grid.dim;
    let (n, h) = (path.steps(), path.h());
    let chart = DiffusionChart::new(diffusion.clone(), Arc::new(path.clone()))?;
    let test_vals: Vec<f64> = pts.points.chunks(d).map(|x| test.value(x)).collect();
    let mut lhs = Vec::with_capacity(n + 1);
    let mut pair = Vec::with_capacity(n + 1);
    let mut u_initial = Vec::new();
    let mut gap = 0.0;
    for k in 0..=n {
        let mut images = Vec::with_capacity(pts.points.len());
        for x in pts.points.chunks(d) {
            images.extend_from_slice(&chart.exact(k, x)?.phi[..d]);
        }
        let images = PointSet { dim: d, points: images, weights: pts.weights.clone() };
        let inv = inverse_points(diffusion, drift.clone(), path, k, &images)?;
        let u: Vec<f64> = inv.chunks(d).map(|y| theta0.value(y)).collect();
        let mut failure = None;
        let flux = grid.sample_flux(|x, out| {
            let psi = test.value(x);
            out[..d].iter_mut().for_each(|v| *v = 0.0);
            if psi != 0.0 {
                match chart.exact(k, x) {
                    Ok(cp) => {
                        let v = transformed_at(&cp, drift.as_ref(), d, false).0;
                        (0..d).for_each(|i| out[i] = psi * v[i]);
                    }
                    Err(e) => failure = Some(e),
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        lhs.push(grid.pairing(&u, &test_vals));
        pair.push(grid.flux_pairing_with(&u, &flux));
        if k == 0 {
            let closed: Vec<f64> = pts
                .points
                .chunks(d)
                .map(|x| {
                    let cp = chart.exact(0, x)?;
                    let (v, div) = transformed_at(&cp, drift.as_ref(), d, true);
                    let mut g = [0.0; D];
                    test.gradient(x, &mut g);
                    Ok(dot(&g[..d], &v[..d]) + test.value(x) * div)
                })
                .collect::<Result<_>>()?;
            gap = (grid.pairing(&u, &closed) - pair[0]).abs();
            u_initial = u;
        }
    }
    let scale = l2_scale(&grid, &u_initial, &test_vals);
    let mut rhs = lhs[0];
    let mut residual = vec![0.0];
    for k in 0..n {
        rhs += 0.5 * h * (pair[k] + pair[k + 1]);
        residual.push((lhs[k + 1] - rhs).abs());
    }
    Ok(RandomTransportResidual {
        times: (0..=n).map(|k| k as f64 * h).collect(),
        residual,
        scale,
        analytic_gap: normalize(gap, scale),
        dx: grid.dx,
        h,
    })
}

/// Continuity equation of the diffusion flow's density `ρ̃_t` (density of
/// `(φ_t)_# L_d`) in weak Stratonovich form,
/// `(ρ̃_t, ψ) = (1, ψ) + Σ_i ∫ (ρ̃_s, ⟨A_i, ∇ψ⟩)∘dw^i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEvolutionResidual {
    pub times: Vec<f64>,
    pub residual: Vec<f64>,
    /// Largest relative gap between `|det K_t(φ_t^{-1}x)|` and the inverse of
    /// `exp(Σ ∫ div(A_i)(φ_s)∘dw^i)` at `φ_t^{-1}x`.
    pub cross_check: f64,
    pub scale: f64,
    pub dx: f64,
    pub h: f64,
}

impl DensityEvolutionResidual {
    pub fn max(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn normalized(&self) -> f64 {
        normalize(self.max(), self.scale)
    }

    pub fn terminal(&self) -> f64 {
        normalize(last(&self.residual), self.scale)
    }
}

pub fn density_evolution_check(
    diffusion: &Diffusion,
    path: &BrownianPath,
    test: &TestFunction,
    cells: usize,
) -> Result<DensityEvolutionResidual> {
    let grid = QuadGrid::around(test, cells);
    let pts = grid.point_set();
    let d = grid.dim;
    let (n, h) = (path.steps(), path.h());
    let zero: Arc<dyn VectorField> = Arc::new(SmoothVectorField::zero(d));
    let test_vals: Vec<f64> = pts.points.chunks(d).map(|x| test.value(x)).collect();
    let ones = vec![1.0; pts.len()];
    let transport: Vec<Vec<f64>> = diffusion
        .fields()
        .iter()
        .map(|f| {
            pts.points
                .chunks(d)
                .map(|x| {
                    let (mut a, mut g) = ([0.0; D], [0.0; D]);
                    f.value(x, &mut a);
                    test.gradient(x, &mut g);
                    dot(&a[..d], &g[..d])
                })
                .collect()
        })
        .collect();
    let mut lhs = Vec::with_capacity(n + 1);
    let mut pairs = Vec::with_capacity(n + 1);
    let mut cross: f64 = 0.0;
    for k in 0..=n {
        let pre = inverse_points(diffusion, zero.clone(), path, k, &pts)?;
        let mut rho = Vec::with_capacity(pts.len());
        for x in pre.chunks(d) {
            let (liouville, formula) = if k == 0 {
                (1.0, 1.0)
            } else {
                let s = diffusion_state(x, path, diffusion, k, false)?;
                let det = determinant(d, &s.j[..d * d]);
                let rho_k = sigma_density(x, &path.truncate(k)?, diffusion, zero.as_ref(), f64::INFINITY)?;
                (1.0 / det.abs(), 1.0 / rho_k)
            };
            cross = cross.max((liouville / formula - 1.0).abs());
            rho.push(liouville);
        }
        lhs.push(grid.pairing(&rho, &test_vals));
        pairs.push(transport.iter().map(|t| grid.pairing(&rho, t)).collect::<Vec<f64>>());
    }
    let mut rhs = grid.pairing(&ones, &test_vals);
    let mut residual = vec![(lhs[0] - rhs).abs()];
    for k in 0..n {
        for (i, dw) in path.step(k).iter().enumerate() {
            rhs += 0.5 * (pairs[k][i] + pairs[k + 1][i]) * dw;
        }
        residual.push((lhs[k + 1] - rhs).abs());
    }
    Ok(DensityEvolutionResidual {
        times: (0..=n).map(|k| k as f64 * h).collect(),
        residual,
        cross_check: cross,
        scale: l2_scale(&grid, &ones, &test_vals),
        dx: grid.dx,
        h,
    })
}
