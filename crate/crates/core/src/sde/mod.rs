//! Stratonovich Heun stepping for the diffusion-only flow and the full SDE.
//!
//! The Jacobian (and, on request, the second derivative tensor) advances by
//! the same predictor-corrector as the state, so the stored derivatives are
//! the exact derivatives of the discrete one-step map.

mod chart;
mod invert;
mod trajectory;

use std::sync::Arc;

use crate::brownian::BrownianPath;
use crate::error::{Result, RoughFlowError};
use crate::fields::VectorField;
use crate::linalg::{determinant, MAX_DIM};

pub use chart::{ChartCursor, ChartKind, ChartPoint, DiffusionChart};
pub use invert::{invert_point, PhiSnapshot};
pub use trajectory::FlowTrajectory;

const D: usize = MAX_DIM;
const D2: usize = MAX_DIM * MAX_DIM;
const D3: usize = MAX_DIM * MAX_DIM * MAX_DIM;

/// Diffusion coefficients `A_1..A_m` on `R^d`.
#[derive(Debug, Clone)]
pub struct Diffusion {
    dim: usize,
    fields: Vec<Arc<dyn VectorField>>,
}

impl Diffusion {
    pub fn new(dim: usize, fields: Vec<Arc<dyn VectorField>>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(RoughFlowError::InvalidArgument(format!("dimension {dim} not in 1..={MAX_DIM}")));
        }
        if let Some(f) = fields.iter().find(|f| f.dim() != dim) {
            return Err(RoughFlowError::InvalidArgument(format!("field {f:?} has dim {} != {dim}", f.dim())));
        }
        Ok(Self { dim, fields })
    }

    /// No noise (`m = 0`).
    pub fn none(dim: usize) -> Self {
        Self { dim, fields: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[Arc<dyn VectorField>] {
        &self.fields
    }

    /// The constant vectors when every `A_i` is constant in space.
    pub fn constant_columns(&self) -> Option<Vec<[f64; D]>> {
        if !self.fields.iter().all(|f| f.is_constant()) {
            return None;
        }
        let zero = [0.0; D];
        Some(
            self.fields
                .iter()
                .map(|f| {
                    let mut c = [0.0; D];
                    f.value(&zero[..self.dim], &mut c);
                    c
                })
                .collect(),
        )
    }

    pub fn has_hessians(&self) -> bool {
        self.fields.iter().all(|f| f.has_hessian() || f.is_constant())
    }
}

/// Point of a flow together with its first and (optionally) second
/// derivatives with respect to the initial point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    pub x: [f64; D],
    pub j: [f64; D2],
    /// `hess[a·d² + b·d + c] = ∂_b∂_c x_a`.
    pub hess: [f64; D3],
}

impl FlowState {
    pub fn at(dim: usize, x: &[f64]) -> Self {
        let mut s = FlowState { x: [0.0; D], j: [0.0; D2], hess: [0.0; D3] };
        s.x[..dim].copy_from_slice(&x[..dim]);
        for i in 0..dim {
            s.j[i * dim + i] = 1.0;
        }
        s
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Order {
    Value,
    First,
    Second,
}

/// Increment field `v = Σ A_i Δw_i + A₀ h` and its first two derivatives.
struct Increment {
    v: [f64; D],
    g: [f64; D2],
    hs: [f64; D3],
}

fn increment(
    x: &[f64],
    diffusion: &Diffusion,
    dw: &[f64],
    drift: Option<&dyn VectorField>,
    h: f64,
    order: Order,
) -> Result<Increment> {
    let d = diffusion.dim;
    let mut inc = Increment { v: [0.0; D], g: [0.0; D2], hs: [0.0; D3] };
    let mut a = [0.0; D];
    let mut ja = [0.0; D2];
    let mut ha = [0.0; D3];
    let mut add = |f: &dyn VectorField, c: f64, inc: &mut Increment| -> Result<()> {
        if c == 0.0 {
            return Ok(());
        }
        f.value(&x[..d], &mut a);
        for i in 0..d {
            inc.v[i] += c * a[i];
        }
        if order != Order::Value && !f.is_constant() {
            f.jacobian(&x[..d], &mut ja);
            for k in 0..d * d {
                inc.g[k] += c * ja[k];
            }
            if order == Order::Second {
                f.hessian(&x[..d], &mut ha)?;
                for k in 0..d * d * d {
                    inc.hs[k] += c * ha[k];
                }
            }
        }
        Ok(())
    };
    for (f, &c) in diffusion.fields.iter().zip(dw) {
        add(f.as_ref(), c, &mut inc)?;
    }
    if let Some(f) = drift {
        add(f, h, &mut inc)?;
    }
    Ok(inc)
}

/// `out = J + G·J`
fn jac_update(d: usize, j: &[f64], g: &[f64], out: &mut [f64]) {
    for a in 0..d {
        for b in 0..d {
            let mut s = j[a * d + b];
            for e in 0..d {
                s += g[a * d + e] * j[e * d + b];
            }
            out[a * d + b] = s;
        }
    }
}

/// `out += Hs[J, J] + G·H`: second derivative of `x ↦ v(φ(x))`.
fn hess_term(d: usize, j: &[f64], hess: &[f64], g: &[f64], hs: &[f64], out: &mut [f64]) {
    let d2 = d * d;
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                let mut s = 0.0;
                for e in 0..d {
                    let je_b = j[e * d + b];
                    for f in 0..d {
                        s += hs[a * d2 + e * d + f] * je_b * j[f * d + c];
                    }
                    s += g[a * d + e] * hess[e * d2 + b * d + c];
                }
                out[a * d2 + b * d + c] += s;
            }
        }
    }
}

fn check_finite(d: usize, s: &FlowState, step: usize) -> Result<()> {
    if s.x[..d].iter().chain(&s.j[..d * d]).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(RoughFlowError::NonFiniteState { step })
    }
}

fn heun_generic(
    state: &mut FlowState,
    diffusion: &Diffusion,
    dw: &[f64],
    drift: Option<&dyn VectorField>,
    h: f64,
    order: Order,
) -> Result<()> {
    let d = diffusion.dim;
    let i0 = increment(&state.x, diffusion, dw, drift, h, order)?;
    let mut pred = *state;
    for i in 0..d {
        pred.x[i] = state.x[i] + i0.v[i];
    }
    if order != Order::Value {
        jac_update(d, &state.j, &i0.g, &mut pred.j);
    }
    if order == Order::Second {
        hess_term(d, &state.j, &state.hess, &i0.g, &i0.hs, &mut pred.hess);
    }
    let i1 = increment(&pred.x, diffusion, dw, drift, h, order)?;
    let mut next = *state;
    for i in 0..d {
        next.x[i] = state.x[i] + 0.5 * (i0.v[i] + i1.v[i]);
    }
    if order != Order::Value {
        let d2 = d * d;
        let mut gj0 = [0.0; D2];
        let mut gj1 = [0.0; D2];
        jac_update(d, &state.j, &i0.g, &mut gj0);
        jac_update(d, &pred.j, &i1.g, &mut gj1);
        for k in 0..d2 {
            // (J + G0 J) − J and (J̄ + G1 J̄) − J̄
            let t0 = gj0[k] - state.j[k];
            let t1 = gj1[k] - pred.j[k];
            next.j[k] = state.j[k] + 0.5 * (t0 + t1);
        }
    }
    if order == Order::Second {
        let d3 = d * d * d;
        let mut t0 = [0.0; D3];
        let mut t1 = [0.0; D3];
        hess_term(d, &state.j, &state.hess, &i0.g, &i0.hs, &mut t0);
        hess_term(d, &pred.j, &pred.hess, &i1.g, &i1.hs, &mut t1);
        for k in 0..d3 {
            next.hess[k] = state.hess[k] + 0.5 * (t0[k] + t1[k]);
        }
    }
    *state = next;
    Ok(())
}

/// One Heun step of `dX = Σ A_i(X)∘dw^i + A₀(X)dt` for the state and, when
/// given, its Jacobian.
pub fn heun_step(
    x: &mut [f64],
    j: Option<&mut [f64]>,
    diffusion: &Diffusion,
    dw: &[f64],
    drift: Option<&dyn VectorField>,
    h: f64,
) -> Result<()> {
    let d = diffusion.dim;
    let mut s = FlowState::at(d, x);
    let order = if j.is_some() { Order::First } else { Order::Value };
    if let Some(j) = &j {
        s.j[..d * d].copy_from_slice(&j[..d * d]);
    }
    heun_generic(&mut s, diffusion, dw, drift, h, order)?;
    check_finite(d, &s, 0)?;
    x[..d].copy_from_slice(&s.x[..d]);
    if let Some(j) = j {
        j[..d * d].copy_from_slice(&s.j[..d * d]);
    }
    Ok(())
}

/// Same as [`heun_step`] on a [`FlowState`], also advancing the second
/// derivative tensor when `second` is set.
pub fn heun_state_step(
    state: &mut FlowState,
    diffusion: &Diffusion,
    dw: &[f64],
    drift: Option<&dyn VectorField>,
    h: f64,
    second: bool,
) -> Result<()> {
    let order = if second { Order::Second } else { Order::First };
    heun_generic(state, diffusion, dw, drift, h, order)
}

/// State-only Heun step (no derivatives).
pub fn heun_value_step(
    x: &mut [f64; D],
    diffusion: &Diffusion,
    dw: &[f64],
    drift: Option<&dyn VectorField>,
    h: f64,
) -> Result<()> {
    let d = diffusion.dim;
    let i0 = increment(x, diffusion, dw, drift, h, Order::Value)?;
    let mut p = *x;
    for i in 0..d {
        p[i] += i0.v[i];
    }
    let i1 = increment(&p, diffusion, dw, drift, h, Order::Value)?;
    for i in 0..d {
        x[i] += 0.5 * (i0.v[i] + i1.v[i]);
    }
    Ok(())
}

fn check_path(diffusion: &Diffusion, path: &BrownianPath) -> Result<()> {
    if path.m() != diffusion.m() {
        return Err(RoughFlowError::InvalidArgument(format!(
            "path has {} components, diffusion has {} fields",
            path.m(),
            diffusion.m()
        )));
    }
    Ok(())
}

/// Diffusion flow state after `steps` steps from `x`.
pub fn diffusion_state(
    x: &[f64],
    path: &BrownianPath,
    diffusion: &Diffusion,
    steps: usize,
    second: bool,
) -> Result<FlowState> {
    check_path(diffusion, path)?;
    let mut s = FlowState::at(diffusion.dim, x);
    for k in 0..steps {
        heun_state_step(&mut s, diffusion, path.step(k), None, path.h(), second)?;
        check_finite(diffusion.dim, &s, k + 1)?;
    }
    Ok(s)
}

/// State-only flow of the full SDE after `steps` steps.
pub fn flow_point(
    x: &[f64],
    path: &BrownianPath,
    diffusion: &Diffusion,
    drift: Option<&dyn VectorField>,
    steps: usize,
) -> Result<[f64; D]> {
    check_path(diffusion, path)?;
    let d = diffusion.dim;
    let mut s = [0.0; D];
    s[..d].copy_from_slice(&x[..d]);
    for k in 0..steps {
        heun_value_step(&mut s, diffusion, path.step(k), drift, path.h())?;
        if !s[..d].iter().all(|v| v.is_finite()) {
            return Err(RoughFlowError::NonFiniteState { step: k + 1 });
        }
    }
    Ok(s)
}

fn integrate(
    x: &[f64],
    path: &BrownianPath,
    diffusion: &Diffusion,
    drift: Option<&dyn VectorField>,
    stride: usize,
) -> Result<FlowTrajectory> {
    check_path(diffusion, path)?;
    let d = diffusion.dim;
    let n = path.steps();
    let stride = stride.max(1);
    let mut traj = FlowTrajectory::new(d);
    let mut s = FlowState::at(d, x);
    traj.push(0.0, &s)?;
    for k in 0..n {
        heun_state_step(&mut s, diffusion, path.step(k), drift, path.h(), false)?;
        check_finite(d, &s, k + 1)?;
        let det = determinant(d, &s.j[..d * d]);
        if det.abs() < 1e-12 {
            return Err(RoughFlowError::SingularJacobian { step: k + 1, det });
        }
        if (k + 1) % stride == 0 || k + 1 == n {
            traj.push((k + 1) as f64 * path.h(), &s)?;
        }
    }
    Ok(traj)
}

/// Trajectory of the diffusion-only flow `φ_t(x)` with `J_t`, `K_t`, `det J_t`,
/// stored every `stride` steps (and at the final time).
pub fn diffusion_flow(x: &[f64], path: &BrownianPath, diffusion: &Diffusion, stride: usize) -> Result<FlowTrajectory> {
    integrate(x, path, diffusion, None, stride)
}

/// Trajectory of the full SDE with a smooth drift.
pub fn direct_flow(
    x: &[f64],
    path: &BrownianPath,
    diffusion: &Diffusion,
    drift: &dyn VectorField,
    stride: usize,
) -> Result<FlowTrajectory> {
    integrate(x, path, diffusion, Some(drift), stride)
}

#[cfg(test)]
mod tests;
