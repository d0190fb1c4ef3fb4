use std::sync::Arc;

use super::{heun_state_step, Diffusion, FlowState, D, D2};
use crate::brownian::BrownianPath;
use crate::error::{Result, RoughFlowError};
use crate::linalg::invert;

/// How the diffusion flow is evaluated at arbitrary points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChartKind {
    /// `m = 0`: `φ_t = id`.
    Identity,
    /// Constant coefficients: `φ_t(x) = x + Σ c_i w_t^i`, exact.
    Translation,
    /// Per-trajectory anchors: the flow, its Jacobian and second derivatives
    /// are integrated exactly at an anchor point and extended by a second
    /// order Taylor expansion within `radius`; the anchor is re-placed (and
    /// re-integrated from time 0) whenever a query leaves that ball.
    Anchored { radius: f64 },
}

/// `φ_t` with `J_t`, `K_t = J_t^{-1}`, `det J_t` and `div K_t` at a point.
/// `div(K)_i = Σ_j ∂_j K_{ji}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub phi: [f64; D],
    pub j: [f64; D2],
    pub k: [f64; D2],
    pub det: f64,
    pub div_k: [f64; D],
}

impl ChartPoint {
    fn identity(d: usize, y: &[f64]) -> Self {
        let mut p = ChartPoint { phi: [0.0; D], j: [0.0; D2], k: [0.0; D2], det: 1.0, div_k: [0.0; D] };
        p.phi[..d].copy_from_slice(&y[..d]);
        for i in 0..d {
            p.j[i * d + i] = 1.0;
            p.k[i * d + i] = 1.0;
        }
        p
    }
}

/// Diffusion flow of one Brownian path, evaluable at any point and grid time.
#[derive(Debug, Clone)]
pub struct DiffusionChart {
    diffusion: Diffusion,
    path: Arc<BrownianPath>,
    kind: ChartKind,
    columns: Vec<[f64; D]>,
    w: Vec<f64>,
}

impl DiffusionChart {
    pub const DEFAULT_ANCHOR_RADIUS: f64 = 5e-3;

    pub fn new(diffusion: Diffusion, path: Arc<BrownianPath>) -> Result<Self> {
        if path.m() != diffusion.m() {
            return Err(RoughFlowError::InvalidArgument(format!(
                "path has {} components, diffusion has {} fields",
                path.m(),
                diffusion.m()
            )));
        }
        let (kind, columns) = if diffusion.m() == 0 {
            (ChartKind::Identity, vec![])
        } else if let Some(cols) = diffusion.constant_columns() {
            (ChartKind::Translation, cols)
        } else {
            if !diffusion.has_hessians() {
                return Err(RoughFlowError::MissingHessian("diffusion coefficients".into()));
            }
            (ChartKind::Anchored { radius: Self::DEFAULT_ANCHOR_RADIUS }, vec![])
        };
        let w = if kind == ChartKind::Translation { path.cumulative() } else { vec![] };
        Ok(Self { diffusion, path, kind, columns, w })
    }

    pub fn with_anchor_radius(mut self, radius: f64) -> Self {
        if let ChartKind::Anchored { .. } = self.kind {
            self.kind = ChartKind::Anchored { radius };
        }
        self
    }

    pub fn kind(&self) -> ChartKind {
        self.kind
    }

    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    pub fn path(&self) -> &Arc<BrownianPath> {
        &self.path
    }

    pub fn dim(&self) -> usize {
        self.diffusion.dim()
    }

    pub fn steps(&self) -> usize {
        self.path.steps()
    }

    pub fn h(&self) -> f64 {
        self.path.h()
    }

    pub fn cursor(&self) -> ChartCursor<'_> {
        ChartCursor {
            chart: self,
            anchor: [0.0; D],
            base: 0,
            states: [FlowState::at(self.dim(), &[0.0; D]); 2],
            valid: false,
            reanchors: 0,
        }
    }

    fn translation(&self, step: usize, y: &[f64]) -> ChartPoint {
        let d = self.dim();
        let m = self.diffusion.m();
        let mut p = ChartPoint::identity(d, y);
        for (i, c) in self.columns.iter().enumerate() {
            let wi = self.w[step * m + i];
            for a in 0..d {
                p.phi[a] += c[a] * wi;
            }
        }
        p
    }
}

/// Evaluation state for one trajectory. Queries must move forward in time by
/// at most one step per window; arbitrary jumps trigger a re-anchor.
#[derive(Debug, Clone)]
pub struct ChartCursor<'a> {
    chart: &'a DiffusionChart,
    anchor: [f64; D],
    base: usize,
    states: [FlowState; 2],
    valid: bool,
    pub reanchors: usize,
}

impl ChartCursor<'_> {
    fn reanchor(&mut self, base: usize, y: &[f64]) -> Result<()> {
        let c = self.chart;
        let d = c.dim();
        let mut s = FlowState::at(d, y);
        for k in 0..base {
            heun_state_step(&mut s, &c.diffusion, c.path.step(k), None, c.path.h(), true)?;
        }
        self.states[0] = s;
        if base < c.steps() {
            heun_state_step(&mut s, &c.diffusion, c.path.step(base), None, c.path.h(), true)?;
        }
        self.states[1] = s;
        self.anchor[..d].copy_from_slice(&y[..d]);
        self.base = base;
        self.valid = true;
        self.reanchors += 1;
        Ok(())
    }

    pub fn eval(&mut self, step: usize, y: &[f64]) -> Result<ChartPoint> {
        let c = self.chart;
        let d = c.dim();
        if step > c.steps() {
            return Err(RoughFlowError::InvalidArgument(format!("step {step} beyond path")));
        }
        match c.kind {
            ChartKind::Identity => Ok(ChartPoint::identity(d, y)),
            ChartKind::Translation => Ok(c.translation(step, y)),
            ChartKind::Anchored { radius } => {
                let base = step.min(c.steps().saturating_sub(1));
                if self.valid && step == self.base + 2 && step <= c.steps() {
                    self.states[0] = self.states[1];
                    heun_state_step(&mut self.states[1], &c.diffusion, c.path.step(self.base + 1), None, c.path.h(), true)?;
                    self.base += 1;
                } else if !self.valid || step < self.base || step > self.base + 1 {
                    self.reanchor(base, y)?;
                }
                let dist2: f64 = (0..d).map(|i| (y[i] - self.anchor[i]).powi(2)).sum();
                if dist2 > radius * radius {
                    self.reanchor(self.base, y)?;
                }
                let s = &self.states[step - self.base];
                taylor(d, s, &self.anchor, y, step)
            }
        }
    }
}

fn taylor(d: usize, s: &FlowState, anchor: &[f64], y: &[f64], step: usize) -> Result<ChartPoint> {
    let d2 = d * d;
    let mut delta = [0.0; D];
    for i in 0..d {
        delta[i] = y[i] - anchor[i];
    }
    let mut p = ChartPoint { phi: [0.0; D], j: [0.0; D2], k: [0.0; D2], det: 0.0, div_k: [0.0; D] };
    for a in 0..d {
        let mut v = s.x[a];
        for b in 0..d {
            let mut jab = s.j[a * d + b];
            for c in 0..d {
                let hv = s.hess[a * d2 + b * d + c];
                jab += hv * delta[c];
                v += 0.5 * hv * delta[b] * delta[c];
            }
            v += s.j[a * d + b] * delta[b];
            p.j[a * d + b] = jab;
        }
        p.phi[a] = v;
    }
    p.det = invert(d, &p.j[..d2], &mut p.k);
    if p.det.abs() < 1e-12 || !p.det.is_finite() {
        return Err(RoughFlowError::SingularJacobian { step, det: p.det });
    }
    // ∂_j K = −K (∂_j J) K with (∂_j J)_{ef} = hess[e,f,j]
    for i in 0..d {
        let mut s_i = 0.0;
        for j in 0..d {
            for e in 0..d {
                let kje = p.k[j * d + e];
                for f in 0..d {
                    s_i -= kje * s.hess[e * d2 + f * d + j] * p.k[f * d + i];
                }
            }
        }
        p.div_k[i] = s_i;
    }
    Ok(p)
}

/// Exact discrete-flow chart point at `x` after `step` steps (re-integrated).
pub(crate) fn exact_point(chart: &DiffusionChart, step: usize, x: &[f64]) -> Result<ChartPoint> {
    match chart.kind {
        ChartKind::Identity => Ok(ChartPoint::identity(chart.dim(), x)),
        ChartKind::Translation => Ok(chart.translation(step, x)),
        ChartKind::Anchored { .. } => {
            let d = chart.dim();
            let mut s = FlowState::at(d, x);
            for k in 0..step {
                heun_state_step(&mut s, &chart.diffusion, chart.path.step(k), None, chart.path.h(), true)?;
            }
            taylor(d, &s, x, x, step)
        }
    }
}

impl DiffusionChart {
    /// `φ_t, J_t, K_t, div K_t` at `x`, integrated from `x` itself.
    pub fn exact(&self, step: usize, x: &[f64]) -> Result<ChartPoint> {
        exact_point(self, step, x)
    }
}
