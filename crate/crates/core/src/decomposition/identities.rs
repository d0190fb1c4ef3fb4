use serde::Serialize;

use crate::error::{Result, RoughFlowError};
use crate::fields::{fd_jacobian, VectorField};
use crate::linalg::{determinant, invert, MAX_DIM};
use crate::sde::DiffusionChart;

const D: usize = MAX_DIM;
const D2: usize = MAX_DIM * MAX_DIM;

/// A C² map with analytic Jacobian.
pub trait Diffeomorphism: Sync {
    fn dim(&self) -> usize;
    fn map(&self, x: &[f64], out: &mut [f64]);
    fn jacobian(&self, x: &[f64], out: &mut [f64]);
}

/// `φ(x) = x + a·sin(x)` componentwise.
#[derive(Debug, Clone, Copy)]
pub struct SineShear {
    pub dim: usize,
    pub amplitude: f64,
}

impl Diffeomorphism for SineShear {
    fn dim(&self) -> usize {
        self.dim
    }
    fn map(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            out[i] = x[i] + self.amplitude * x[i].sin();
        }
    }
    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out[..d * d].iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            out[i * d + i] = 1.0 + self.amplitude * x[i].cos();
        }
    }
}

/// `φ(x) = Mx + c`.
#[derive(Debug, Clone)]
pub struct LinearMap {
    pub dim: usize,
    pub matrix: Vec<f64>,
    pub offset: Vec<f64>,
}

impl LinearMap {
    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        Self { dim, matrix, offset: vec![0.0; dim] }
    }
}

impl Diffeomorphism for LinearMap {
    fn dim(&self) -> usize {
        self.dim
    }
    fn map(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            out[i] = self.offset[i] + (0..d).map(|j| self.matrix[i * d + j] * x[j]).sum::<f64>();
        }
    }
    fn jacobian(&self, _x: &[f64], out: &mut [f64]) {
        out[..self.dim * self.dim].copy_from_slice(&self.matrix);
    }
}

/// The diffusion flow of one path at a fixed step, as a map of the initial
/// point.
pub struct ChartSnapshot<'a> {
    pub chart: &'a DiffusionChart,
    pub step: usize,
}

impl Diffeomorphism for ChartSnapshot<'_> {
    fn dim(&self) -> usize {
        self.chart.dim()
    }
    fn map(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let p = self.chart.exact(self.step, x).expect("chart evaluation");
        out[..d].copy_from_slice(&p.phi[..d]);
    }
    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let p = self.chart.exact(self.step, x).expect("chart evaluation");
        out[..d * d].copy_from_slice(&p.j[..d * d]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainRuleReport {
    /// `max ‖∇(b∘φ) − (∇b∘φ)·J_φ‖_max` with the left side by central differences.
    pub max_residual: f64,
    pub points: usize,
}

struct Composed<'a> {
    b: &'a dyn VectorField,
    phi: &'a dyn Diffeomorphism,
}

impl std::fmt::Debug for Composed<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "b∘φ")
    }
}

impl VectorField for Composed<'_> {
    fn dim(&self) -> usize {
        self.phi.dim()
    }
    fn value(&self, x: &[f64], out: &mut [f64]) {
        let mut y = [0.0; D];
        self.phi.map(x, &mut y);
        self.b.value(&y[..self.dim()], out);
    }
    fn jacobian(&self, _x: &[f64], _out: &mut [f64]) {
        unreachable!("only differenced numerically")
    }
}

pub fn check_bv_chain_rule(
    b: &dyn VectorField,
    phi: &dyn Diffeomorphism,
    points: &[f64],
    fd_step: f64,
) -> ChainRuleReport {
    let d = phi.dim();
    let comp = Composed { b, phi };
    let mut worst: f64 = 0.0;
    let n = points.len() / d;
    for p in 0..n {
        let x = &points[p * d..(p + 1) * d];
        let mut lhs = [0.0; D2];
        fd_jacobian(&comp, x, fd_step, &mut lhs);
        let mut y = [0.0; D];
        phi.map(x, &mut y);
        let (mut jb, mut jp) = ([0.0; D2], [0.0; D2]);
        b.jacobian(&y[..d], &mut jb);
        phi.jacobian(x, &mut jp);
        for a in 0..d {
            for c in 0..d {
                let rhs: f64 = (0..d).map(|e| jb[a * d + e] * jp[e * d + c]).sum();
                worst = worst.max((lhs[a * d + c] - rhs).abs());
            }
        }
    }
    ChainRuleReport { max_residual: worst, points: n }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetIdentityReport {
    /// `max |∇det J + det J·Jᵀ·div K|`.
    pub gradient_residual: f64,
    /// `max |∂_l det J − Σ det J·K_{ji}·∂_l J_{ij}|`.
    pub jacobi_residual: f64,
    pub points: usize,
}

fn det_and_inverse(phi: &dyn Diffeomorphism, x: &[f64]) -> ([f64; D2], [f64; D2], f64) {
    let d = phi.dim();
    let mut j = [0.0; D2];
    let mut k = [0.0; D2];
    phi.jacobian(x, &mut j);
    let det = invert(d, &j[..d * d], &mut k);
    (j, k, det)
}

/// Outer derivatives by central differences of the analytic `J`, `K`, `det J`.
pub fn check_det_gradient_identity(
    phi: &dyn Diffeomorphism,
    points: &[f64],
    fd_step: f64,
) -> Result<DetIdentityReport> {
    let d = phi.dim();
    let n = points.len() / d;
    let (mut g_res, mut j_res) = (0.0f64, 0.0f64);
    for p in 0..n {
        let x = &points[p * d..(p + 1) * d];
        let (j, k, det) = det_and_inverse(phi, x);
        if det.abs() < 1e-12 {
            return Err(RoughFlowError::SingularJacobian { step: p, det });
        }
        let mut grad_det = [0.0; D];
        let mut dj = [[0.0; D2]; D];
        let mut div_k = [0.0; D];
        for l in 0..d {
            let (mut xp, mut xm) = ([0.0; D], [0.0; D]);
            xp[..d].copy_from_slice(x);
            xm[..d].copy_from_slice(x);
            xp[l] += fd_step;
            xm[l] -= fd_step;
            let (jp, kp, _) = det_and_inverse(phi, &xp[..d]);
            let (jm, km, _) = det_and_inverse(phi, &xm[..d]);
            grad_det[l] = (determinant(d, &jp[..d * d]) - determinant(d, &jm[..d * d])) / (2.0 * fd_step);
            for q in 0..d * d {
                dj[l][q] = (jp[q] - jm[q]) / (2.0 * fd_step);
            }
            // div(K)_i += ∂_l K_{l i}
            for i in 0..d {
                div_k[i] += (kp[l * d + i] - km[l * d + i]) / (2.0 * fd_step);
            }
        }
        for l in 0..d {
            let lemma = -det * (0..d).map(|i| j[i * d + l] * div_k[i]).sum::<f64>();
            g_res = g_res.max((grad_det[l] - lemma).abs());
            let mut jac = 0.0;
            for i in 0..d {
                for jj in 0..d {
                    jac += det * k[jj * d + i] * dj[l][i * d + jj];
                }
            }
            j_res = j_res.max((grad_det[l] - jac).abs());
        }
    }
    Ok(DetIdentityReport { gradient_residual: g_res, jacobi_residual: j_res, points: n })
}
