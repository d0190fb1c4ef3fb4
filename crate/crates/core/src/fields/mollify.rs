use serde::{Deserialize, Serialize};

use super::{DriftClass, RoughDrift, SmoothVectorField, VectorField};
use crate::error::{Result, RoughFlowError};
use crate::linalg::{unit_sphere_area, MAX_DIM};

/// Mollification kernel on the unit ball (unnormalized profile).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(−1/(1−|z|²))` for `|z| < 1`, zero outside.
    #[default]
    Bump,
}

impl Kernel {
    pub fn profile(&self, z: &[f64]) -> f64 {
        let s: f64 = z.iter().map(|v| v * v).sum();
        if s >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - s)).exp()
        }
    }

    /// Gradient of [`Kernel::profile`].
    pub fn profile_gradient(&self, z: &[f64], out: &mut [f64]) {
        let s: f64 = z.iter().map(|v| v * v).sum();
        if s >= 1.0 {
            out[..z.len()].iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let e = (-1.0 / (1.0 - s)).exp();
        let f = -2.0 * e / ((1.0 - s) * (1.0 - s));
        for (o, zi) in out.iter_mut().zip(z) {
            *o = f * zi;
        }
    }

    /// `∫_{B(1)} profile` in dimension `d`, by composite Simpson in the radius.
    pub fn normalization(&self, d: usize) -> f64 {
        let n = 4000;
        let h = 1.0 / n as f64;
        let g = |r: f64| {
            if r >= 1.0 {
                0.0
            } else {
                r.powi(d as i32 - 1) * (-1.0 / (1.0 - r * r)).exp()
            }
        };
        let mut s = g(0.0) + g(1.0);
        for k in 1..n {
            s += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        unit_sphere_area(d) * s * h / 3.0
    }

    /// Normalized kernel `χ(z) = profile(z) / normalization`.
    pub fn value(&self, z: &[f64]) -> f64 {
        self.profile(z) / self.normalization(z.len())
    }
}

/// Radial cutoff with `φ = 1` on `B(1)` and `φ = 0` off `B(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    /// `f(2−s) / (f(2−s) + f(s−1))` on `1 < s < 2` with `f(t) = e^{−1/t}`.
    #[default]
    SmoothStep,
}

impl Cutoff {
    fn f(t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (-1.0 / t).exp()
        }
    }

    fn df(t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (-1.0 / t).exp() / (t * t)
        }
    }

    /// Radial profile as a function of `s = |x|`.
    pub fn profile(&self, s: f64) -> f64 {
        if s <= 1.0 {
            1.0
        } else if s >= 2.0 {
            0.0
        } else {
            let (a, b) = (Self::f(2.0 - s), Self::f(s - 1.0));
            a / (a + b)
        }
    }

    /// `d/ds` of the radial profile.
    pub fn profile_derivative(&self, s: f64) -> f64 {
        if s <= 1.0 || s >= 2.0 {
            return 0.0;
        }
        let (a, b) = (Self::f(2.0 - s), Self::f(s - 1.0));
        let (da, db) = (-Self::df(2.0 - s), Self::df(s - 1.0));
        (da * b - a * db) / ((a + b) * (a + b))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.profile(x.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let s = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let g = self.profile_derivative(s);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = if g == 0.0 { 0.0 } else { g * xi / s };
        }
    }

    /// `‖∇φ‖_∞`, attained at `|x| = 3/2` where the profile slope is `−f'(½)/(2f(½)) = −2`.
    pub fn gradient_sup(&self) -> f64 {
        2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifierSpec {
    pub kernel: Kernel,
    pub cutoff: Cutoff,
    pub quadrature_points_per_axis: usize,
    /// Kernel support radius at level `n` is `support_radius / n`; must be ≤ 1.
    pub support_radius: f64,
}

impl Default for MollifierSpec {
    fn default() -> Self {
        Self {
            kernel: Kernel::Bump,
            cutoff: Cutoff::SmoothStep,
            quadrature_points_per_axis: 17,
            support_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    offset: [f64; MAX_DIM],
    weight: f64,
    grad: [f64; MAX_DIM],
}

/// `A₀ⁿ = φ_n·(A₀ * χ_n)` with `φ_n(x) = φ(x/n)` and `χ_n` of radius
/// `support_radius/n`, evaluated by tensor midpoint quadrature.
///
/// The discrete weights sum to one, so constants are reproduced exactly.
#[derive(Debug, Clone)]
pub struct MollifiedDrift {
    base: RoughDrift,
    level: u32,
    spec: MollifierSpec,
    radius: f64,
    nodes: Vec<Node>,
}

impl MollifiedDrift {
    pub fn new(base: RoughDrift, level: u32, spec: MollifierSpec) -> Result<Self> {
        if level == 0 {
            return Err(RoughFlowError::ZeroMollificationLevel);
        }
        if !(spec.support_radius > 0.0 && spec.support_radius <= 1.0) {
            return Err(RoughFlowError::KernelSupportTooWide(spec.support_radius));
        }
        if spec.quadrature_points_per_axis == 0 {
            return Err(RoughFlowError::InvalidArgument(
                "quadrature_points_per_axis must be positive".into(),
            ));
        }
        let d = base.dim;
        let q = spec.quadrature_points_per_axis;
        let radius = spec.support_radius / level as f64;
        let du = 2.0 / q as f64;
        let mut raw = Vec::new();
        let mut idx = vec![0usize; d];
        'outer: loop {
            let mut u = [0.0; MAX_DIM];
            for a in 0..d {
                // symmetric about zero so that node pairs cancel exactly
                u[a] = (idx[a] as f64 - (q as f64 - 1.0) / 2.0) * du;
            }
            let p = spec.kernel.profile(&u[..d]);
            if p > 0.0 {
                let mut g = [0.0; MAX_DIM];
                spec.kernel.profile_gradient(&u[..d], &mut g);
                raw.push((u, p, g));
            }
            for a in 0..d {
                idx[a] += 1;
                if idx[a] < q {
                    continue 'outer;
                }
                idx[a] = 0;
            }
            break;
        }
        let total: f64 = raw.iter().map(|r| r.1).sum();
        let nodes = raw
            .into_iter()
            .map(|(u, p, g)| {
                let mut offset = [0.0; MAX_DIM];
                let mut grad = [0.0; MAX_DIM];
                for a in 0..d {
                    offset[a] = u[a] * radius;
                    grad[a] = g[a] / (radius * total);
                }
                Node { offset, weight: p / total, grad }
            })
            .collect();
        Ok(Self { base, level, spec, radius, nodes })
    }

    pub fn base(&self) -> &RoughDrift {
        &self.base
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn spec(&self) -> &MollifierSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// `(A₀ * χ_n)(x)` and its Jacobian, without the cutoff.
    ///
    /// For Sobolev (and smooth) drifts the distributional derivative is the
    /// a.e. Jacobian, so the Jacobian is `(∇A₀) * χ_n`; this keeps
    /// divergence-free drifts discretely divergence-free. BV drifts carry jump
    /// parts and use `A₀ * ∇χ_n` instead.
    pub fn convolution_with_jacobian(&self, x: &[f64], val: &mut [f64], jac: &mut [f64]) {
        let d = self.dim();
        val[..d].iter_mut().for_each(|v| *v = 0.0);
        jac[..d * d].iter_mut().for_each(|v| *v = 0.0);
        let mut y = [0.0; MAX_DIM];
        let mut a = [0.0; MAX_DIM];
        if self.base.class != DriftClass::BVloc {
            let mut ja = [0.0; MAX_DIM * MAX_DIM];
            for node in &self.nodes {
                for i in 0..d {
                    y[i] = x[i] - node.offset[i];
                }
                self.base.value(&y[..d], &mut a);
                self.base.jacobian(&y[..d], &mut ja);
                for i in 0..d {
                    val[i] += node.weight * a[i];
                }
                for k in 0..d * d {
                    jac[k] += node.weight * ja[k];
                }
            }
            return;
        }
        for node in &self.nodes {
            for i in 0..d {
                y[i] = x[i] - node.offset[i];
            }
            self.base.value(&y[..d], &mut a);
            for i in 0..d {
                val[i] += node.weight * a[i];
                for j in 0..d {
                    // ∂_j ∫ A(y) χ(x−y) dy = Σ A(x−z) ∂_jχ(z)
                    jac[i * d + j] += a[i] * node.grad[j];
                }
            }
        }
    }

    pub fn convolution(&self, x: &[f64], val: &mut [f64]) {
        let mut jac = [0.0; MAX_DIM * MAX_DIM];
        self.convolution_with_jacobian(x, val, &mut jac);
    }

    fn scaled(&self, x: &[f64]) -> [f64; MAX_DIM] {
        let mut s = [0.0; MAX_DIM];
        for (si, xi) in s.iter_mut().zip(x) {
            *si = xi / self.level as f64;
        }
        s
    }

    pub fn value_and_jacobian(&self, x: &[f64], val: &mut [f64], jac: &mut [f64]) {
        let d = self.dim();
        let s = self.scaled(x);
        let phi = self.spec.cutoff.value(&s[..d]);
        if phi == 0.0 {
            val[..d].iter_mut().for_each(|v| *v = 0.0);
            jac[..d * d].iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        self.convolution_with_jacobian(x, val, jac);
        let mut dphi = [0.0; MAX_DIM];
        self.spec.cutoff.gradient(&s[..d], &mut dphi);
        for i in 0..d {
            for j in 0..d {
                jac[i * d + j] = phi * jac[i * d + j] + val[i] * dphi[j] / self.level as f64;
            }
        }
        for v in val[..d].iter_mut() {
            *v *= phi;
        }
    }

    pub fn value(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let s = self.scaled(x);
        let phi = self.spec.cutoff.value(&s[..d]);
        if phi == 0.0 {
            out[..d].iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        out[..d].iter_mut().for_each(|v| *v = 0.0);
        let mut y = [0.0; MAX_DIM];
        let mut a = [0.0; MAX_DIM];
        for node in &self.nodes {
            for i in 0..d {
                y[i] = x[i] - node.offset[i];
            }
            self.base.value(&y[..d], &mut a);
            for i in 0..d {
                out[i] += node.weight * a[i];
            }
        }
        for v in out[..d].iter_mut() {
            *v *= phi;
        }
    }

    pub fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let mut val = [0.0; MAX_DIM];
        self.value_and_jacobian(x, &mut val, out);
    }
}

pub fn mollify_drift(drift: &RoughDrift, n: u32, spec: &MollifierSpec) -> Result<SmoothVectorField> {
    Ok(SmoothVectorField::from_mollified(MollifiedDrift::new(drift.clone(), n, *spec)?))
}

/// `3C‖∇φ‖_∞ + ‖div A₀‖_∞`, uniform in the mollification level.
pub fn mollified_divergence_bound(drift: &RoughDrift, spec: &MollifierSpec) -> Result<f64> {
    let div = drift.divergence_sup.ok_or(RoughFlowError::UnboundedDivergence)?;
    Ok(3.0 * drift.growth.c * spec.cutoff.gradient_sup() + div)
}
