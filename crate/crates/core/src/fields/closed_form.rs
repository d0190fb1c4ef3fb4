use serde::{Deserialize, Serialize};

use crate::linalg::MAX_DIM;

/// Separable closed form
/// `f_a(x) = c_a + Σ_b (L_ab x_b + S_ab sin x_b + T_ab tanh x_b)`.
///
/// All matrices are row-major `d × d`. Zero, constant, linear, tanh-saturated
/// and trigonometric fields are special cases, and every derivative is
/// available in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separable {
    pub dim: usize,
    pub offset: Vec<f64>,
    pub linear: Vec<f64>,
    pub sin: Vec<f64>,
    pub tanh: Vec<f64>,
}

impl Separable {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            offset: vec![0.0; dim],
            linear: vec![0.0; dim * dim],
            sin: vec![0.0; dim * dim],
            tanh: vec![0.0; dim * dim],
        }
    }

    pub fn constant(offset: Vec<f64>) -> Self {
        let mut s = Self::zero(offset.len());
        s.offset = offset;
        s
    }

    pub fn linear(dim: usize, matrix: Vec<f64>) -> Self {
        assert_eq!(matrix.len(), dim * dim);
        let mut s = Self::zero(dim);
        s.linear = matrix;
        s
    }

    pub fn with_offset(mut self, offset: Vec<f64>) -> Self {
        assert_eq!(offset.len(), self.dim);
        self.offset = offset;
        self
    }

    pub fn with_linear(mut self, m: Vec<f64>) -> Self {
        assert_eq!(m.len(), self.dim * self.dim);
        self.linear = m;
        self
    }

    pub fn with_sin(mut self, m: Vec<f64>) -> Self {
        assert_eq!(m.len(), self.dim * self.dim);
        self.sin = m;
        self
    }

    pub fn with_tanh(mut self, m: Vec<f64>) -> Self {
        assert_eq!(m.len(), self.dim * self.dim);
        self.tanh = m;
        self
    }

    pub fn is_constant(&self) -> bool {
        self.linear.iter().chain(&self.sin).chain(&self.tanh).all(|&v| v == 0.0)
    }

    pub fn is_bounded(&self) -> bool {
        self.linear.iter().all(|&v| v == 0.0)
    }

    pub fn value(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let mut s = [0.0; MAX_DIM];
        let mut t = [0.0; MAX_DIM];
        for b in 0..d {
            s[b] = x[b].sin();
            t[b] = x[b].tanh();
        }
        for a in 0..d {
            let mut v = self.offset[a];
            for b in 0..d {
                let k = a * d + b;
                v += self.linear[k] * x[b] + self.sin[k] * s[b] + self.tanh[k] * t[b];
            }
            out[a] = v;
        }
    }

    pub fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let mut c = [0.0; MAX_DIM];
        let mut sech2 = [0.0; MAX_DIM];
        for b in 0..d {
            c[b] = x[b].cos();
            let th = x[b].tanh();
            sech2[b] = 1.0 - th * th;
        }
        for a in 0..d {
            for b in 0..d {
                let k = a * d + b;
                out[k] = self.linear[k] + self.sin[k] * c[b] + self.tanh[k] * sech2[b];
            }
        }
    }

    pub fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        out[..d * d * d].iter_mut().for_each(|v| *v = 0.0);
        for b in 0..d {
            let sb = x[b].sin();
            let th = x[b].tanh();
            let t2 = -2.0 * th * (1.0 - th * th);
            for a in 0..d {
                let k = a * d + b;
                out[a * d * d + b * d + b] = -self.sin[k] * sb + self.tanh[k] * t2;
            }
        }
    }

    /// Sup-norm bounds of the value and of the first three derivative orders
    /// (entrywise sums of the coefficient magnitudes). `None` for the value
    /// when a linear part makes the field unbounded.
    pub fn bound_consts(&self) -> BoundConsts {
        let d = self.dim;
        let row = |m: &[f64], scale: f64, a: usize| -> f64 {
            (0..d).map(|b| m[a * d + b].abs() * scale).sum::<f64>()
        };
        let mut value = 0.0f64;
        let mut d1 = 0.0f64;
        let mut d2 = 0.0f64;
        let mut d3 = 0.0f64;
        // sup|2 tanh sech²| = 4/(3√3); sup|d/dx(2 tanh sech²)| = 2.
        let t2 = 4.0 / (3.0 * 3f64.sqrt());
        for a in 0..d {
            value = value.max(self.offset[a].abs() + row(&self.sin, 1.0, a) + row(&self.tanh, 1.0, a));
            d1 = d1.max(row(&self.linear, 1.0, a) + row(&self.sin, 1.0, a) + row(&self.tanh, 1.0, a));
            d2 = d2.max(row(&self.sin, 1.0, a) + row(&self.tanh, t2, a));
            d3 = d3.max(row(&self.sin, 1.0, a) + row(&self.tanh, 2.0, a));
        }
        BoundConsts {
            value: if self.is_bounded() { Some(value) } else { None },
            d1,
            d2,
            d3,
        }
    }

    pub fn divergence_sup(&self) -> f64 {
        let d = self.dim;
        (0..d)
            .map(|a| {
                let k = a * d + a;
                self.linear[k].abs() + self.sin[k].abs() + self.tanh[k].abs()
            })
            .sum::<f64>()
    }
}

/// Sup-norm bounds of a field and its derivatives (dimensionless).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConsts {
    pub value: Option<f64>,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// Closed-form vector fields usable as smooth coefficients or as pieces of a
/// rough drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ClosedForm {
    Separable(Separable),
    /// Planar swirl `a·|x|^{p-1}·(−x₂, x₁)`: divergence-free, speed `a|x|^p`.
    /// Smooth off the origin; for `0 < p < 1` its gradient blows up like
    /// `|x|^{p-1}` and the field is only `W^{1,1}_loc`.
    Swirl { amplitude: f64, power: f64 },
}

impl ClosedForm {
    pub fn dim(&self) -> usize {
        match self {
            ClosedForm::Separable(s) => s.dim,
            ClosedForm::Swirl { .. } => 2,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            ClosedForm::Separable(s) => s.is_constant(),
            ClosedForm::Swirl { amplitude, .. } => *amplitude == 0.0,
        }
    }

    pub fn has_hessian(&self) -> bool {
        matches!(self, ClosedForm::Separable(_))
    }

    pub fn value(&self, x: &[f64], out: &mut [f64]) {
        match self {
            ClosedForm::Separable(s) => s.value(x, out),
            ClosedForm::Swirl { amplitude, power } => {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let g = if r > 0.0 { amplitude * r.powf(power - 1.0) } else { 0.0 };
                out[0] = -g * x[1];
                out[1] = g * x[0];
            }
        }
    }

    pub fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        match self {
            ClosedForm::Separable(s) => s.jacobian(x, out),
            ClosedForm::Swirl { amplitude, power } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                if r2 == 0.0 {
                    out[..4].iter_mut().for_each(|v| *v = 0.0);
                    return;
                }
                let r = r2.sqrt();
                let g = amplitude * r.powf(power - 1.0);
                // ∂_j g = a (p−1) r^{p−3} x_j
                let dg = amplitude * (power - 1.0) * r.powf(power - 3.0);
                let (g1, g2) = (dg * x[0], dg * x[1]);
                out[0] = -x[1] * g1;
                out[1] = -x[1] * g2 - g;
                out[2] = g + x[0] * g1;
                out[3] = x[0] * g2;
            }
        }
    }

    /// Writes `∂_b∂_c f_a` at `out[a·d² + b·d + c]`; returns false when the
    /// form carries no Hessian.
    pub fn hessian(&self, x: &[f64], out: &mut [f64]) -> bool {
        match self {
            ClosedForm::Separable(s) => {
                s.hessian(x, out);
                true
            }
            ClosedForm::Swirl { .. } => false,
        }
    }

    /// Global bound on |div f| where one is available in closed form.
    pub fn divergence_sup(&self) -> Option<f64> {
        match self {
            ClosedForm::Separable(s) => Some(s.divergence_sup()),
            ClosedForm::Swirl { .. } => Some(0.0),
        }
    }
}
