//! Vector fields: smooth diffusion coefficients, rough drifts, mollification
//! and derivative evaluation.
//!
//! Conventions used throughout the crate:
//! - Jacobians are row-major with rows indexed by the field component and
//!   columns by the coordinate, so `∇(b∘φ) = (∇b∘φ)·J_φ`.
//! - Hessians are stored as `out[a·d² + b·d + c] = ∂_b∂_c f_a`.

mod closed_form;
mod growth;
mod mollify;
mod rough;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use closed_form::{BoundConsts, ClosedForm, Separable};
pub use growth::{growth_report, GrowthReport};
pub(crate) use growth::ball_samples;
pub use mollify::{
    mollified_divergence_bound, mollify_drift, Cutoff, Kernel, MollifiedDrift, MollifierSpec,
};
pub use rough::{DriftClass, Growth, Piece, Region, RoughDrift};

use crate::error::{Result, RoughFlowError};
use crate::linalg::MAX_DIM;

/// A vector field on `R^d` with analytic first derivatives.
///
/// Implementations are pure and re-entrant.
pub trait VectorField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64], out: &mut [f64]);

    fn jacobian(&self, x: &[f64], out: &mut [f64]);

    /// Second derivatives, see the module docs for the layout.
    fn hessian(&self, _x: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(RoughFlowError::MissingHessian(format!("{self:?}")))
    }

    fn has_hessian(&self) -> bool {
        false
    }

    fn divergence(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut j = [0.0; MAX_DIM * MAX_DIM];
        self.jacobian(x, &mut j);
        (0..d).map(|i| j[i * d + i]).sum()
    }

    /// True when the field is constant in space (zero Jacobian everywhere).
    fn is_constant(&self) -> bool {
        false
    }
}

/// Regularity metadata of a smooth coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regularity {
    /// Bounded with bounded derivatives up to order three (and beyond).
    Cb3plus,
    /// Smooth, but the value (or a derivative) grows at infinity.
    CInfty,
}

/// JSON descriptor of a field: closed forms are code, parameters are data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub name: String,
    pub dim: usize,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone)]
enum SmoothForm {
    Closed(ClosedForm),
    Mollified(Arc<MollifiedDrift>),
}

/// Smooth vector field with closed-form derivatives.
#[derive(Debug, Clone)]
pub struct SmoothVectorField {
    name: String,
    form: SmoothForm,
    regularity: Regularity,
    bounds: Option<BoundConsts>,
}

impl SmoothVectorField {
    pub fn from_closed(name: impl Into<String>, form: ClosedForm) -> Self {
        let (regularity, bounds) = match &form {
            ClosedForm::Separable(s) => {
                let b = s.bound_consts();
                let reg = if s.is_bounded() { Regularity::Cb3plus } else { Regularity::CInfty };
                (reg, Some(b))
            }
            ClosedForm::Swirl { .. } => (Regularity::CInfty, None),
        };
        Self { name: name.into(), form: SmoothForm::Closed(form), regularity, bounds }
    }

    pub fn separable(name: impl Into<String>, s: Separable) -> Self {
        Self::from_closed(name, ClosedForm::Separable(s))
    }

    pub fn zero(dim: usize) -> Self {
        Self::separable("zero", Separable::zero(dim))
    }

    pub fn constant(c: Vec<f64>) -> Self {
        Self::separable("constant", Separable::constant(c))
    }

    pub fn linear(dim: usize, matrix: Vec<f64>) -> Self {
        Self::separable("linear", Separable::linear(dim, matrix))
    }

    pub(crate) fn from_mollified(m: MollifiedDrift) -> Self {
        Self {
            name: format!("{}@n={}", m.base().name(), m.level()),
            form: SmoothForm::Mollified(Arc::new(m)),
            regularity: Regularity::CInfty,
            bounds: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn bound_consts(&self) -> Option<BoundConsts> {
        self.bounds
    }

    pub fn closed_form(&self) -> Option<&ClosedForm> {
        match &self.form {
            SmoothForm::Closed(c) => Some(c),
            SmoothForm::Mollified(_) => None,
        }
    }

    pub fn mollified(&self) -> Option<&MollifiedDrift> {
        match &self.form {
            SmoothForm::Mollified(m) => Some(m),
            SmoothForm::Closed(_) => None,
        }
    }

    pub fn descriptor(&self) -> FieldDescriptor {
        let params = match &self.form {
            SmoothForm::Closed(c) => serde_json::to_value(c).expect("closed form serializes"),
            SmoothForm::Mollified(m) => serde_json::json!({
                "base": m.base().descriptor(),
                "level": m.level(),
                "radius": m.radius(),
                "quadrature_points_per_axis": m.spec().quadrature_points_per_axis,
            }),
        };
        FieldDescriptor { name: self.name.clone(), dim: self.dim(), params }
    }

    /// Rebuilds a closed-form field from its descriptor.
    pub fn from_descriptor(desc: &FieldDescriptor) -> Result<Self> {
        let form: ClosedForm = serde_json::from_value(desc.params.clone())
            .map_err(|e| RoughFlowError::Config(format!("field `{}`: {e}", desc.name)))?;
        if form.dim() != desc.dim {
            return Err(RoughFlowError::Config(format!(
                "field `{}`: descriptor dim {} != form dim {}",
                desc.name,
                desc.dim,
                form.dim()
            )));
        }
        Ok(Self::from_closed(desc.name.clone(), form))
    }
}

impl VectorField for SmoothVectorField {
    fn dim(&self) -> usize {
        match &self.form {
            SmoothForm::Closed(c) => c.dim(),
            SmoothForm::Mollified(m) => m.dim(),
        }
    }

    fn value(&self, x: &[f64], out: &mut [f64]) {
        match &self.form {
            SmoothForm::Closed(c) => c.value(x, out),
            SmoothForm::Mollified(m) => m.value(x, out),
        }
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        match &self.form {
            SmoothForm::Closed(c) => c.jacobian(x, out),
            SmoothForm::Mollified(m) => m.jacobian(x, out),
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.form {
            SmoothForm::Closed(c) if c.hessian(x, out) => Ok(()),
            _ => Err(RoughFlowError::MissingHessian(self.name.clone())),
        }
    }

    fn has_hessian(&self) -> bool {
        matches!(&self.form, SmoothForm::Closed(c) if c.has_hessian())
    }

    fn is_constant(&self) -> bool {
        matches!(&self.form, SmoothForm::Closed(c) if c.is_constant())
    }
}

/// `scale · F`; used to flip the drift sign for the time-reversed equation.
#[derive(Debug, Clone)]
pub struct Scaled {
    pub inner: Arc<dyn VectorField>,
    pub scale: f64,
}

impl VectorField for Scaled {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64], out: &mut [f64]) {
        self.inner.value(x, out);
        out[..self.dim()].iter_mut().for_each(|v| *v *= self.scale);
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        self.inner.jacobian(x, out);
        let d = self.dim();
        out[..d * d].iter_mut().for_each(|v| *v *= self.scale);
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.inner.hessian(x, out)?;
        let d = self.dim();
        out[..d * d * d].iter_mut().for_each(|v| *v *= self.scale);
        Ok(())
    }

    fn has_hessian(&self) -> bool {
        self.inner.has_hessian()
    }

    fn divergence(&self, x: &[f64]) -> f64 {
        self.scale * self.inner.divergence(x)
    }

    fn is_constant(&self) -> bool {
        self.inner.is_constant()
    }
}

/// Central-difference Jacobian, used by tests and diagnostics as an
/// independent check on analytic derivatives.
pub fn fd_jacobian(field: &dyn VectorField, x: &[f64], step: f64, out: &mut [f64]) {
    let d = field.dim();
    let mut xp = [0.0; MAX_DIM];
    let mut xm = [0.0; MAX_DIM];
    let mut fp = [0.0; MAX_DIM];
    let mut fm = [0.0; MAX_DIM];
    for b in 0..d {
        xp[..d].copy_from_slice(&x[..d]);
        xm[..d].copy_from_slice(&x[..d]);
        xp[b] += step;
        xm[b] -= step;
        field.value(&xp[..d], &mut fp);
        field.value(&xm[..d], &mut fm);
        for a in 0..d {
            out[a * d + b] = (fp[a] - fm[a]) / (2.0 * step);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn catalog() -> Vec<SmoothVectorField> {
        vec![
            SmoothVectorField::zero(2),
            SmoothVectorField::constant(vec![0.5, 0.0]),
            SmoothVectorField::linear(2, vec![-1.0, 0.5, -0.5, -1.0]),
            SmoothVectorField::separable(
                "tanh",
                Separable::zero(2)
                    .with_offset(vec![0.2, -0.1])
                    .with_tanh(vec![0.4, 0.2, 0.0, 0.3]),
            ),
            SmoothVectorField::separable(
                "trig",
                Separable::zero(2)
                    .with_sin(vec![0.0, 1.0, -1.0, 0.0])
                    .with_tanh(vec![-0.5, 0.0, 0.0, -0.5]),
            ),
            SmoothVectorField::separable("tanh1d", Separable::zero(1).with_tanh(vec![0.7])),
        ]
    }

    #[test]
    fn analytic_jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for f in catalog() {
            let d = f.dim();
            for _ in 0..100 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let mut ja = [0.0; 16];
                let mut jf = [0.0; 16];
                f.jacobian(&x, &mut ja);
                fd_jacobian(&f, &x, 1e-5, &mut jf);
                let scale = ja[..d * d].iter().map(|v| v.abs()).fold(1.0, f64::max);
                for k in 0..d * d {
                    assert!(
                        (ja[k] - jf[k]).abs() <= 1e-6 * scale,
                        "{}: {k} analytic {} fd {}",
                        f.name(),
                        ja[k],
                        jf[k]
                    );
                }
            }
        }
    }

    #[test]
    fn divergence_is_trace_of_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for f in catalog() {
            let d = f.dim();
            for _ in 0..50 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let mut j = [0.0; 16];
                f.jacobian(&x, &mut j);
                let tr: f64 = (0..d).map(|i| j[i * d + i]).sum();
                assert!((f.divergence(&x) - tr).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn hessian_matches_jacobian_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for f in catalog() {
            let d = f.dim();
            for _ in 0..30 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let mut hes = [0.0; 64];
                f.hessian(&x, &mut hes).unwrap();
                for c in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[c] += 1e-5;
                    xm[c] -= 1e-5;
                    let (mut jp, mut jm) = ([0.0; 16], [0.0; 16]);
                    f.jacobian(&xp, &mut jp);
                    f.jacobian(&xm, &mut jm);
                    for a in 0..d {
                        for b in 0..d {
                            let fd = (jp[a * d + b] - jm[a * d + b]) / 2e-5;
                            assert!((hes[a * d * d + b * d + c] - fd).abs() < 1e-6);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn cb3_fields_respect_their_bound_consts() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for f in catalog() {
            if f.regularity() != Regularity::Cb3plus {
                continue;
            }
            let b = f.bound_consts().unwrap();
            let d = f.dim();
            for _ in 0..500 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect();
                let mut v = [0.0; 4];
                let mut j = [0.0; 16];
                let mut h = [0.0; 64];
                f.value(&x, &mut v);
                f.jacobian(&x, &mut j);
                f.hessian(&x, &mut h).unwrap();
                for a in 0..d {
                    assert!(v[a].abs() <= b.value.unwrap() + 1e-12);
                    assert!(j[a * d..a * d + d].iter().map(|t| t.abs()).sum::<f64>() <= b.d1 + 1e-12);
                    let h_row: f64 = h[a * d * d..(a + 1) * d * d].iter().map(|t| t.abs()).sum();
                    assert!(h_row <= b.d2 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn descriptor_round_trip() {
        for f in catalog() {
            let desc = f.descriptor();
            let json = serde_json::to_string(&desc).unwrap();
            let back: FieldDescriptor = serde_json::from_str(&json).unwrap();
            let g = SmoothVectorField::from_descriptor(&back).unwrap();
            assert_eq!(g.closed_form(), f.closed_form());
        }
    }

    #[test]
    fn swirl_is_divergence_free() {
        let f = SmoothVectorField::from_closed("swirl", ClosedForm::Swirl { amplitude: 1.0, power: 0.5 });
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..100 {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            assert!(f.divergence(&x).abs() < 1e-12);
            let mut ja = [0.0; 4];
            let mut jf = [0.0; 4];
            f.jacobian(&x, &mut ja);
            fd_jacobian(&f, &x, 1e-6, &mut jf);
            for k in 0..4 {
                assert!((ja[k] - jf[k]).abs() < 1e-5 * (1.0 + ja[k].abs()));
            }
        }
    }
}
