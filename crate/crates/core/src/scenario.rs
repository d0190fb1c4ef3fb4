//! Named scenarios. All are planar with at most one noise component, so the
//! noise is commutative and the Heun scheme has strong order one.

use std::sync::Arc;

use serde::Serialize;

use crate::brownian::BrownianPath;
use crate::error::{Result, RoughFlowError};
use crate::fields::{
    mollify_drift, ClosedForm, DriftClass, Growth, MollifierSpec, RoughDrift, Separable, SmoothVectorField,
    VectorField,
};
use crate::sde::Diffusion;

pub const CATALOG: [&str; 6] = ["zero", "additive-linear", "ode-only", "smooth-nonlinear", "rotation-bv", "sobolev-log"];

/// Linear drift matrix of `additive-linear`: `−I` plus a rotation of rate 1/2.
pub const ADDITIVE_LINEAR_B: [f64; 4] = [-1.0, 0.5, -0.5, -1.0];
pub const ADDITIVE_LINEAR_SIGMA: f64 = 0.5;
pub const ROTATION_SIGMA: f64 = 0.5;
pub const SOBOLEV_SIGMA: f64 = 0.3;

/// `exp(tB)` for [`ADDITIVE_LINEAR_B`]: a damped rotation.
fn additive_linear_expm(t: f64) -> [f64; 4] {
    let (c, s) = ((0.5 * t).cos(), (0.5 * t).sin());
    let e = (-t).exp();
    [e * c, e * s, -e * s, e * c]
}

/// `X_T = e^{TB}x + σ∫₀ᵀ e^{(T−s)B}e₁ dw_s` for `additive-linear`, with the
/// stochastic integral evaluated on the path's own increments by the midpoint
/// rule in each step. Its pathwise error is `O(h)`, so callers that use it as
/// a reference evaluate it on a bridge refinement of their path.
pub fn additive_linear_solution(x0: &[f64], path: &BrownianPath) -> [f64; 2] {
    let h = path.h();
    let (full, half) = (additive_linear_expm(h), additive_linear_expm(0.5 * h));
    let mut x = [x0[0], x0[1]];
    for k in 0..path.steps() {
        let dw = ADDITIVE_LINEAR_SIGMA * path.step(k)[0];
        x = [
            full[0] * x[0] + full[1] * x[1] + half[0] * dw,
            full[2] * x[0] + full[3] * x[1] + half[2] * dw,
        ];
    }
    x
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub diffusion_fields: Vec<SmoothVectorField>,
    pub drift: RoughDrift,
    /// Every field (diffusion and drift) has zero divergence.
    pub divergence_free: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub dim: usize,
    pub m: usize,
    pub drift_class: DriftClass,
    pub growth: Growth,
    pub divergence_free: bool,
}

fn additive(sigma: f64) -> SmoothVectorField {
    SmoothVectorField::constant(vec![sigma, 0.0])
}

pub fn scenario(name: &str) -> Result<Scenario> {
    let s = match name {
        "zero" => Scenario {
            name: name.into(),
            dim: 2,
            diffusion_fields: vec![SmoothVectorField::zero(2)],
            drift: RoughDrift::zero(2),
            divergence_free: true,
        },
        "additive-linear" => Scenario {
            name: name.into(),
            dim: 2,
            diffusion_fields: vec![additive(ADDITIVE_LINEAR_SIGMA)],
            drift: RoughDrift::smooth(
                "linear",
                ClosedForm::Separable(Separable::linear(2, ADDITIVE_LINEAR_B.to_vec())),
                // local constant on B(4): ‖B‖(1 + 4)
                Growth { c: 1.25f64.sqrt() * 5.0, eps0: 0.5 },
            ),
            divergence_free: false,
        },
        "ode-only" => Scenario {
            name: name.into(),
            dim: 2,
            diffusion_fields: vec![],
            drift: RoughDrift::smooth(
                "contraction",
                ClosedForm::Separable(Separable::linear(2, vec![-1.0, 0.0, 0.0, -1.0])),
                Growth { c: 5.0, eps0: 0.5 },
            ),
            divergence_free: false,
        },
        "smooth-nonlinear" => Scenario {
            name: name.into(),
            dim: 2,
            diffusion_fields: vec![SmoothVectorField::separable(
                "tanh-saturated",
                Separable::zero(2).with_offset(vec![0.3, 0.3]).with_tanh(vec![0.4, 0.2, 0.0, 0.3]),
            )],
            drift: RoughDrift::smooth(
                "trig-damped",
                ClosedForm::Separable(
                    Separable::zero(2).with_sin(vec![0.0, 1.0, -1.0, 0.0]).with_tanh(vec![-0.5, 0.0, 0.0, -0.5]),
                ),
                Growth { c: 1.5 * 2f64.sqrt(), eps0: 0.5 },
            ),
            divergence_free: false,
        },
        "rotation-bv" => Scenario {
            name: name.into(),
            dim: 2,
            diffusion_fields: vec![additive(ROTATION_SIGMA)],
            drift: RoughDrift::sign_rotation(1.0),
            divergence_free: true,
        },
        "sobolev-log" => Scenario {
            name: name.into(),
            dim: 2,
            diffusion_fields: vec![additive(SOBOLEV_SIGMA)],
            drift: RoughDrift::swirl(1.0, 0.5),
            divergence_free: true,
        },
        other => return Err(RoughFlowError::UnknownScenario(other.into())),
    };
    Ok(s)
}

impl Scenario {
    pub fn m(&self) -> usize {
        self.diffusion_fields.len()
    }

    pub fn diffusion(&self) -> Diffusion {
        let fields: Vec<Arc<dyn VectorField>> = self
            .diffusion_fields
            .iter()
            .map(|f| Arc::new(f.clone()) as Arc<dyn VectorField>)
            .collect();
        Diffusion::new(self.dim, fields).expect("catalog dimensions agree")
    }

    pub fn is_smooth(&self) -> bool {
        self.drift.class == DriftClass::Smooth
    }

    /// The drift used by solvers: the drift itself when smooth, otherwise its
    /// mollification at `level`. A smooth drift ignores `level`.
    pub fn drift_field(&self, level: Option<u32>, spec: &MollifierSpec) -> Result<Arc<dyn VectorField>> {
        if self.is_smooth() {
            return Ok(Arc::new(self.drift.clone()));
        }
        let n = level.ok_or_else(|| {
            RoughFlowError::InvalidArgument(format!("scenario `{}` needs a mollification level", self.name))
        })?;
        Ok(Arc::new(mollify_drift(&self.drift, n, spec)?))
    }

    pub fn summary(&self) -> ScenarioSummary {
        ScenarioSummary {
            name: self.name.clone(),
            dim: self.dim,
            m: self.m(),
            drift_class: self.drift.class,
            growth: self.drift.growth,
            divergence_free: self.divergence_free,
        }
    }
}
