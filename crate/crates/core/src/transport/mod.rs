//! The representation `θ(t,x) = θ₀(X_t^{-1}(x))` of the stochastic transport
//! equation, checked through its weak forms, together with the random
//! transport equation for `u_t = θ_t(φ_t)` and the continuity equation of
//! the diffusion flow's density.

mod experiment;
mod grid;
mod weak;

pub use experiment::{transport_experiment, TransportConfig, TransportReport, TransportRun};
pub use grid::QuadGrid;
pub use weak::{
    density_evolution_check, inverse_points, ito_weak_residual, random_transport_check, representation_solution,
    DensityEvolutionResidual, RandomTransportResidual, WeakResidual,
};

use serde::{Deserialize, Serialize};

use crate::linalg::MAX_DIM;

/// `a·(1 − |x−c|²/r²)³` inside `B(c, r)`, zero outside. C² with closed-form
/// derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunction {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
}

impl TestFunction {
    pub fn new(center: Vec<f64>, radius: f64, amplitude: f64) -> Self {
        Self { center, radius, amplitude }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `1 − |x−c|²/r²`, negative outside the support.
    fn slack(&self, x: &[f64]) -> f64 {
        let r2: f64 = self.center.iter().zip(x).map(|(c, v)| (v - c).powi(2)).sum();
        1.0 - r2 / (self.radius * self.radius)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let s = self.slack(x);
        if s <= 0.0 {
            0.0
        } else {
            self.amplitude * s * s * s
        }
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let s = self.slack(x);
        let r2 = self.radius * self.radius;
        for a in 0..d {
            out[a] = if s <= 0.0 { 0.0 } else { -6.0 * self.amplitude * s * s * (x[a] - self.center[a]) / r2 };
        }
    }

    /// Row-major `d × d`.
    pub fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let s = self.slack(x);
        let r2 = self.radius * self.radius;
        for a in 0..d {
            for b in 0..d {
                out[a * d + b] = if s <= 0.0 {
                    0.0
                } else {
                    let (ya, yb) = (x[a] - self.center[a], x[b] - self.center[b]);
                    let diag = if a == b { s * s / r2 } else { 0.0 };
                    self.amplitude * (24.0 * s * ya * yb / (r2 * r2) - 6.0 * diag)
                };
            }
        }
    }
}

/// Initial data for the transport equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialProfile {
    Constant { value: f64 },
    /// Smooth compactly supported bump.
    Bump { center: Vec<f64>, radius: f64, amplitude: f64 },
    /// `1 + |x|²`, polynomial growth.
    Quadratic,
    /// Indicator of `B(c, r)`, merely measurable.
    Indicator { center: Vec<f64>, radius: f64 },
}

impl InitialProfile {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            InitialProfile::Constant { value } => *value,
            InitialProfile::Bump { center, radius, amplitude } => {
                TestFunction::new(center.clone(), *radius, *amplitude).value(x)
            }
            InitialProfile::Quadratic => 1.0 + x.iter().map(|v| v * v).sum::<f64>(),
            InitialProfile::Indicator { center, radius } => {
                let r2: f64 = center.iter().zip(x).map(|(c, v)| (v - c).powi(2)).sum();
                if r2 < radius * radius {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

const D: usize = MAX_DIM;

#[cfg(test)]
mod tests;
