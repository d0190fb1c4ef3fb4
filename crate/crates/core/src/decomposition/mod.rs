//! Decomposition `X_t = φ_t(Y_t)`: the transformed drift
//! `Ã₀(t,x) = K_t(x)·A₀(φ_t(x))`, calculus identities behind its divergence,
//! and the random ODE `dY = Ã₀(t,Y)dt` with its densities.

mod flow;
mod identities;
mod simulate;
mod suite;

use crate::error::Result;
use crate::fields::VectorField;
use crate::linalg::MAX_DIM;
use crate::sde::{ChartPoint, DiffusionChart};

pub use flow::{
    compose, forward_density, integrate_point, lagrangian_flow, FlowField, FlowOptions, PointSet,
};
pub use identities::{
    check_bv_chain_rule, check_det_gradient_identity, ChainRuleReport, ChartSnapshot, DetIdentityReport,
    Diffeomorphism, LinearMap, SineShear,
};
pub use simulate::{simulate, PathSimulation, Simulation, SimulationConfig, SimulationReport};
pub use suite::{identity_suite, IdentityConfig, IdentityReport};

/// `(K·A₀(φ), ⟨div K, A₀(φ)⟩ + div A₀(φ))` at a chart point.
pub fn transformed_at(cp: &ChartPoint, drift: &dyn VectorField, d: usize, with_div: bool) -> ([f64; MAX_DIM], f64) {
    let mut a = [0.0; MAX_DIM];
    drift.value(&cp.phi[..d], &mut a);
    let mut v = [0.0; MAX_DIM];
    for i in 0..d {
        v[i] = (0..d).map(|j| cp.k[i * d + j] * a[j]).sum();
    }
    let div = if with_div {
        (0..d).map(|i| cp.div_k[i] * a[i]).sum::<f64>() + drift.divergence(&cp.phi[..d])
    } else {
        0.0
    };
    (v, div)
}

/// `Ã₀(t_k, x)` with `φ_t`, `K_t` integrated from `x` itself.
pub fn transformed_drift(chart: &DiffusionChart, drift: &dyn VectorField, step: usize, x: &[f64]) -> Result<Vec<f64>> {
    let d = chart.dim();
    let cp = chart.exact(step, x)?;
    Ok(transformed_at(&cp, drift, d, false).0[..d].to_vec())
}

/// `div Ã₀(t_k, x) = ⟨div K_t(x), A₀(φ_t(x))⟩ + div(A₀)(φ_t(x))`.
pub fn transformed_divergence(chart: &DiffusionChart, drift: &dyn VectorField, step: usize, x: &[f64]) -> Result<f64> {
    let d = chart.dim();
    let cp = chart.exact(step, x)?;
    Ok(transformed_at(&cp, drift, d, true).1)
}
