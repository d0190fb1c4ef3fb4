//! Density of the pushed-forward Lebesgue measure: constant one for a
//! divergence-free drift, `e^{2t}` for the contraction `A0 = −x`.

use std::sync::Arc;

use roughflow::brownian::sample_path;
use roughflow::decomposition::{compose, lagrangian_flow, FlowOptions, PointSet};
use roughflow::fields::MollifierSpec;
use roughflow::flow_analysis::{pushforward_density_at_images, PushforwardDensity};
use roughflow::scenario::scenario;
use roughflow::sde::DiffusionChart;

fn main() -> roughflow::Result<()> {
    let s = scenario("rotation-bv")?;
    let drift = s.drift_field(Some(16), &MollifierSpec::default())?;
    let chart = DiffusionChart::new(s.diffusion(), Arc::new(sample_path(3, s.m(), 0.5, 1.0 / 128.0)?))?;
    let flow = lagrangian_flow(&PointSet::ball_grid(2, 1.0, 8), &chart, drift.as_ref(), &FlowOptions::default())?;
    let composed = compose(&chart, &flow)?;
    let gap = pushforward_density_at_images(&composed, flow.last()).iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    println!("rotation-bv: max |density − 1| at the images = {gap:.2e}");

    let s = scenario("ode-only")?;
    let drift = s.drift_field(None, &MollifierSpec::default())?;
    let chart = DiffusionChart::new(s.diffusion(), Arc::new(sample_path(0, 0, 0.5, 1.0 / 64.0)?))?;
    let flow = lagrangian_flow(&PointSet::ball_grid(2, 1.0, 8), &chart, drift.as_ref(), &FlowOptions::default())?;
    let density = PushforwardDensity::new(&chart, drift.as_ref(), &flow, flow.last())?;
    for y in [[0.0, 0.0], [0.3, -0.2]] {
        println!("ode-only: density at {y:?} = {:.6} (e = {:.6})", density.at(&y)?, 1f64.exp());
    }
    Ok(())
}
