//! Pathwise growth constants of the diffusion flow, its Jacobians and the
//! transformed drift.

use roughflow::flow_analysis::{growth_diagnostics, GrowthConfig};

fn main() -> roughflow::Result<()> {
    let cfg = GrowthConfig { paths: 8, samples: 16, ..Default::default() };
    let g = growth_diagnostics(&cfg)?;
    for (name, stats) in [("flow", &g.f_hat), ("jacobians", &g.g_hat), ("transformed drift", &g.phi_hat)] {
        println!("{name:<18} median {:.3}, q90 {:.3}, max {:.3}", stats.median, stats.q90, stats.max);
    }
    println!("all finite: {}", g.finite);
    Ok(())
}
