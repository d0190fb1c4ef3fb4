//! Weak residuals of the transport and density equations for the solution
//! represented through the inverse flow, at a base and a refined resolution.

use roughflow::transport::{transport_experiment, TransportConfig};

fn main() -> roughflow::Result<()> {
    let cfg = TransportConfig { scenario: "ode-only".into(), paths: 2, ..Default::default() };
    let report = transport_experiment(&cfg)?;
    let b = &report.base;
    println!("itô {:.2e}, stratonovich {:.2e}, random transport {:.2e}, density {:.2e}",
        b.ito_mean, b.stratonovich_mean, b.random_transport_mean, b.density_mean);
    if let (Some(ito), Some(rt)) = (report.ito_ratio, report.random_transport_ratio) {
        println!("refined / base: itô {ito:.2}, random transport {rt:.2}");
    }
    println!("constant profile residual: {:e}", report.constant_residual);
    Ok(())
}
