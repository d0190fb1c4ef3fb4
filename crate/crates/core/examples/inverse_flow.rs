//! Invert the flow by running the reversed, negated path with the drift
//! negated, and watch the round-trip error shrink with the step.

use roughflow::flow_analysis::{inverse_experiment, InverseConfig};

fn main() -> roughflow::Result<()> {
    let cfg = InverseConfig { scenario: "smooth-nonlinear".into(), grid: 5, halvings: 2, h: 1.0 / 256.0, ..Default::default() };
    let report = inverse_experiment(&cfg)?;
    for (h, (median, max)) in report.h.iter().zip(report.medians.iter().zip(&report.maxima)) {
        println!("h = {h:.2e}: median |X⁻¹(X(x)) − x| = {median:.2e}, max = {max:.2e}");
    }
    println!("decreasing under halving: {}", report.decreasing);
    if let Some(dev) = report.sigma_max_deviation {
        println!("max |σ − 1| = {dev:.1e}");
    }
    Ok(())
}
