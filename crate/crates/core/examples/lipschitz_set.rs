//! Carve out the set where the flow is Lipschitz with the frozen constants
//! and check approximate differentiability on it.

use roughflow::maximal::{approx_diff_check, lipschitz_set, LipschitzConfig};

fn main() -> roughflow::Result<()> {
    let cfg = LipschitzConfig { grid: 65, gradient_grid: 97, h: 1.0 / 64.0, times: 4, ..Default::default() };
    let set = lipschitz_set(&cfg)?;
    let r = &set.report;
    println!("excluded measure {:.3e} (ε = {:.3e}), within bound: {}", r.excluded_measure, r.eps, r.measure_ok);
    println!("empirical Lipschitz {:.3}, log bound {:.3}, within: {}", r.empirical_lipschitz, r.log_lipschitz_bound, r.lipschitz_ok);
    let diff = approx_diff_check(&set, set.flow.last())?;
    println!("difference quotients stabilized at {:.1}% of kept points", 100.0 * diff.fraction);
    Ok(())
}
