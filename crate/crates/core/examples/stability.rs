//! Stability of the flow under drift mollification: the L¹ distance between
//! flows at consecutive mollification levels and a fine reference. A small
//! ensemble keeps the run short; the defaults use 32 paths.

use roughflow::flow_analysis::{stability_experiment, StabilityConfig};

fn main() -> roughflow::Result<()> {
    let cfg = StabilityConfig { levels: vec![4, 8, 16], reference: 32, paths: 2, grid: 8, h: 1.0 / 64.0, ..Default::default() };
    let report = stability_experiment(&cfg)?;
    for (n, (d, se)) in report.levels.iter().zip(report.d1.iter().zip(&report.d1_stderr)) {
        println!("level {n:>2}: D1 = {d:.3e} ± {se:.1e}");
    }
    println!("monotone: {}, halved: {}", report.monotone, report.halved);
    Ok(())
}
