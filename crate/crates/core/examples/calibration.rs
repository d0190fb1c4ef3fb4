//! Calibrate the maximal-function constants on two independent random
//! catalogs and compare them with the frozen values.

use roughflow::maximal::{calibrate, CalibrationConfig, FROZEN_CONSTANTS};

fn main() -> roughflow::Result<()> {
    let cfg = CalibrationConfig { grid: 65, catalog_size: 6, pairs: 2000, ..Default::default() };
    let report = calibrate(&cfg)?;
    for c in &report.catalogs {
        println!("catalog {}: weak type {:.3}, log integral {:.3}", c.seed, c.max_weak_type, c.max_log_integral);
    }
    println!("catalog ratio {:.3}, one constant suffices: {}", report.stability_ratio, report.single_constant_suffices);
    println!("calibrated {:?}", report.constants);
    println!("frozen     {:?}", FROZEN_CONSTANTS);
    Ok(())
}
