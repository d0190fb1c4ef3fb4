//! Local maximal function of a sampled function and its weak-type and
//! logarithmic integral bounds.

use roughflow::maximal::{local_max_function, log_integral_check, weak_type_check, RadiusLadder, ScalarGrid};

fn main() -> roughflow::Result<()> {
    // Indicator of the unit disc on [−3, 3]².
    let f = ScalarGrid::centered(3.0, 241, |x| if x[0] * x[0] + x[1] * x[1] <= 1.0 { 1.0 } else { 0.0 })?;
    let m = local_max_function(&f, 1.0, RadiusLadder::Shells)?;
    for x in [[0.0, 0.0], [1.5, 0.0], [1.9, 0.0]] {
        println!("M f{x:?} = {:.4}", m.interpolate(&x).unwrap_or(f64::NAN));
    }
    let weak = weak_type_check(&f, 1.5, 1.0, &[0.1, 0.3, 0.6], RadiusLadder::Shells)?;
    println!("weak type: measures {:?}, largest implied constant {:.3}", weak.measures, weak.max_implied);
    let log = log_integral_check(&f, 1.5, 1.0, RadiusLadder::Shells)?;
    println!("∫ M f / ∫ |f| log(2 + |f|) = {:.3}", log.ratio);
    Ok(())
}
