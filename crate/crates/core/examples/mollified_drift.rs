//! Mollify the discontinuous rotation drift at increasing levels and watch
//! the value next to a jump converge to the one-sided limit.

use roughflow::fields::{mollified_divergence_bound, mollify_drift, MollifierSpec, VectorField};
use roughflow::scenario::scenario;

fn main() -> roughflow::Result<()> {
    let s = scenario("rotation-bv")?;
    let spec = MollifierSpec::default();
    let x = [0.3, 0.05];
    for n in [2, 8, 32, 128] {
        let field = mollify_drift(&s.drift, n, &spec)?;
        let mut v = [0.0; 2];
        let mut jac = [0.0; 4];
        field.value(&x, &mut v);
        field.jacobian(&x, &mut jac);
        println!("level {n:>3}: A0({x:?}) = ({:+.4}, {:+.4}), div = {:+.2e}", v[0], v[1], jac[0] + jac[3]);
    }
    println!("uniform bound on the mollified divergence: {:.3}", mollified_divergence_bound(&s.drift, &spec)?);
    Ok(())
}
