//! Residuals of the chain rule, the determinant identities, Liouville's
//! formula and the explicit density of the random ODE.

use roughflow::decomposition::{identity_suite, IdentityConfig};

fn main() -> roughflow::Result<()> {
    let r = identity_suite(&IdentityConfig::default())?;
    println!("chain rule        {:.2e}", r.chain_rule.max_residual);
    println!("det gradient      {:.2e}", r.det_identity.gradient_residual);
    println!("jacobi            {:.2e}", r.det_identity.jacobi_residual);
    println!("liouville         {:.2e}", r.liouville_residual);
    println!("explicit density  {:.2e}", r.density_residual);
    println!("all within {:e}: {}", r.tolerance, r.passed);
    Ok(())
}
