use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use super::{Check, Command, Config, Produced};
use crate::decomposition::{identity_suite, simulate};
use crate::error::{Result, RoughFlowError};
use crate::flow_analysis::{inverse_experiment, stability_experiment};
use crate::maximal::{approx_diff_check, calibrate, lipschitz_set, FROZEN_CONSTANTS};
use crate::transport::transport_experiment;

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| RoughFlowError::Io(e.to_string()))
}

fn csv(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub(super) fn execute(command: Command, cfg: &Config) -> Result<Produced> {
    match command {
        Command::Simulate => run_simulate(cfg),
        Command::Stability => run_stability(cfg),
        Command::Invert => run_invert(cfg),
        Command::Transport => run_transport(cfg),
        Command::Lipschitz => run_lipschitz(cfg),
        Command::Identities => run_identities(cfg),
        Command::Calibrate => run_calibrate(cfg),
    }
}

fn run_simulate(cfg: &Config) -> Result<Produced> {
    let sim = simulate(&cfg.simulate)?;
    let rep = &sim.report;
    let mut checks = vec![Check::new("finite", rep.finite), Check::new("oracle_gap_within_tolerance", rep.within_tolerance)];
    if rep.scenario == "zero" {
        checks.push(Check::new("identity_flow", rep.paths.iter().all(|p| p.displacement == 0.0)));
    }
    let mut files = vec![(
        "simulate_gaps.csv".to_string(),
        csv(|w| {
            writeln!(w, "path_seed,direct_gap,closed_form_gap,displacement")?;
            for p in &rep.paths {
                let closed = p.closed_form_gap.map_or(String::new(), |g| format!("{g:e}"));
                writeln!(w, "{},{:e},{},{:e}", p.seed, p.direct_gap, closed, p.displacement)?;
            }
            Ok(())
        })?,
    )];
    for (p, flow) in rep.paths.iter().zip(&sim.flows) {
        files.push((format!("simulate_path{}.csv", p.seed), csv(|w| flow.write_csv(w))?));
    }
    Ok(Produced { report: to_value(rep)?, checks, files })
}

fn run_stability(cfg: &Config) -> Result<Produced> {
    let rep = stability_experiment(&cfg.stability)?;
    let mut checks = vec![Check::new("monotone_D1", rep.monotone), Check::new("halved_D1", rep.halved)];
    for (p, ok) in &rep.monotone_p {
        checks.push(Check::new(format!("monotone_D{p}"), *ok));
    }
    for (p, ok) in &rep.halved_p {
        checks.push(Check::new(format!("halved_D{p}"), *ok));
    }
    let files = vec![("stability.csv".to_string(), csv(|w| rep.write_csv(w))?)];
    Ok(Produced { report: to_value(&rep)?, checks, files })
}

fn run_invert(cfg: &Config) -> Result<Produced> {
    let rep = inverse_experiment(&cfg.invert)?;
    let mut checks = vec![Check::new("roundtrip_decreasing", rep.decreasing), Check::new("roundtrip_median", rep.median_ok)];
    if let Some(ok) = rep.sigma_ok {
        checks.push(Check::new("sigma_is_one", ok));
    }
    let files = vec![("invert_roundtrip.csv".to_string(), csv(|w| rep.write_csv(w))?)];
    Ok(Produced { report: to_value(&rep)?, checks, files })
}

fn run_transport(cfg: &Config) -> Result<Produced> {
    let c = &cfg.transport;
    let rep = transport_experiment(c)?;
    let tol = c.tolerance;
    let mut checks = vec![
        Check::new("constant_residual_zero", rep.constant_residual == 0.0),
        Check::new("ito_residual", rep.base.ito_mean <= tol),
        Check::new("stratonovich_residual", rep.base.stratonovich_mean <= tol),
        Check::new("random_transport_residual", rep.base.random_transport_mean <= tol),
        Check::new("density_residual", rep.base.density_mean <= tol),
    ];
    if let Some(halving) = rep.halving {
        checks.push(Check::new("halving_under_refinement", halving));
    }
    let files = vec![("transport_residuals.csv".to_string(), csv(|w| rep.write_csv(w, c))?)];
    Ok(Produced { report: to_value(&rep)?, checks, files })
}

fn run_lipschitz(cfg: &Config) -> Result<Produced> {
    let set = lipschitz_set(&cfg.lipschitz)?;
    let diff = approx_diff_check(&set, set.flow.last())?;
    let r = &set.report;
    let checks = vec![
        Check::new("excluded_measure", r.measure_ok),
        Check::new("lipschitz_bound", r.lipschitz_ok),
        Check::new("tight_lipschitz_bound", r.tight_ok),
        Check::new("q_bound", r.q_bound_violations == 0),
        Check::new("composed_lipschitz_bound", diff.product_ok),
        Check::new("quotient_stabilization", diff.stabilization_ok),
    ];
    let files = vec![
        ("lipschitz_mask.csv".to_string(), csv(|w| set.mask.write_csv(w))?),
        ("lipschitz_mask.rfgr".to_string(), csv(|w| set.mask.write_raster(w))?),
        ("lipschitz_sup_q.csv".to_string(), csv(|w| set.sup_q.write_csv(w))?),
        ("lipschitz_phi.csv".to_string(), csv(|w| set.phi.write_csv(w))?),
    ];
    let report = serde_json::json!({ "lipschitz_set": to_value(r)?, "approximate_differentiability": to_value(&diff)? });
    Ok(Produced { report, checks, files })
}

fn run_identities(cfg: &Config) -> Result<Produced> {
    let rep = identity_suite(&cfg.identities)?;
    let rows = [
        ("chain_rule", rep.chain_rule.max_residual),
        ("det_gradient", rep.det_identity.gradient_residual),
        ("jacobi", rep.det_identity.jacobi_residual),
        ("liouville", rep.liouville_residual),
        ("explicit_density", rep.density_residual),
    ];
    let checks = rows.iter().map(|(name, r)| Check::new(*name, *r <= rep.tolerance)).collect();
    let files = vec![(
        "identities.csv".to_string(),
        csv(|w| {
            writeln!(w, "identity,residual,tolerance")?;
            for (name, r) in rows {
                writeln!(w, "{name},{r:e},{:e}", rep.tolerance)?;
            }
            Ok(())
        })?,
    )];
    Ok(Produced { report: to_value(&rep)?, checks, files })
}

fn run_calibrate(cfg: &Config) -> Result<Produced> {
    let rep = calibrate(&cfg.calibrate)?;
    let frozen_bounds = rep.catalogs.iter().all(|c| c.max_weak_type <= FROZEN_CONSTANTS.weak_type)
        && rep.pointwise_max <= FROZEN_CONSTANTS.pointwise;
    let checks = vec![
        Check::new("catalog_stability", (0.67..=1.5).contains(&rep.stability_ratio)),
        Check::new("single_constant", rep.single_constant_suffices),
        Check::new("frozen_constants_bound_maxima", frozen_bounds),
    ];
    let files = vec![
        (
            "calibration_catalogs.csv".to_string(),
            csv(|w| {
                writeln!(w, "catalog_seed,function,weak_type,log_integral")?;
                for c in &rep.catalogs {
                    for (i, (wt, li)) in c.weak_type.iter().zip(&c.log_integral).enumerate() {
                        writeln!(w, "{},{i},{wt:e},{li:e}", c.seed)?;
                    }
                }
                Ok(())
            })?,
        ),
        (
            "calibration_pointwise.csv".to_string(),
            csv(|w| {
                writeln!(w, "function,max_ratio")?;
                for (name, r) in &rep.pointwise_by_function {
                    writeln!(w, "{name},{r:e}")?;
                }
                Ok(())
            })?,
        ),
    ];
    Ok(Produced { report: to_value(&rep)?, checks, files })
}
