use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::brownian::sample_path;
use crate::decomposition::{FlowOptions, PointSet};
use crate::fields::{Separable, SmoothVectorField, VectorField};
use crate::flow_analysis::inverse_flow;
use crate::sde::Diffusion;

fn arc(f: SmoothVectorField) -> Arc<dyn VectorField> {
    Arc::new(f)
}

fn additive_noise(sigma: f64) -> Diffusion {
    Diffusion::new(2, vec![arc(SmoothVectorField::constant(vec![sigma, 0.0]))]).unwrap()
}

fn contraction() -> Arc<dyn VectorField> {
    arc(SmoothVectorField::linear(2, vec![-1.0, 0.0, 0.0, -1.0]))
}

fn bump() -> InitialProfile {
    InitialProfile::Bump { center: vec![0.2, 0.0], radius: 0.8, amplitude: 1.0 }
}

fn unit_test() -> TestFunction {
    TestFunction::new(vec![0.0, 0.0], 1.0, 1.0)
}

#[test]
fn test_function_gradient_matches_differences() {
    let f = TestFunction::new(vec![0.3, -0.2], 0.9, 1.7);
    let eps = 1e-6;
    for x in [[0.1, 0.1], [0.5, -0.6], [0.3, -0.2], [-0.3, 0.2]] {
        let mut g = [0.0; 2];
        f.gradient(&x, &mut g);
        let norm = g.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3);
        for a in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[a] += eps;
            xm[a] -= eps;
            let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * eps);
            assert!((fd - g[a]).abs() <= 1e-6 * norm, "x={x:?} a={a} fd={fd} g={}", g[a]);
        }
    }
}

#[test]
fn test_function_hessian_matches_gradient_differences() {
    let f = TestFunction::new(vec![0.3, -0.2], 0.9, 1.7);
    let eps = 1e-6;
    let x = [0.55, 0.1];
    let mut hess = [0.0; 4];
    f.hessian(&x, &mut hess);
    for b in 0..2 {
        let (mut xp, mut xm) = (x, x);
        xp[b] += eps;
        xm[b] -= eps;
        let (mut gp, mut gm) = ([0.0; 2], [0.0; 2]);
        f.gradient(&xp, &mut gp);
        f.gradient(&xm, &mut gm);
        for a in 0..2 {
            let fd = (gp[a] - gm[a]) / (2.0 * eps);
            assert!((fd - hess[a * 2 + b]).abs() < 1e-6, "a={a} b={b}");
        }
    }
}

#[test]
fn test_function_vanishes_outside_support() {
    let f = TestFunction::new(vec![1.0, 2.0], 0.5, 3.0);
    for x in [[1.5, 2.0], [1.0, 2.6], [3.0, 3.0]] {
        let (mut g, mut hess) = ([1.0; 2], [1.0; 4]);
        f.gradient(&x, &mut g);
        f.hessian(&x, &mut hess);
        assert_eq!(f.value(&x), 0.0);
        assert!(g.iter().chain(hess.iter()).all(|&v| v == 0.0));
    }
    assert_eq!(f.value(&[1.0, 2.0]), 3.0);
}

#[test]
fn profiles_evaluate_their_definitions() {
    assert_eq!(InitialProfile::Quadratic.value(&[1.0, 2.0]), 6.0);
    let ind = InitialProfile::Indicator { center: vec![0.0, 0.0], radius: 1.0 };
    assert_eq!(ind.value(&[0.5, 0.5]), 1.0);
    assert_eq!(ind.value(&[1.0, 0.5]), 0.0);
    assert_eq!(InitialProfile::Constant { value: 2.5 }.value(&[9.0, 9.0]), 2.5);
}

#[test]
fn flux_pairing_of_constant_theta_integrates_divergence() {
    // (1, div(ψ v)) vanishes for compactly supported ψ; the two shifted sums
    // cancel exactly for constant data.
    let test = unit_test();
    let grid = QuadGrid::around(&test, 21);
    let theta = vec![1.0; grid.len()];
    let g = grid.sample_flux(|x, out| {
        let psi = test.value(x);
        out[0] = psi * (1.0 + x[1]);
        out[1] = psi * x[0].sin();
    });
    assert_eq!(grid.flux_pairing_with(&theta, &g), 0.0);
}

#[test]
fn flux_pairing_matches_analytic_divergence() {
    // θ(x) = x₁ against div(ψ e₁): the exact pairing is −∫ψ = −π/4 for the
    // unit cubic bump.
    let test = unit_test();
    let exact = -std::f64::consts::PI / 4.0;
    let mut errs = vec![];
    for cells in [16, 32, 64] {
        let grid = QuadGrid::around(&test, cells);
        let theta: Vec<f64> = grid.nodes().chunks(2).map(|x| x[0]).collect();
        let v = grid.flux_pairing(&theta, |x, out| {
            out[0] = test.value(x);
            out[1] = 0.0;
        });
        errs.push((v - exact).abs());
    }
    assert!(errs[2] < 1e-3, "{errs:?}");
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
}

#[test]
fn constant_profile_is_preserved() {
    let path = sample_path(3, 1, 0.25, 1.0 / 16.0).unwrap();
    let pts = PointSet::box_grid(2, -1.0, 1.0, 5);
    let opts = FlowOptions { stride: path.steps(), density: false, ..Default::default() };
    let inv = inverse_flow(&additive_noise(0.5), contraction(), &path, &pts, &opts).unwrap();
    let u = representation_solution(&InitialProfile::Constant { value: 1.0 }, &inv);
    assert!(u.iter().all(|&v| v == 1.0));
}

#[test]
fn additive_zero_drift_representation_is_a_translation() {
    let sigma = 0.5;
    let path = sample_path(7, 1, 0.5, 1.0 / 32.0).unwrap();
    let zero = arc(SmoothVectorField::zero(2));
    let pts = PointSet::box_grid(2, -1.0, 1.0, 6);
    let opts = FlowOptions { stride: path.steps(), density: false, ..Default::default() };
    let inv = inverse_flow(&additive_noise(sigma), zero, &path, &pts, &opts).unwrap();
    let u = representation_solution(&bump(), &inv);
    let w: f64 = path.increments().iter().sum();
    for p in 0..pts.len() {
        let x = pts.point(p);
        let expected = bump().value(&[x[0] - sigma * w, x[1]]);
        assert!((u[p] - expected).abs() < 1e-10, "p={p}");
    }
}

#[test]
fn ode_only_representation_matches_exponential_inverse() {
    let t = 0.5;
    let path = sample_path(0, 0, t, 1.0 / 64.0).unwrap();
    let pts = PointSet::box_grid(2, -0.5, 0.5, 6);
    let opts = FlowOptions { stride: path.steps(), density: false, ..Default::default() };
    let inv = inverse_flow(&Diffusion::none(2), contraction(), &path, &pts, &opts).unwrap();
    let u = representation_solution(&InitialProfile::Quadratic, &inv);
    for p in 0..pts.len() {
        let x = pts.point(p);
        let expected = InitialProfile::Quadratic.value(&[x[0] * t.exp(), x[1] * t.exp()]);
        assert!((u[p] - expected).abs() < 1e-8 * expected, "p={p} {} vs {expected}", u[p]);
    }
}

#[test]
fn zero_dynamics_residuals_vanish() {
    let path = sample_path(1, 1, 0.25, 1.0 / 16.0).unwrap();
    let dif = Diffusion::new(2, vec![arc(SmoothVectorField::zero(2))]).unwrap();
    let zero = arc(SmoothVectorField::zero(2));
    let weak = ito_weak_residual(&dif, zero.clone(), &path, &bump(), &unit_test(), 17).unwrap();
    assert_eq!(weak.max_ito(), 0.0);
    assert_eq!(weak.max_stratonovich(), 0.0);
    let random = random_transport_check(&dif, zero, &path, &bump(), &unit_test(), 17).unwrap();
    assert_eq!(random.max(), 0.0);
}

#[test]
fn constant_theta_residuals_vanish_with_dynamics() {
    let path = sample_path(2, 1, 0.25, 1.0 / 16.0).unwrap();
    let one = InitialProfile::Constant { value: 1.0 };
    let weak = ito_weak_residual(&additive_noise(0.5), contraction(), &path, &one, &unit_test(), 17).unwrap();
    assert!(weak.max_ito() < 1e-14 && weak.max_stratonovich() < 1e-14, "{weak:?}");
    let random = random_transport_check(&additive_noise(0.5), contraction(), &path, &one, &unit_test(), 17).unwrap();
    assert!(random.max() < 1e-14);
}

#[test]
fn deterministic_residual_shrinks_under_joint_refinement() {
    let dif = Diffusion::none(2);
    let mut ito = vec![];
    let mut random = vec![];
    for (level, cells) in [(0u32, 17usize), (1, 34)] {
        let h = 1.0 / 16.0 / 4f64.powi(level as i32);
        let path = sample_path(0, 0, 0.5, h).unwrap();
        let weak = ito_weak_residual(&dif, contraction(), &path, &bump(), &unit_test(), cells).unwrap();
        let rand = random_transport_check(&dif, contraction(), &path, &bump(), &unit_test(), cells).unwrap();
        ito.push(weak.normalized());
        random.push(rand.normalized());
    }
    assert!(ito[1] <= 0.6 * ito[0], "{ito:?}");
    assert!(random[1] <= 0.6 * random[0], "{random:?}");
    assert!(ito[0] < 5e-2 && random[0] < 5e-2, "{ito:?} {random:?}");
}

#[test]
fn ito_and_stratonovich_forms_agree_on_additive_noise() {
    let dif = additive_noise(0.5);
    let zero = arc(SmoothVectorField::zero(2));
    let (mut ito, mut strat) = (vec![], vec![]);
    for seed in 0..8 {
        let path = sample_path(seed, 1, 0.5, 1.0 / 32.0).unwrap();
        let theta0 = InitialProfile::Bump { center: vec![0.0, 0.0], radius: 1.5, amplitude: 1.0 };
        let r = ito_weak_residual(&dif, zero.clone(), &path, &theta0, &unit_test(), 33).unwrap();
        ito.push(r.terminal());
        strat.push(r.terminal_stratonovich());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&ito) < 5e-2, "{ito:?}");
    assert!(mean(&strat) < 5e-2, "{strat:?}");
}

#[test]
fn divergence_free_density_is_constant_one() {
    let path = sample_path(4, 1, 0.25, 1.0 / 16.0).unwrap();
    let r = density_evolution_check(&additive_noise(0.5), &path, &unit_test(), 17).unwrap();
    assert!(r.max() < 1e-12, "{}", r.max());
    assert!(r.cross_check < 1e-10, "{}", r.cross_check);
}

#[test]
fn one_dimensional_density_agrees_between_formulas() {
    // Both the Jacobian route and the exponential divergence integral give
    // the same density; their gap is a discretization error of order h.
    let field = SmoothVectorField::separable("tanh-saturated", Separable::zero(1).with_offset(vec![0.3]).with_tanh(vec![0.5]));
    let dif = Diffusion::new(1, vec![arc(field)]).unwrap();
    let test = TestFunction::new(vec![0.0], 1.0, 1.0);
    let mut gaps = vec![];
    for k in 0..3 {
        let path = sample_path(5, 1, 0.5, 1.0 / 32.0 / 2f64.powi(k)).unwrap();
        let r = density_evolution_check(&dif, &path, &test, 33).unwrap();
        assert!(r.residual.iter().all(|v| v.is_finite()));
        gaps.push(r.cross_check);
    }
    assert!(gaps[2] < gaps[0] && gaps[2] < 1e-2, "{gaps:?}");
}

#[test]
fn experiment_reports_constant_residual_and_ratios() {
    let cfg = TransportConfig { paths: 2, h: 1.0 / 16.0, cells: 17, t_final: 0.25, ..Default::default() };
    let report = transport_experiment(&cfg).unwrap();
    assert!(report.constant_residual < 1e-14);
    assert!(report.refined.is_some() && report.ito_ratio.is_some());
    assert_eq!(report.base.ito.len(), 2);
    let mut csv = vec![];
    report.write_csv(&mut csv, &cfg).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("path_seed,t,residual_ito,residual_random_transport\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 5);
}

#[test]
fn experiment_rejects_mismatched_test_dimension() {
    let cfg = TransportConfig { test: TestFunction::new(vec![0.0], 1.0, 1.0), ..Default::default() };
    assert!(transport_experiment(&cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn representation_stays_within_initial_range(seed in 0u64..1000) {
        let path = sample_path(seed, 1, 0.25, 1.0 / 16.0).unwrap();
        let pts = PointSet::box_grid(2, -1.0, 1.0, 5);
        let opts = FlowOptions { stride: path.steps(), density: false, ..Default::default() };
        let inv = inverse_flow(&additive_noise(0.5), contraction(), &path, &pts, &opts).unwrap();
        let u = representation_solution(&bump(), &inv);
        let pre: Vec<f64> = (0..pts.len()).map(|p| bump().value(inv.y_at(p, inv.last()))).collect();
        prop_assert_eq!(u, pre);
        prop_assert!(representation_solution(&bump(), &inv).iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
