use super::*;
use crate::brownian::sample_path;
use crate::fields::{Separable, SmoothVectorField};
use crate::scenario::scenario;

fn diffusion_of(fields: Vec<SmoothVectorField>) -> Diffusion {
    let d = fields[0].dim();
    Diffusion::new(d, fields.into_iter().map(|f| Arc::new(f) as Arc<dyn VectorField>).collect()).unwrap()
}

fn tanh_1d() -> Diffusion {
    diffusion_of(vec![SmoothVectorField::separable("tanh", Separable::zero(1).with_offset(vec![0.2]).with_tanh(vec![0.8]))])
}

#[test]
fn frozen_dynamics_do_not_move() {
    let dif = diffusion_of(vec![SmoothVectorField::zero(2)]);
    let zero = SmoothVectorField::zero(2);
    let mut x = [0.3, -0.4];
    let mut j = [1.0, 2.0, 3.0, 4.0];
    heun_step(&mut x, Some(&mut j), &dif, &[0.7], Some(&zero), 0.1).unwrap();
    assert_eq!(x, [0.3, -0.4]);
    assert_eq!(j, [1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn additive_noise_step_is_exact() {
    let dif = diffusion_of(vec![SmoothVectorField::constant(vec![0.7])]);
    let mut x = [1.25];
    let mut j = [1.0];
    heun_step(&mut x, Some(&mut j), &dif, &[0.125], None, 0.01).unwrap();
    assert_eq!(x[0], 1.25 + 0.7 * 0.125);
    assert_eq!(j[0], 1.0);
}

#[test]
fn geometric_step_matches_taylor() {
    let dif = diffusion_of(vec![SmoothVectorField::linear(1, vec![1.0])]);
    for dw in [0.1, 0.03, -0.05] {
        let mut x = [2.0];
        heun_step(&mut x, None, &dif, &[dw], None, 0.01).unwrap();
        let heun = 2.0 * (1.0 + dw + dw * dw / 2.0);
        assert!((x[0] - heun).abs() < 1e-14);
        let exact: f64 = 2.0 * f64::exp(dw);
        assert!((x[0] - exact).abs() <= 2.0 * dw.abs().powi(3) / 6.0 * 1.2);
    }
}

#[test]
fn nonfinite_state_is_reported() {
    let dif = diffusion_of(vec![SmoothVectorField::linear(1, vec![1.0])]);
    let mut x = [f64::MAX];
    let err = heun_step(&mut x, None, &dif, &[10.0], None, 0.01).unwrap_err();
    assert!(matches!(err, RoughFlowError::NonFiniteState { .. }));
}

#[test]
fn additive_diffusion_flow_is_a_translation() {
    let s = scenario("additive-linear").unwrap();
    let path = sample_path(3, 1, 1.0, 1.0 / 64.0).unwrap();
    let tr = diffusion_flow(&[0.4, -0.2], &path, &s.diffusion(), 1).unwrap();
    let w = path.cumulative();
    for i in 0..tr.len() {
        assert!((tr.state(i)[0] - (0.4 + 0.5 * w[i])).abs() < 1e-13);
        assert_eq!(tr.state(i)[1], -0.2);
        assert_eq!(tr.jacobian(i), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(tr.dets[i], 1.0);
    }
}

#[test]
fn no_noise_means_identity_flow() {
    let path = BrownianPath::silent(0, 1.0, 0.125).unwrap();
    let tr = diffusion_flow(&[0.4, -0.2], &path, &Diffusion::none(2), 1).unwrap();
    assert_eq!(tr.len(), 9);
    for i in 0..tr.len() {
        assert_eq!(tr.state(i), &[0.4, -0.2]);
    }
}

#[test]
fn stride_thins_output_but_keeps_endpoint() {
    let s = scenario("smooth-nonlinear").unwrap();
    let path = sample_path(1, 1, 1.0, 0.01).unwrap();
    let full = diffusion_flow(&[0.1, 0.2], &path, &s.diffusion(), 1).unwrap();
    let thin = diffusion_flow(&[0.1, 0.2], &path, &s.diffusion(), 30).unwrap();
    assert_eq!(thin.times.len(), 5);
    assert_eq!(thin.last_state(), full.last_state());
}

#[test]
fn zero_drift_direct_flow_is_bitwise_diffusion_flow() {
    let s = scenario("smooth-nonlinear").unwrap();
    let path = sample_path(9, 1, 1.0, 1.0 / 128.0).unwrap();
    let a = diffusion_flow(&[0.5, 0.1], &path, &s.diffusion(), 1).unwrap();
    let b = direct_flow(&[0.5, 0.1], &path, &s.diffusion(), &SmoothVectorField::zero(2), 1).unwrap();
    assert_eq!(a, b);
}

/// `∫₀ᵗ div A(φ_s)∘dw` by the trapezoid (Stratonovich) sum along the
/// trajectory.
fn liouville_log(tr: &FlowTrajectory, path: &BrownianPath, f: &dyn VectorField) -> Vec<f64> {
    let mut acc = vec![0.0];
    for k in 0..path.steps() {
        let a = f.divergence(tr.state(k));
        let b = f.divergence(tr.state(k + 1));
        acc.push(acc[k] + 0.5 * (a + b) * path.step(k)[0]);
    }
    acc
}

#[test]
fn det_matches_liouville_formula_at_order_h() {
    let dif = tanh_1d();
    let base = sample_path(21, 1, 1.0, 1.0 / 32.0).unwrap();
    let mut errs = vec![];
    let mut path = base;
    for _ in 0..4 {
        let tr = diffusion_flow(&[0.3], &path, &dif, 1).unwrap();
        let lg = liouville_log(&tr, &path, dif.fields()[0].as_ref());
        let err = (0..tr.len()).map(|i| (tr.dets[i] / lg[i].exp() - 1.0).abs()).fold(0.0, f64::max);
        assert!(err <= 2.0 * path.h(), "h={} err={err}", path.h());
        errs.push(err);
        path = path.refine();
    }
    assert!(errs[3] < errs[0]);
}

fn expm_b(t: f64) -> [f64; 4] {
    let (c, s) = ((0.5 * t).cos(), (0.5 * t).sin());
    let e = (-t).exp();
    [e * c, e * s, -e * s, e * c]
}

/// Variation of constants on the same increments, midpoint rule in each step.
fn additive_linear_oracle(x0: [f64; 2], path: &BrownianPath) -> [f64; 2] {
    let h = path.h();
    let (eh, em) = (expm_b(h), expm_b(h / 2.0));
    let mut x = x0;
    for k in 0..path.steps() {
        let dw = crate::scenario::ADDITIVE_LINEAR_SIGMA * path.step(k)[0];
        x = [
            eh[0] * x[0] + eh[1] * x[1] + em[0] * dw,
            eh[2] * x[0] + eh[3] * x[1] + em[2] * dw,
        ];
    }
    x
}

#[test]
fn additive_linear_direct_flow_has_order_one() {
    let s = scenario("additive-linear").unwrap();
    let drift = s.drift_field(None, &Default::default()).unwrap();
    let mut path = sample_path(5, 1, 1.0, 1.0 / 16.0).unwrap();
    let mut errs = vec![];
    for _ in 0..4 {
        let tr = direct_flow(&[1.0, -0.5], &path, &s.diffusion(), drift.as_ref(), 1).unwrap();
        let o = additive_linear_oracle([1.0, -0.5], &path);
        errs.push(crate::linalg::dist(tr.last_state(), &o));
        path = path.refine();
    }
    for w in errs.windows(2) {
        assert!(w[1] < 0.6 * w[0], "{errs:?}");
    }
}

#[test]
fn inversion_residual_is_tiny_for_catalog() {
    for name in crate::scenario::CATALOG {
        let s = scenario(name).unwrap();
        let path = if s.m() == 0 {
            BrownianPath::silent(0, 1.0, 1e-3).unwrap()
        } else {
            sample_path(4, s.m(), 1.0, 1e-3).unwrap()
        };
        let tr = diffusion_flow(&[0.7, -1.1], &path, &s.diffusion(), 10).unwrap();
        assert!(tr.inversion_residual() <= 1e-8, "{name}");
        assert!(tr.dets.iter().all(|d| *d > 0.0));
        assert_eq!(tr.jacobian(0), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(tr.dets[0], 1.0);
    }
}

#[test]
fn invalid_grids_are_refused() {
    assert!(sample_path(1, 1, 1.0, 2.0).is_err());
    let s = scenario("smooth-nonlinear").unwrap();
    let path = sample_path(1, 2, 1.0, 0.1).unwrap();
    assert!(diffusion_flow(&[0.0, 0.0], &path, &s.diffusion(), 1).is_err());
}

fn grid_nodes(r: f64, n: usize) -> Vec<f64> {
    let mut v = vec![];
    for i in 0..n {
        for j in 0..n {
            v.push(-r + 2.0 * r * i as f64 / (n - 1) as f64);
            v.push(-r + 2.0 * r * j as f64 / (n - 1) as f64);
        }
    }
    v
}

#[test]
fn invert_point_at_time_zero_is_identity() {
    let s = scenario("smooth-nonlinear").unwrap();
    let path = Arc::new(sample_path(2, 1, 1.0, 0.01).unwrap());
    let chart = DiffusionChart::new(s.diffusion(), path).unwrap();
    let snap = PhiSnapshot::build(&chart, 0, &grid_nodes(2.0, 9)).unwrap();
    let x = invert_point(&chart, &snap, &[0.33, -0.71]).unwrap();
    assert!((x[0] - 0.33).abs() < 1e-12 && (x[1] + 0.71).abs() < 1e-12);
}

#[test]
fn invert_point_additive_is_explicit() {
    let s = scenario("additive-linear").unwrap();
    let path = Arc::new(sample_path(2, 1, 1.0, 0.01).unwrap());
    let w = path.cumulative();
    let chart = DiffusionChart::new(s.diffusion(), path.clone()).unwrap();
    let snap = PhiSnapshot::build(&chart, 60, &grid_nodes(3.0, 13)).unwrap();
    let x = invert_point(&chart, &snap, &[0.2, 0.4]).unwrap();
    assert!((x[0] - (0.2 - 0.5 * w[60])).abs() < 1e-12);
    assert_eq!(x[1], 0.4);
}

#[test]
fn invert_point_residual_on_smooth_nonlinear() {
    let s = scenario("smooth-nonlinear").unwrap();
    let path = Arc::new(sample_path(8, 1, 1.0, 1e-3).unwrap());
    let chart = DiffusionChart::new(s.diffusion(), path).unwrap();
    let step = 1000;
    let snap = PhiSnapshot::build(&chart, step, &grid_nodes(3.0, 13)).unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    for _ in 0..100 {
        let x0 = [rand::Rng::gen_range(&mut rng, -1.5..1.5), rand::Rng::gen_range(&mut rng, -1.5..1.5)];
        let y = chart.exact(step, &x0).unwrap().phi;
        let x = invert_point(&chart, &snap, &y[..2]).unwrap();
        let back = chart.exact(step, &x).unwrap().phi;
        assert!(crate::linalg::dist(&back[..2], &y[..2]) <= 1e-8);
    }
    assert_eq!(invert_point(&chart, &snap, &[40.0, 40.0]).unwrap_err(), RoughFlowError::OutOfChart);
}

#[test]
fn anchored_chart_matches_exact_flow() {
    let s = scenario("smooth-nonlinear").unwrap();
    let path = Arc::new(sample_path(12, 1, 1.0, 1.0 / 256.0).unwrap());
    let chart = DiffusionChart::new(s.diffusion(), path).unwrap();
    assert!(matches!(chart.kind(), ChartKind::Anchored { .. }));
    let mut cur = chart.cursor();
    let mut y = [0.2, -0.3];
    for k in 0..=chart.steps() {
        let a = cur.eval(k, &y).unwrap();
        let e = chart.exact(k, &y).unwrap();
        assert!(crate::linalg::dist(&a.phi[..2], &e.phi[..2]) < 1e-7, "step {k}");
        for q in 0..4 {
            assert!((a.k[q] - e.k[q]).abs() < 1e-4, "step {k}");
        }
        y[0] += 0.004;
        y[1] -= 0.002;
    }
    assert!(cur.reanchors > 1);
}

#[test]
fn chart_div_k_matches_finite_differences() {
    let s = scenario("smooth-nonlinear").unwrap();
    let path = Arc::new(sample_path(13, 1, 1.0, 1.0 / 128.0).unwrap());
    let chart = DiffusionChart::new(s.diffusion(), path).unwrap();
    let step = 128;
    let x = [0.4, 0.9];
    let p = chart.exact(step, &x).unwrap();
    let eps = 1e-5;
    let mut div = [0.0; 2];
    for j in 0..2 {
        let (mut xp, mut xm) = (x, x);
        xp[j] += eps;
        xm[j] -= eps;
        let (kp, km) = (chart.exact(step, &xp).unwrap().k, chart.exact(step, &xm).unwrap().k);
        for i in 0..2 {
            div[i] += (kp[j * 2 + i] - km[j * 2 + i]) / (2.0 * eps);
        }
    }
    for i in 0..2 {
        assert!((p.div_k[i] - div[i]).abs() < 1e-7, "{i}: {} vs {}", p.div_k[i], div[i]);
    }
}

#[test]
fn trajectory_csv_layout() {
    let s = scenario("smooth-nonlinear").unwrap();
    let path = sample_path(1, 1, 1.0, 0.25).unwrap();
    let tr = diffusion_flow(&[0.1, 0.2], &path, &s.diffusion(), 1).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x_1,x_2,J_11,J_12,J_21,J_22,det");
    assert_eq!(text.lines().count(), 6);
}
