use serde::Serialize;

use crate::decomposition::{forward_density, FlowField};
use crate::error::{Result, RoughFlowError};
use crate::fields::VectorField;
use crate::sde::{invert_point, DiffusionChart, PhiSnapshot};

/// Most nodes used to seed `φ_t^{-1}`; the snapshot's reach is quadratic in it.
const MAX_SEED_NODES: usize = 400;

/// Density of `(X_t)_# L_d` at arbitrary points:
/// `ρ̃_t(φ_t^{-1}(y)) · |det K_t(φ_t^{-1}(y))|`.
pub struct PushforwardDensity<'a> {
    chart: &'a DiffusionChart,
    drift: &'a dyn VectorField,
    flow: &'a FlowField,
    output: usize,
    snapshot: PhiSnapshot,
}

impl<'a> PushforwardDensity<'a> {
    /// `flow` is the random-ODE flow `Y` on `chart`'s path; `output` indexes its
    /// stored times. Its images `Y_t(x)` seed the inversion of `φ_t`.
    pub fn new(chart: &'a DiffusionChart, drift: &'a dyn VectorField, flow: &'a FlowField, output: usize) -> Result<Self> {
        let n = flow.points.len();
        let stride = n.div_ceil(MAX_SEED_NODES).max(1);
        let nodes: Vec<f64> = (0..n).step_by(stride).flat_map(|p| flow.y_at(p, output).to_vec()).collect();
        let snapshot = PhiSnapshot::build(chart, flow.output_steps[output], &nodes)?;
        Ok(Self { chart, drift, flow, output, snapshot })
    }

    pub fn at(&self, y: &[f64]) -> Result<f64> {
        let x = invert_point(self.chart, &self.snapshot, y)?;
        let det = self.chart.exact(self.snapshot.step, &x)?.det;
        let rho_tilde = forward_density(self.flow, self.chart, self.drift, self.output, &x)?;
        Ok(rho_tilde / det.abs())
    }
}

/// One-shot form of [`PushforwardDensity::at`].
pub fn quasi_invariance_density(
    chart: &DiffusionChart,
    drift: &dyn VectorField,
    flow: &FlowField,
    output: usize,
    y: &[f64],
) -> Result<f64> {
    PushforwardDensity::new(chart, drift, flow, output)?.at(y)
}

/// The same density read off at the grid images `X_t(x)` of a composed flow,
/// where it equals `1 / (ρ_t(x)·det J_t(Y_t(x))) = exp(−log_rho)`.
pub fn pushforward_density_at_images(composed: &FlowField, output: usize) -> Vec<f64> {
    (0..composed.points.len()).map(|p| (-composed.log_rho_at(p, output)).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramReport {
    pub bins_per_axis: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    /// Weighted mass of the grid images per bin, row-major in `(x₁, x₂)`.
    pub empirical: Vec<f64>,
    /// Bin integrals of the density formula.
    pub formula: Vec<f64>,
    /// `Σ|empirical − formula| / Σ formula`.
    pub relative_l1: f64,
}

/// Compares the weighted histogram of the images `X_t(x)` (grid weights as
/// masses) with bin integrals of `density`, taken by the midpoint rule on
/// `sub × sub` points per bin. The window must lie inside the image of the
/// grid's domain, otherwise empty regions bias the histogram low.
pub fn histogram_check(
    composed: &FlowField,
    output: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    bins_per_axis: usize,
    sub: usize,
    density: impl Fn(&[f64]) -> Result<f64> + Sync,
) -> Result<HistogramReport> {
    use rayon::prelude::*;
    if composed.dim != 2 {
        return Err(RoughFlowError::InvalidArgument("histograms are two-dimensional".into()));
    }
    if bins_per_axis == 0 || sub == 0 || hi[0] <= lo[0] || hi[1] <= lo[1] {
        return Err(RoughFlowError::InvalidArgument("empty histogram window".into()));
    }
    let b = bins_per_axis;
    let width = [(hi[0] - lo[0]) / b as f64, (hi[1] - lo[1]) / b as f64];
    let mut empirical = vec![0.0; b * b];
    for p in 0..composed.points.len() {
        let x = composed.y_at(p, output);
        let i = ((x[0] - lo[0]) / width[0]).floor();
        let j = ((x[1] - lo[1]) / width[1]).floor();
        if i >= 0.0 && j >= 0.0 && (i as usize) < b && (j as usize) < b {
            empirical[i as usize * b + j as usize] += composed.points.weights[p];
        }
    }
    let cell = width[0] * width[1] / (sub * sub) as f64;
    let formula: Vec<f64> = (0..b * b)
        .into_par_iter()
        .map(|bin| {
            let (i, j) = (bin / b, bin % b);
            let mut mass = 0.0;
            for a in 0..sub {
                for c in 0..sub {
                    let y = [
                        lo[0] + width[0] * (i as f64 + (a as f64 + 0.5) / sub as f64),
                        lo[1] + width[1] * (j as f64 + (c as f64 + 0.5) / sub as f64),
                    ];
                    mass += density(&y)? * cell;
                }
            }
            Ok(mass)
        })
        .collect::<Result<_>>()?;
    let total: f64 = formula.iter().sum();
    let gap: f64 = empirical.iter().zip(&formula).map(|(e, f)| (e - f).abs()).sum();
    Ok(HistogramReport { bins_per_axis: b, lo, hi, empirical, formula, relative_l1: gap / total })
}
