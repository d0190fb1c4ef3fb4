use super::{DiffusionChart, D};
use crate::error::{Result, RoughFlowError};
use crate::linalg::dist;

/// Images `φ_t(x)` of a set of nodes at a fixed step, used to seed inversion.
#[derive(Debug, Clone)]
pub struct PhiSnapshot {
    pub step: usize,
    pub dim: usize,
    pub nodes: Vec<f64>,
    pub images: Vec<f64>,
    /// Largest distance from any node image to its nearest other image; a
    /// query farther than this from every image is outside the chart.
    pub reach: f64,
}

impl PhiSnapshot {
    pub fn build(chart: &DiffusionChart, step: usize, nodes: &[f64]) -> Result<Self> {
        let d = chart.dim();
        let n = nodes.len() / d;
        let mut images = Vec::with_capacity(nodes.len());
        for i in 0..n {
            let p = chart.exact(step, &nodes[i * d..(i + 1) * d])?;
            images.extend_from_slice(&p.phi[..d]);
        }
        let mut reach: f64 = 0.0;
        for i in 0..n {
            let mut best = f64::INFINITY;
            for k in 0..n {
                if k != i {
                    best = best.min(dist(&images[i * d..(i + 1) * d], &images[k * d..(k + 1) * d]));
                }
            }
            if best.is_finite() {
                reach = reach.max(best);
            }
        }
        Ok(Self { step, dim: d, nodes: nodes.to_vec(), images, reach })
    }

    pub fn len(&self) -> usize {
        self.nodes.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn nearest(&self, y: &[f64]) -> (usize, f64) {
        let d = self.dim;
        (0..self.len())
            .map(|i| (i, dist(&self.images[i * d..(i + 1) * d], y)))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    }
}

/// Newton inversion of `φ_t` at the snapshot's step, seeded from the node
/// with the nearest image and using `K_t` as inverse Jacobian.
pub fn invert_point(chart: &DiffusionChart, snapshot: &PhiSnapshot, y: &[f64]) -> Result<Vec<f64>> {
    let d = snapshot.dim;
    if snapshot.is_empty() {
        return Err(RoughFlowError::OutOfChart);
    }
    let (i0, gap) = snapshot.nearest(y);
    if gap > snapshot.reach.max(1e-12) * 1.5 {
        return Err(RoughFlowError::OutOfChart);
    }
    let mut x = [0.0; D];
    x[..d].copy_from_slice(&snapshot.nodes[i0 * d..(i0 + 1) * d]);
    let mut residual = f64::INFINITY;
    for _ in 0..50 {
        let p = chart.exact(snapshot.step, &x[..d])?;
        let mut r = [0.0; D];
        for a in 0..d {
            r[a] = p.phi[a] - y[a];
        }
        residual = r[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
        if residual <= 1e-8 {
            // One more correction at quadratic convergence costs nothing.
            for a in 0..d {
                x[a] -= (0..d).map(|b| p.k[a * d + b] * r[b]).sum::<f64>();
            }
            return Ok(x[..d].to_vec());
        }
        for a in 0..d {
            x[a] -= (0..d).map(|b| p.k[a * d + b] * r[b]).sum::<f64>();
        }
    }
    Err(RoughFlowError::NoConvergence { residual })
}
