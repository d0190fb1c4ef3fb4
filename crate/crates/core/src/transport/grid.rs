use serde::Serialize;

use super::{TestFunction, D};
use crate::decomposition::PointSet;

/// Uniform midpoint grid over the bounding box of a test function's support,
/// with one padding layer on every side (where the test function vanishes)
/// plus a ghost layer used only by difference quotients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadGrid {
    pub dim: usize,
    /// Coordinate of node 0 along each axis (a padding node).
    pub lo: Vec<f64>,
    pub dx: f64,
    /// Nodes per axis including padding.
    pub n: usize,
}

impl QuadGrid {
    /// `cells` midpoint cells across the support diameter.
    pub fn around(test: &TestFunction, cells: usize) -> Self {
        let dx = 2.0 * test.radius / cells as f64;
        let lo = test.center.iter().map(|c| c - test.radius - 0.5 * dx).collect();
        Self { dim: test.dim(), lo, dx, n: cells + 2 }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn weight(&self) -> f64 {
        self.dx.powi(self.dim as i32)
    }

    /// Coordinates of the node with per-axis indices `idx` (may be −1 or `n`).
    fn coords(&self, idx: &[isize], out: &mut [f64]) {
        for a in 0..self.dim {
            out[a] = self.lo[a] + idx[a] as f64 * self.dx;
        }
    }

    fn unflatten(&self, mut k: usize, side: usize, offset: isize, idx: &mut [isize]) {
        for a in (0..self.dim).rev() {
            idx[a] = (k % side) as isize + offset;
            k /= side;
        }
    }

    /// Node coordinates in row-major order.
    pub fn nodes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.dim);
        let (mut idx, mut x) = ([0isize; D], [0.0; D]);
        for k in 0..self.len() {
            self.unflatten(k, self.n, 0, &mut idx);
            self.coords(&idx, &mut x);
            out.extend_from_slice(&x[..self.dim]);
        }
        out
    }

    pub fn point_set(&self) -> PointSet {
        let nodes = self.nodes();
        PointSet { dim: self.dim, weights: vec![self.weight(); self.len()], points: nodes }
    }

    /// `Σ_k w·f_k·g_k`.
    pub fn pairing(&self, f: &[f64], g: &[f64]) -> f64 {
        let w = self.weight();
        f.iter().zip(g).map(|(a, b)| w * a * b).sum()
    }

    /// Samples `G` on the grid extended by the ghost layer, in the layout
    /// read by [`QuadGrid::flux_pairing_with`].
    pub fn sample_flux(&self, mut field: impl FnMut(&[f64], &mut [f64])) -> Vec<f64> {
        let d = self.dim;
        let side = self.n + 2;
        let ext = side.pow(d as u32);
        let mut g = vec![0.0; ext * d];
        let (mut idx, mut x) = ([0isize; D], [0.0; D]);
        for k in 0..ext {
            self.unflatten(k, side, -1, &mut idx);
            self.coords(&idx, &mut x);
            field(&x[..d], &mut g[k * d..(k + 1) * d]);
        }
        g
    }

    /// `(θ, div G)` with the divergence taken by central differences on the
    /// grid. `G` must vanish on the padding and ghost layers. Each axis term is
    /// split into the two shifted sums `Σ θ_k G(k+e_a)` and `Σ θ_k G(k−e_a)`,
    /// which for constant `θ` add the same values in the same order, so the
    /// pairing of a constant with any such divergence is exactly zero.
    pub fn flux_pairing_with(&self, theta: &[f64], g: &[f64]) -> f64 {
        let d = self.dim;
        let side = self.n + 2;
        let w = self.weight();
        let ext_index = |idx: &[isize]| -> usize { idx[..d].iter().fold(0, |acc, &i| acc * side + (i + 1) as usize) };
        let mut idx = [0isize; D];
        let mut total = 0.0;
        for a in 0..d {
            let (mut plus, mut minus) = (0.0, 0.0);
            for (k, &th) in theta.iter().enumerate().take(self.len()) {
                self.unflatten(k, self.n, 0, &mut idx);
                idx[a] += 1;
                plus += w * th * g[ext_index(&idx) * d + a];
                idx[a] -= 2;
                minus += w * th * g[ext_index(&idx) * d + a];
            }
            total += (plus - minus) / (2.0 * self.dx);
        }
        total
    }

    pub fn flux_pairing(&self, theta: &[f64], field: impl Fn(&[f64], &mut [f64])) -> f64 {
        self.flux_pairing_with(theta, &self.sample_flux(field))
    }
}
