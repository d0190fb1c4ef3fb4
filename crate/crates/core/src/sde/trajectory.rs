use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FlowState;
use crate::error::{Result, RoughFlowError};
use crate::linalg::{invert, MAX_DIM};

/// Per-point record of a flow along time. Matrices are row-major `d×d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub jacobians: Vec<f64>,
    pub inverses: Vec<f64>,
    pub dets: Vec<f64>,
}

impl FlowTrajectory {
    pub(crate) fn new(dim: usize) -> Self {
        Self { dim, times: vec![], states: vec![], jacobians: vec![], inverses: vec![], dets: vec![] }
    }

    pub(crate) fn push(&mut self, t: f64, s: &FlowState) -> Result<()> {
        let d = self.dim;
        let mut k = [0.0; MAX_DIM * MAX_DIM];
        let det = invert(d, &s.j[..d * d], &mut k);
        if det.abs() < 1e-12 || !det.is_finite() {
            return Err(RoughFlowError::SingularJacobian { step: self.times.len(), det });
        }
        self.times.push(t);
        self.states.extend_from_slice(&s.x[..d]);
        self.jacobians.extend_from_slice(&s.j[..d * d]);
        self.inverses.extend_from_slice(&k[..d * d]);
        self.dets.push(det);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn jacobian(&self, i: usize) -> &[f64] {
        let d2 = self.dim * self.dim;
        &self.jacobians[i * d2..(i + 1) * d2]
    }

    pub fn inverse(&self, i: usize) -> &[f64] {
        let d2 = self.dim * self.dim;
        &self.inverses[i * d2..(i + 1) * d2]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// `max_t ‖J_t K_t − I‖_max`.
    pub fn inversion_residual(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            let (j, k) = (self.jacobian(i), self.inverse(i));
            for a in 0..d {
                for b in 0..d {
                    let s: f64 = (0..d).map(|e| j[a * d + e] * k[e * d + b]).sum();
                    let id = if a == b { 1.0 } else { 0.0 };
                    worst = worst.max((s - id).abs());
                }
            }
        }
        worst
    }

    /// CSV with columns `t, x_1..x_d, J_11..J_dd (row-major), det`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim;
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        for a in 1..=d {
            for b in 1..=d {
                header.push(format!("J_{a}{b}"));
            }
        }
        header.push("det".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![format!("{:e}", self.times[i])];
            row.extend(self.state(i).iter().map(|v| format!("{v:e}")));
            row.extend(self.jacobian(i).iter().map(|v| format!("{v:e}")));
            row.push(format!("{:e}", self.dets[i]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, file: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(file)?);
        self.write_csv(f)
    }
}
