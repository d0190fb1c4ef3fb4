use serde::{Deserialize, Serialize};

use super::{ClosedForm, FieldDescriptor, Separable, VectorField};
use crate::linalg::MAX_DIM;

/// Region predicate of a drift piece. Boundaries are null sets, so the
/// closed/open convention only matters for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Everywhere,
    /// `⟨normal, x⟩ ≥ offset`
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// Orthant selected by the sign pattern of the coordinates; a coordinate
    /// equal to zero counts as positive.
    Orthant { positive: Vec<bool> },
    Intersection(Vec<Region>),
    Complement(Box<Region>),
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Everywhere => true,
            Region::HalfSpace { normal, offset } => {
                normal.iter().zip(x).map(|(n, v)| n * v).sum::<f64>() >= *offset
            }
            Region::Orthant { positive } => positive.iter().zip(x).all(|(&p, &v)| (v >= 0.0) == p),
            Region::Intersection(rs) => rs.iter().all(|r| r.contains(x)),
            Region::Complement(r) => !r.contains(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub region: Region,
    pub form: ClosedForm,
}

/// Sublinear growth `|A₀(x)| ≤ C(1 + |x|^{1−ε₀})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    pub c: f64,
    pub eps0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriftClass {
    Smooth,
    SobolevW11loc,
    BVloc,
}

/// A drift defined off a null set by closed-form pieces on predicate regions.
///
/// The Jacobian and divergence returned through [`VectorField`] are the
/// absolutely continuous parts (piecewise analytic derivatives); jump parts of
/// the distributional derivative are only seen through mollification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughDrift {
    pub name: String,
    pub dim: usize,
    pub pieces: Vec<Piece>,
    pub growth: Growth,
    pub class: DriftClass,
    /// Global bound on the divergence density, when one exists.
    pub divergence_sup: Option<f64>,
}

impl RoughDrift {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Drift made of a single smooth closed form.
    pub fn smooth(name: impl Into<String>, form: ClosedForm, growth: Growth) -> Self {
        let dim = form.dim();
        let divergence_sup = form.divergence_sup();
        Self {
            name: name.into(),
            dim,
            pieces: vec![Piece { region: Region::Everywhere, form }],
            growth,
            class: DriftClass::Smooth,
            divergence_sup,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::smooth(
            "zero",
            ClosedForm::Separable(Separable::zero(dim)),
            Growth { c: 0.0, eps0: 0.5 },
        )
    }

    /// `A₀(x) = amplitude·(−sign x₂, sign x₁)`: bounded, divergence-free as a
    /// measure, with jumps across both axes.
    pub fn sign_rotation(amplitude: f64) -> Self {
        let mut pieces = Vec::new();
        for p1 in [true, false] {
            for p2 in [true, false] {
                let s1 = if p1 { 1.0 } else { -1.0 };
                let s2 = if p2 { 1.0 } else { -1.0 };
                pieces.push(Piece {
                    region: Region::Orthant { positive: vec![p1, p2] },
                    form: ClosedForm::Separable(Separable::constant(vec![
                        -amplitude * s2,
                        amplitude * s1,
                    ])),
                });
            }
        }
        Self {
            name: "sign-rotation".into(),
            dim: 2,
            pieces,
            growth: Growth { c: amplitude * 2f64.sqrt(), eps0: 0.5 },
            class: DriftClass::BVloc,
            divergence_sup: Some(0.0),
        }
    }

    /// One-dimensional jump `left` for `x < 0`, `right` for `x ≥ 0`.
    pub fn step_1d(left: f64, right: f64) -> Self {
        Self {
            name: "step".into(),
            dim: 1,
            pieces: vec![
                Piece {
                    region: Region::HalfSpace { normal: vec![1.0], offset: 0.0 },
                    form: ClosedForm::Separable(Separable::constant(vec![right])),
                },
                Piece {
                    region: Region::Everywhere,
                    form: ClosedForm::Separable(Separable::constant(vec![left])),
                },
            ],
            growth: Growth { c: left.abs().max(right.abs()), eps0: 0.5 },
            class: DriftClass::BVloc,
            // The jump contributes a singular measure; the density part is 0.
            divergence_sup: Some(0.0),
        }
    }

    /// Swirl with speed `amplitude·|x|^{power}`, `0 < power < 1`.
    pub fn swirl(amplitude: f64, power: f64) -> Self {
        Self {
            name: "swirl".into(),
            dim: 2,
            pieces: vec![Piece {
                region: Region::Everywhere,
                form: ClosedForm::Swirl { amplitude, power },
            }],
            growth: Growth { c: amplitude.abs(), eps0: 1.0 - power },
            class: DriftClass::SobolevW11loc,
            divergence_sup: Some(0.0),
        }
    }

    pub fn with_growth(mut self, c: f64, eps0: f64) -> Self {
        self.growth = Growth { c, eps0 };
        self
    }

    fn piece(&self, x: &[f64]) -> Option<&Piece> {
        self.pieces.iter().find(|p| p.region.contains(x))
    }

    /// a.e.-defined divergence density.
    pub fn divergence_density(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut j = [0.0; MAX_DIM * MAX_DIM];
        VectorField::jacobian(self, x, &mut j);
        (0..d).map(|i| j[i * d + i]).sum()
    }

    /// Bound on |div A₀| over any ball, from the closed-form pieces.
    pub fn divergence_bound(&self) -> Option<f64> {
        self.pieces
            .iter()
            .map(|p| p.form.divergence_sup())
            .try_fold(0.0f64, |acc, b| b.map(|b| acc.max(b)))
    }

    pub fn descriptor(&self) -> FieldDescriptor {
        FieldDescriptor {
            name: self.name.clone(),
            dim: self.dim,
            params: serde_json::json!({
                "pieces": self.pieces,
                "growth": self.growth,
                "class": self.class,
                "divergence_sup": self.divergence_sup,
            }),
        }
    }
}

impl VectorField for RoughDrift {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Zero on the (null) set not covered by any piece.
    fn value(&self, x: &[f64], out: &mut [f64]) {
        match self.piece(x) {
            Some(p) => p.form.value(x, out),
            None => out[..self.dim].iter_mut().for_each(|v| *v = 0.0),
        }
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        match self.piece(x) {
            Some(p) => p.form.jacobian(x, out),
            None => out[..self.dim * self.dim].iter_mut().for_each(|v| *v = 0.0),
        }
    }

    fn is_constant(&self) -> bool {
        self.pieces.len() == 1 && self.pieces[0].form.is_constant()
    }
}
