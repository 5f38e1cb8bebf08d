//! Finsler functions and the catalogue of model spaces.
//!
//! Every model is a chart with an `F²` program written once, generically
//! over [`Scalar`], so the same code is evaluated in plain `f64` and over
//! Taylor jets.

mod descriptor;
mod metric;

pub use descriptor::{ChartDescriptor, ModelDescriptor};
pub use metric::{
    check_homogeneity, check_strong_convexity, eval_f, metric_tensor, min_relative_eigenvalue, raw_metric, MetricValue,
    PD_RELATIVE_THRESHOLD,
};

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FinslerError, Result};
use crate::jets::{PointedVector, Scalar, SiteProgram};

/// A program for `F²` on a chart. Every [`SiteProgram`] qualifies; the
/// alias documents intent at call sites.
pub trait FinslerFunction: SiteProgram {}
impl<T: SiteProgram> FinslerFunction for T {}

/// Coordinate domain of a model.
#[derive(Debug, Clone, PartialEq)]
pub enum Chart {
    Whole,
    /// Open box; infinite bounds are allowed.
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// Open Euclidean ball.
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
}

impl Chart {
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Chart::Whole => true,
            Chart::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (lo, hi))| v > lo && v < hi),
            Chart::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                r2 < radius * radius
            }
        }
    }
}

/// Axis-aligned box used to draw random sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SampleBox {
    pub fn cube(n: usize, half_width: f64) -> Self {
        Self {
            lower: vec![-half_width; n],
            upper: vec![half_width; n],
        }
    }
}

/// Known-answer metadata carried by a model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMeta {
    pub is_riemannian: bool,
    pub is_flat_expected: bool,
    /// `F` does not depend on the base point (a Minkowski norm on the chart).
    pub x_independent: bool,
    /// Constant sectional curvature of a Riemannian model, if known.
    pub constant_curvature: Option<f64>,
}

/// The concrete `F²` families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `F² = Σ yᵢ²`.
    Euclidean,
    /// `F² = a_ij yⁱ yʲ` with a constant matrix.
    ConstantRiemannian { a: Vec<Vec<f64>> },
    /// Round unit sphere in stereographic coordinates from the north pole:
    /// `a = 4 / (1 + |x|²)² δ`.
    SphereStereographic,
    /// Round unit sphere in polar coordinates `(θ, φ)`: `a = diag(1, sin²θ)`.
    SpherePolar,
    /// Hyperbolic plane in the Poincaré disk: `a = 4 / (1 − |x|²)² δ`.
    PoincareDisk,
    /// `F² = (Σ yᵢ⁴)^{1/2}`.
    MinkowskiQuartic,
    /// `F = sqrt(a_ij yⁱyʲ) + b_i yⁱ` with constant `a`, `b`.
    Randers { a: Vec<Vec<f64>>, b: Vec<f64> },
    /// Randers metric on the unit disk with Euclidean `α` and
    /// `b(x) = s (x₂ + 0.4 x₁², −x₁ + 0.4 x₂²)`.
    CurvedRanders { strength: f64 },
}

/// A Finsler model space: a chart with an `F²` program and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FinslerModel {
    pub name: String,
    pub dim: usize,
    pub family: Family,
    pub chart: Chart,
    pub sampling: SampleBox,
    pub meta: ModelMeta,
}

pub const BUILTIN_NAMES: &[&str] = &[
    "euclidean",
    "minkowski-quartic",
    "s2",
    "s2-polar",
    "hyperbolic",
    "flat-torus",
    "randers-flat",
    "randers-curved",
];

fn quadratic<S: Scalar>(a: &[Vec<f64>], y: &[S]) -> S {
    let n = y.len();
    let mut acc = y[0].constant_like(0.0);
    for i in 0..n {
        for j in 0..n {
            if a[i][j] != 0.0 {
                acc = acc + y[i].clone() * y[j].clone() * a[i][j];
            }
        }
    }
    acc
}

fn sum_squares<S: Scalar>(v: &[S]) -> S {
    v.iter().skip(1).fold(v[0].square(), |acc, t| acc + t.square())
}

fn is_spd(a: &[Vec<f64>]) -> bool {
    let n = a.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
    (0..n).all(|i| (0..n).all(|j| (a[i][j] - a[j][i]).abs() <= 1e-14 * (1.0 + a[i][j].abs()))) && m.cholesky().is_some()
}

impl FinslerModel {
    /// Builds a model without validating that it is a Finsler function.
    pub fn from_parts(
        name: &str,
        dim: usize,
        family: Family,
        chart: Chart,
        sampling: SampleBox,
        meta: ModelMeta,
    ) -> Self {
        Self {
            name: name.to_string(),
            dim,
            family,
            chart,
            sampling,
            meta,
        }
    }

    pub fn euclidean(n: usize) -> Self {
        Self::from_parts(
            "euclidean",
            n,
            Family::Euclidean,
            Chart::Whole,
            SampleBox::cube(n, 2.0),
            ModelMeta {
                is_riemannian: true,
                is_flat_expected: true,
                x_independent: true,
                constant_curvature: Some(0.0),
            },
        )
    }

    pub fn minkowski_quartic(n: usize) -> Self {
        Self::from_parts(
            "minkowski-quartic",
            n,
            Family::MinkowskiQuartic,
            Chart::Whole,
            SampleBox::cube(n, 2.0),
            ModelMeta {
                is_riemannian: false,
                is_flat_expected: true,
                x_independent: true,
                constant_curvature: None,
            },
        )
    }

    pub fn sphere_stereographic() -> Self {
        Self::from_parts(
            "s2",
            2,
            Family::SphereStereographic,
            Chart::Whole,
            SampleBox::cube(2, 1.5),
            ModelMeta {
                is_riemannian: true,
                is_flat_expected: false,
                x_independent: false,
                constant_curvature: Some(1.0),
            },
        )
    }

    pub fn sphere_polar() -> Self {
        Self::from_parts(
            "s2-polar",
            2,
            Family::SpherePolar,
            Chart::Box {
                lower: vec![0.0, f64::NEG_INFINITY],
                upper: vec![PI, f64::INFINITY],
            },
            SampleBox {
                lower: vec![0.3, -PI],
                upper: vec![PI - 0.3, PI],
            },
            ModelMeta {
                is_riemannian: true,
                is_flat_expected: false,
                x_independent: false,
                constant_curvature: Some(1.0),
            },
        )
    }

    pub fn poincare_disk() -> Self {
        Self::from_parts(
            "hyperbolic",
            2,
            Family::PoincareDisk,
            Chart::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0,
            },
            SampleBox::cube(2, 0.6),
            ModelMeta {
                is_riemannian: true,
                is_flat_expected: false,
                x_independent: false,
                constant_curvature: Some(-1.0),
            },
        )
    }

    /// Constant metric on the fundamental box `(0, 2π)²` of a flat torus.
    pub fn flat_torus() -> Self {
        let a = vec![vec![1.0, 0.3], vec![0.3, 2.0]];
        Self::from_parts(
            "flat-torus",
            2,
            Family::ConstantRiemannian { a },
            Chart::Box {
                lower: vec![0.0, 0.0],
                upper: vec![2.0 * PI, 2.0 * PI],
            },
            SampleBox {
                lower: vec![0.5, 0.5],
                upper: vec![2.0 * PI - 0.5, 2.0 * PI - 0.5],
            },
            ModelMeta {
                is_riemannian: true,
                is_flat_expected: true,
                x_independent: true,
                constant_curvature: Some(0.0),
            },
        )
    }

    /// Constant Riemannian metric on all of `Rⁿ`.
    pub fn constant_riemannian(a: Vec<Vec<f64>>) -> Result<Self> {
        let n = a.len();
        if n < 2 || a.iter().any(|r| r.len() != n) || !is_spd(&a) {
            return Err(FinslerError::InvalidModel(
                "metric matrix must be square (n ≥ 2), symmetric and positive definite".into(),
            ));
        }
        Ok(Self::from_parts(
            "riemannian-constant",
            n,
            Family::ConstantRiemannian { a },
            Chart::Whole,
            SampleBox::cube(n, 2.0),
            ModelMeta {
                is_riemannian: true,
                is_flat_expected: true,
                x_independent: true,
                constant_curvature: Some(0.0),
            },
        ))
    }

    /// Flat (constant-coefficient) Randers metric; requires `‖b‖_a < 1`.
    pub fn flat_randers(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let n = a.len();
        if n < 2 || b.len() != n || a.iter().any(|r| r.len() != n) || !is_spd(&a) {
            return Err(FinslerError::InvalidModel(
                "Randers data needs a symmetric positive definite n×n matrix a and an n-vector b".into(),
            ));
        }
        let am = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
        let bv = nalgebra::DVector::from_vec(b.clone());
        let inv = am.try_inverse().expect("checked positive definite");
        let norm2 = (bv.transpose() * inv * &bv)[(0, 0)];
        if norm2 >= 1.0 {
            return Err(FinslerError::InvalidModel(format!(
                "Randers one-form must satisfy ‖b‖_a < 1, got {}",
                norm2.sqrt()
            )));
        }
        Ok(Self::flat_randers_unchecked(a, b))
    }

    /// Flat Randers model without the `‖b‖_a < 1` check (negative controls).
    pub fn flat_randers_unchecked(a: Vec<Vec<f64>>, b: Vec<f64>) -> Self {
        let n = a.len();
        Self::from_parts(
            "randers-flat",
            n,
            Family::Randers { a, b },
            Chart::Whole,
            SampleBox::cube(n, 2.0),
            ModelMeta {
                is_riemannian: false,
                is_flat_expected: true,
                x_independent: true,
                constant_curvature: None,
            },
        )
    }

    pub fn curved_randers(strength: f64) -> Result<Self> {
        // |b| ≤ s (|x| + 0.4 |x|²)·√2 < 1.98 s on the unit disk
        if !(0.0..0.5).contains(&strength) {
            return Err(FinslerError::InvalidModel(
                "curved Randers strength must lie in [0, 0.5)".into(),
            ));
        }
        Ok(Self::from_parts(
            "randers-curved",
            2,
            Family::CurvedRanders { strength },
            Chart::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0,
            },
            SampleBox::cube(2, 0.6),
            ModelMeta {
                is_riemannian: false,
                is_flat_expected: false,
                x_independent: false,
                constant_curvature: None,
            },
        ))
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "euclidean" => Ok(Self::euclidean(2)),
            "minkowski-quartic" => Ok(Self::minkowski_quartic(2)),
            "s2" | "s2-stereographic" => Ok(Self::sphere_stereographic()),
            "s2-polar" => Ok(Self::sphere_polar()),
            "hyperbolic" | "poincare-disk" => Ok(Self::poincare_disk()),
            "flat-torus" => Ok(Self::flat_torus()),
            "randers-flat" => Self::flat_randers(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.0]),
            "randers-curved" => Self::curved_randers(0.3),
            other => Err(FinslerError::InvalidModel(format!(
                "unknown built-in model '{other}' (known: {})",
                BUILTIN_NAMES.join(", ")
            ))),
        }
    }

    pub fn all_builtins() -> Vec<Self> {
        BUILTIN_NAMES
            .iter()
            .map(|n| Self::builtin(n).expect("built-in models are valid"))
            .collect()
    }

    pub fn in_chart(&self, x: &[f64]) -> bool {
        x.len() == self.dim && self.chart.contains(x)
    }

    /// Plain evaluation of `F²`.
    pub fn f2(&self, x: &[f64], y: &[f64]) -> f64 {
        self.eval::<f64>(x, y)
    }

    /// `F(x, y)` without domain checks; see [`eval_f`] for the checked form.
    pub fn norm(&self, x: &[f64], y: &[f64]) -> f64 {
        self.f2(x, y).max(0.0).sqrt()
    }

    /// Uniform random point of the sampling box that lies in the chart.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        loop {
            let x: Vec<f64> = self
                .sampling
                .lower
                .iter()
                .zip(&self.sampling.upper)
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect();
            if self.in_chart(&x) {
                return x;
            }
        }
    }

    /// Random site in the sampling region. Sites where the metric tensor is
    /// nearly degenerate (relative minimum eigenvalue below
    /// [`PD_RELATIVE_THRESHOLD`]) are rejected; for the quartic norm this
    /// excludes a thin tube around the coordinate axes.
    pub fn sample_site<R: Rng + ?Sized>(&self, rng: &mut R) -> PointedVector {
        loop {
            let x = self.sample_point(rng);
            let y = crate::sampling::random_direction(rng, self.dim, 0.5, 2.0);
            let site = PointedVector { x, y };
            match min_relative_eigenvalue(self, &site) {
                Ok(e) if e >= PD_RELATIVE_THRESHOLD => return site,
                _ => continue,
            }
        }
    }
}

impl SiteProgram for FinslerModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        match &self.family {
            Family::Euclidean => sum_squares(y),
            Family::ConstantRiemannian { a } => quadratic(a, y),
            Family::SphereStereographic => {
                let conformal = (sum_squares(x) + 1.0).powi(-2) * 4.0;
                conformal * sum_squares(y)
            }
            Family::SpherePolar => {
                let s = x[0].sin();
                y[0].square() + s.square() * y[1].square()
            }
            Family::PoincareDisk => {
                let conformal = (-sum_squares(x) + 1.0).powi(-2) * 4.0;
                conformal * sum_squares(y)
            }
            Family::MinkowskiQuartic => {
                let quartic = y.iter().skip(1).fold(y[0].powi(4), |acc, t| acc + t.powi(4));
                quartic.sqrt()
            }
            Family::Randers { a, b } => {
                let alpha = quadratic(a, y).sqrt();
                let beta = y
                    .iter()
                    .zip(b)
                    .fold(y[0].constant_like(0.0), |acc, (t, bi)| acc + t.clone() * *bi);
                (alpha + beta).square()
            }
            Family::CurvedRanders { strength } => {
                let alpha = sum_squares(y).sqrt();
                let b0 = (x[1].clone() + x[0].square() * 0.4) * *strength;
                let b1 = (x[1].square() * 0.4 - x[0].clone()) * *strength;
                let beta = b0 * y[0].clone() + b1 * y[1].clone();
                (alpha + beta).square()
            }
        }
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        self.in_chart(x)
    }

    fn is_x_independent(&self) -> bool {
        self.meta.x_independent
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_examples() {
        let e = FinslerModel::euclidean(2);
        assert_eq!(e.norm(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
        let q = FinslerModel::minkowski_quartic(2);
        assert!((q.norm(&[0.0, 0.0], &[1.0, 1.0]) - 2f64.powf(0.25)).abs() < 1e-15);
        let r = FinslerModel::builtin("randers-flat").unwrap();
        assert!((r.norm(&[0.0, 0.0], &[1.0, 0.0]) - 1.5).abs() < 1e-15);
        assert!((r.norm(&[0.0, 0.0], &[-1.0, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn chart_membership() {
        let h = FinslerModel::poincare_disk();
        assert!(h.in_chart(&[0.5, 0.5]));
        assert!(!h.in_chart(&[0.8, 0.8]));
        let p = FinslerModel::sphere_polar();
        assert!(p.in_chart(&[1.0, 100.0]));
        assert!(!p.in_chart(&[0.0, 0.0]));
        assert!(!FinslerModel::euclidean(2).in_chart(&[f64::NAN, 0.0]));
    }

    #[test]
    fn invalid_randers_is_rejected() {
        let err = FinslerModel::flat_randers(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.2, 0.0]).unwrap_err();
        assert!(matches!(err, FinslerError::InvalidModel(_)));
        assert!(FinslerModel::constant_riemannian(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
    }

    #[test]
    fn every_builtin_resolves() {
        for name in BUILTIN_NAMES {
            let m = FinslerModel::builtin(name).unwrap();
            assert_eq!(&m.name, name);
        }
        assert!(FinslerModel::builtin("klein-bottle").is_err());
    }
}
