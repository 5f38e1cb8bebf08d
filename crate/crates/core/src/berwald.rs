//! Canonical spray, Berwald connection and its curvatures in induced
//! coordinates `(xⁱ, yⁱ)` on the slit tangent bundle.
//!
//! * spray: `Gⁱ = ¼ g^{il} (y^k ∂²F²/∂y^l∂x^k − ∂F²/∂x^l)`, geodesics solve
//!   `ẍⁱ + 2Gⁱ(x, ẋ) = 0`;
//! * nonlinear (Ehresmann) connection: `Nⁱ_j = ∂Gⁱ/∂y^j`, horizontal frame
//!   `δ_j = ∂_{x^j} − N^m_j ∂_{y^m}`;
//! * Berwald coefficients `Gⁱ_jk = ∂²Gⁱ/∂y^j∂y^k`;
//! * Berwald curvature `Bⁱ_jkl = ∂³Gⁱ/∂y^j∂y^k∂y^l`;
//! * affine curvature
//!   `Hⁱ_jkl = δ_k Gⁱ_lj − δ_l Gⁱ_kj + G^m_lj Gⁱ_km − G^m_kj Gⁱ_lm`;
//! * curvature of the nonlinear connection `Rⁱ_jk = δ_j Nⁱ_k − δ_k Nⁱ_j`.
//!
//! Index convention: `H(X, Y)Z = Hⁱ_jkl Zʲ Xᵏ Yˡ ∂_i`, so on a Riemannian
//! model `H` is the Riemann tensor with `R(∂_k, ∂_l)∂_j = Rⁱ_jkl ∂_i` and the
//! round sphere gives `Rⁱ_jkl = δⁱ_k a_jl − δⁱ_l a_jk` (sectional curvature
//! `+1`). With this convention `Rⁱ_jk = Hⁱ_mjk y^m` holds exactly, and the
//! Jacobi equation along a geodesic reads `D_ċD_ċJ + K J = 0` with
//! `Kⁱ_k = Hⁱ_jkl ċʲ ċˡ`.
//!
//! The spray is computed once per site as a Taylor series in all `2n`
//! variables; every tensor above is then a coefficient lookup.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FinslerError, Result};
use crate::jets::{jet, PointedVector, Scalar, SiteProgram, TaylorScalar, Truncation, Var};
use crate::models::{eval_f, PD_RELATIVE_THRESHOLD};
use crate::tensor::{Tensor3, Tensor4};

/// Threshold on normalised `|B|`, `|H|` below which a model counts as flat.
pub const FLATNESS_TOLERANCE: f64 = 1e-7;

/// The Berwald tower at one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionData {
    pub site: PointedVector,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    /// `Gⁱ`
    #[serde(rename = "G")]
    pub spray: Vec<f64>,
    /// `Nⁱ_j`, row `i`, column `j`.
    #[serde(rename = "N")]
    pub nonlinear: DMatrix<f64>,
    /// `Gⁱ_jk`
    #[serde(rename = "Gamma")]
    pub berwald: Tensor3,
    /// `Bⁱ_jkl`
    #[serde(rename = "B")]
    pub berwald_curvature: Tensor4,
    /// `Hⁱ_jkl`
    #[serde(rename = "H")]
    pub affine_curvature: Tensor4,
    /// `Rⁱ_jk`
    #[serde(rename = "R_nl")]
    pub nonlinear_curvature: Tensor3,
}

/// Spray series together with the site it was expanded at.
struct SpraySeries {
    n: usize,
    g: DMatrix<f64>,
    spray: Vec<TaylorScalar>,
}

impl SpraySeries {
    /// `∂^{xs}_x ∂^{ys}_y Gⁱ` where `xs`/`ys` list differentiation variables.
    fn d(&self, i: usize, xs: &[usize], ys: &[usize]) -> Result<f64> {
        let mut ax = vec![0usize; self.n];
        let mut ay = vec![0usize; self.n];
        xs.iter().for_each(|&k| ax[k] += 1);
        ys.iter().for_each(|&k| ay[k] += 1);
        self.spray[i].derivative(&ax, &ay)
    }
}

/// Solves `a w = b` over Taylor series by elimination without pivoting;
/// `a` must be symmetric positive definite at the expansion point.
fn solve_series(mut a: Vec<Vec<TaylorScalar>>, mut b: Vec<TaylorScalar>) -> Vec<TaylorScalar> {
    let n = b.len();
    for p in 0..n {
        let inv = a[p][p].constant_like(1.0) / a[p][p].clone();
        for r in (p + 1)..n {
            let factor = a[r][p].clone() * inv.clone();
            for c in (p + 1)..n {
                a[r][c] = a[r][c].clone() - factor.clone() * a[p][c].clone();
            }
            b[r] = b[r].clone() - factor * b[p].clone();
        }
    }
    let mut w: Vec<Option<TaylorScalar>> = vec![None; n];
    for p in (0..n).rev() {
        let mut acc = b[p].clone();
        for c in (p + 1)..n {
            acc = acc - a[p][c].clone() * w[c].clone().expect("solved");
        }
        w[p] = Some(acc / a[p][p].clone());
    }
    w.into_iter().map(|v| v.expect("solved")).collect()
}

/// Expands `Gⁱ` at `site` so that coefficients with x-order ≤ `gx` and total
/// order ≤ `gt` (y-order ≤ `gt`) are exact.
fn spray_series<M: SiteProgram>(model: &M, site: &PointedVector, gx: usize, gt: usize) -> Result<SpraySeries> {
    let n = model.dim();
    let trunc = Truncation::new(gx + 1, gt + 2, gt + 2);
    let f2 = jet(model, site, trunc)?;
    let space = f2.space().clone();
    let (_, ys) = TaylorScalar::variables(&space, &site.x, &site.y);

    let dy: Vec<TaylorScalar> = (0..n).map(|l| f2.diff(Var::Y(l))).collect();
    let dx: Vec<TaylorScalar> = (0..n).map(|l| f2.diff(Var::X(l))).collect();
    let g: Vec<Vec<TaylorScalar>> = (0..n)
        .map(|i| (0..n).map(|l| dy[i].diff(Var::Y(l)) * 0.5).collect())
        .collect();

    let g0 = DMatrix::from_fn(n, n, |i, j| g[i][j].value());
    let trace = g0.trace();
    let min_eig = g0.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if !(trace > 0.0 && min_eig > PD_RELATIVE_THRESHOLD * trace) {
        return Err(FinslerError::SingularMetric(format!(
            "x = {:?}, y = {:?} (min eigenvalue {min_eig:e})",
            site.x, site.y
        )));
    }

    let rhs: Vec<TaylorScalar> = (0..n)
        .map(|l| {
            let mut acc = -dx[l].clone();
            for (k, yk) in ys.iter().enumerate() {
                acc = acc + yk.clone() * dy[l].diff(Var::X(k));
            }
            acc * 0.25
        })
        .collect();
    let spray = solve_series(g, rhs);
    if spray.iter().any(|s| !s.is_finite()) {
        return Err(FinslerError::Domain(format!(
            "spray is not finite at x = {:?}, y = {:?}",
            site.x, site.y
        )));
    }
    Ok(SpraySeries { n, g: g0, spray })
}

/// Spray coefficients `Gⁱ(x, y)`.
pub fn spray_coefficients<M: SiteProgram>(model: &M, site: &PointedVector) -> Result<Vec<f64>> {
    let s = spray_series(model, site, 0, 0)?;
    Ok(s.spray.iter().map(|g| g.value()).collect())
}

/// Nonlinear connection `Nⁱ_j = ∂Gⁱ/∂y^j`.
pub fn nonlinear_connection<M: SiteProgram>(model: &M, site: &PointedVector) -> Result<DMatrix<f64>> {
    let s = spray_series(model, site, 0, 1)?;
    let n = s.n;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = s.d(i, &[], &[j])?;
        }
    }
    Ok(out)
}

/// Berwald coefficients `Gⁱ_jk = ∂²Gⁱ/∂y^j∂y^k`.
pub fn berwald_coefficients<M: SiteProgram>(model: &M, site: &PointedVector) -> Result<Tensor3> {
    let s = spray_series(model, site, 0, 2)?;
    gamma_from(&s)
}

fn gamma_from(s: &SpraySeries) -> Result<Tensor3> {
    let n = s.n;
    let mut t = Tensor3::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                let v = s.d(i, &[], &[j, k])?;
                t.set(i, j, k, v);
                t.set(i, k, j, v);
            }
        }
    }
    Ok(t)
}

fn nonlinear_from(s: &SpraySeries) -> Result<DMatrix<f64>> {
    let n = s.n;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = s.d(i, &[], &[j])?;
        }
    }
    Ok(out)
}

/// Berwald curvature `Bⁱ_jkl`.
pub fn berwald_curvature<M: SiteProgram>(model: &M, site: &PointedVector) -> Result<Tensor4> {
    Ok(connection_data(model, site)?.berwald_curvature)
}

/// Affine curvature `Hⁱ_jkl`.
pub fn affine_curvature<M: SiteProgram>(model: &M, site: &PointedVector) -> Result<Tensor4> {
    Ok(connection_data(model, site)?.affine_curvature)
}

/// Curvature `Rⁱ_jk` of the nonlinear connection.
pub fn nonlinear_curvature<M: SiteProgram>(model: &M, site: &PointedVector) -> Result<Tensor3> {
    let s = spray_series(model, site, 1, 2)?;
    let nl = nonlinear_from(&s)?;
    let gamma = gamma_from(&s)?;
    nonlinear_curvature_from(&s, &nl, &gamma)
}

fn nonlinear_curvature_from(s: &SpraySeries, nl: &DMatrix<f64>, gamma: &Tensor3) -> Result<Tensor3> {
    let n = s.n;
    // δ_j Nⁱ_k = ∂_{x^j} Nⁱ_k − N^m_j Gⁱ_km
    let mut delta_n = Tensor3::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut v = s.d(i, &[j], &[k])?;
                for m in 0..n {
                    v -= nl[(m, j)] * gamma.get(i, k, m);
                }
                delta_n.set(i, j, k, v);
            }
        }
    }
    Ok(Tensor3::from_fn(n, |i, j, k| {
        delta_n.get(i, j, k) - delta_n.get(i, k, j)
    }))
}

/// The full tower at `site`.
pub fn connection_data<M: SiteProgram>(model: &M, site: &PointedVector) -> Result<ConnectionData> {
    let s = spray_series(model, site, 1, 3)?;
    let n = s.n;
    let spray: Vec<f64> = s.spray.iter().map(|g| g.value()).collect();
    let nl = nonlinear_from(&s)?;
    let gamma = gamma_from(&s)?;

    let b = Tensor4::from_fn(n, |i, j, k, l| s.d(i, &[], &[j, k, l]).unwrap_or(f64::NAN));
    // ∂_{x^l} Gⁱ_jk stored at (i, j, k, l)
    let dx_gamma = Tensor4::from_fn(n, |i, j, k, l| s.d(i, &[l], &[j, k]).unwrap_or(f64::NAN));
    if b.as_slice().iter().chain(dx_gamma.as_slice()).any(|v| v.is_nan()) {
        return Err(FinslerError::OrderExceeded(
            "spray series too short for curvature".into(),
        ));
    }

    // δ_k Gⁱ_lj = ∂_{x^k} Gⁱ_lj − N^m_k Bⁱ_ljm
    let delta_gamma = |i: usize, l: usize, j: usize, k: usize| -> f64 {
        let mut v = dx_gamma.get(i, l, j, k);
        for m in 0..n {
            v -= nl[(m, k)] * b.get(i, l, j, m);
        }
        v
    };
    let h = Tensor4::from_fn(n, |i, j, k, l| {
        let mut v = delta_gamma(i, l, j, k) - delta_gamma(i, k, j, l);
        for m in 0..n {
            v += gamma.get(m, l, j) * gamma.get(i, k, m) - gamma.get(m, k, j) * gamma.get(i, l, m);
        }
        v
    });
    let r_nl = nonlinear_curvature_from(&s, &nl, &gamma)?;
    let g_inv =
        s.g.clone()
            .cholesky()
            .ok_or_else(|| FinslerError::SingularMetric(format!("x = {:?}", site.x)))?
            .inverse();

    Ok(ConnectionData {
        site: site.clone(),
        g: s.g,
        g_inv,
        spray,
        nonlinear: nl,
        berwald: gamma,
        berwald_curvature: b,
        affine_curvature: h,
        nonlinear_curvature: r_nl,
    })
}

/// Spray, nonlinear connection and Berwald coefficients: what parallel
/// transport needs.
#[derive(Debug, Clone)]
pub struct TransportCoefficients {
    pub spray: Vec<f64>,
    pub nonlinear: DMatrix<f64>,
    pub berwald: Tensor3,
}

pub fn transport_coefficients<M: SiteProgram>(model: &M, site: &PointedVector) -> Result<TransportCoefficients> {
    let s = spray_series(model, site, 0, 2)?;
    Ok(TransportCoefficients {
        spray: s.spray.iter().map(|g| g.value()).collect(),
        nonlinear: nonlinear_from(&s)?,
        berwald: gamma_from(&s)?,
    })
}

/// Coefficients of the Jacobi equation along a geodesic with velocity `y`.
#[derive(Debug, Clone)]
pub struct JacobiCoefficients {
    pub spray: Vec<f64>,
    pub nonlinear: DMatrix<f64>,
    /// `Kⁱ_k = Hⁱ_jkl yʲ yˡ`
    pub operator: DMatrix<f64>,
}

/// Jacobi operator `Kⁱ_k = Hⁱ_jkl yʲ yˡ`, evaluated through the exact
/// contraction `Hⁱ_jkl yʲ = Rⁱ_kl` so that only second-order spray data is
/// needed.
pub fn jacobi_coefficients<M: SiteProgram>(model: &M, site: &PointedVector) -> Result<JacobiCoefficients> {
    let s = spray_series(model, site, 1, 2)?;
    let n = s.n;
    let nl = nonlinear_from(&s)?;
    let gamma = gamma_from(&s)?;
    let r = nonlinear_curvature_from(&s, &nl, &gamma)?;
    let op = DMatrix::from_fn(n, n, |i, k| (0..n).map(|l| r.get(i, k, l) * site.y[l]).sum());
    Ok(JacobiCoefficients {
        spray: s.spray.iter().map(|g| g.value()).collect(),
        nonlinear: nl,
        operator: op,
    })
}

impl ConnectionData {
    pub fn dim(&self) -> usize {
        self.spray.len()
    }

    /// `Kⁱ_k = Hⁱ_jkl yʲ yˡ` from the stored affine curvature.
    pub fn jacobi_operator(&self) -> DMatrix<f64> {
        let n = self.dim();
        let y = &self.site.y;
        DMatrix::from_fn(n, n, |i, k| {
            let mut s = 0.0;
            for j in 0..n {
                for l in 0..n {
                    s += self.affine_curvature.get(i, j, k, l) * y[j] * y[l];
                }
            }
            s
        })
    }

    /// `R^∇_u(z₁, z₂) v` for tangent vectors `z₁, z₂` to `TM` at the site:
    /// `H(j z₁, j z₂) v + B(𝒱 z₁, j z₂) v − B(𝒱 z₂, j z₁) v`. The
    /// vertical–vertical part of `R^∇` vanishes identically.
    pub fn curvature_apply(&self, z1: &TangentOfTM, z2: &TangentOfTM, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let a = &z1.x;
        let b = &z2.x;
        let va = z1.vertical_part(&self.nonlinear);
        let vb = z2.vertical_part(&self.nonlinear);
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let h = self.affine_curvature.get(i, j, k, l);
                            let bc = self.berwald_curvature.get(i, j, k, l);
                            s += v[j] * (h * a[k] * b[l] + bc * va[k] * b[l] - bc * vb[k] * a[l]);
                        }
                    }
                }
                s
            })
            .collect()
    }

    /// `g(u, w)` at the site.
    pub fn inner(&self, u: &[f64], w: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self.g[(i, j)] * u[i] * w[j];
            }
        }
        s
    }
}

/// Tangent vector `ξ = ξxⁱ ∂_{xⁱ} + ξyⁱ ∂_{yⁱ}` to `TM` at a site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentOfTM {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TangentOfTM {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len());
        Self { x, y }
    }

    /// `𝒱ξ = ξy + N ξx`.
    pub fn vertical_part(&self, nonlinear: &DMatrix<f64>) -> Vec<f64> {
        let corr = nonlinear * DVector::from_column_slice(&self.x);
        self.y.iter().zip(corr.iter()).map(|(a, b)| a + b).collect()
    }

    /// `h ξ = (ξx, −N ξx)`.
    pub fn horizontal(&self, nonlinear: &DMatrix<f64>) -> TangentOfTM {
        let corr = nonlinear * DVector::from_column_slice(&self.x);
        TangentOfTM::new(self.x.clone(), corr.iter().map(|c| -c).collect())
    }

    /// `v ξ = (0, ξy + N ξx)`.
    pub fn vertical(&self, nonlinear: &DMatrix<f64>) -> TangentOfTM {
        TangentOfTM::new(vec![0.0; self.x.len()], self.vertical_part(nonlinear))
    }
}

/// The Riemannian metric `ḡ(ξ, η) = g(jξ, jη) + g(𝒱ξ, 𝒱η)` on the slit
/// tangent bundle.
pub fn gbar<M: SiteProgram>(model: &M, site: &PointedVector, xi: &TangentOfTM, eta: &TangentOfTM) -> Result<f64> {
    let s = spray_series(model, site, 0, 1)?;
    let nl = nonlinear_from(&s)?;
    let inner = |u: &[f64], w: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..s.n {
            for j in 0..s.n {
                acc += s.g[(i, j)] * u[i] * w[j];
            }
        }
        acc
    };
    Ok(inner(&xi.x, &eta.x) + inner(&xi.vertical_part(&nl), &eta.vertical_part(&nl)))
}

/// `δ_k F = ∂_{x^k} F − N^m_k ∂_{y^m} F`, which vanishes for the Berwald
/// connection (conservativity).
pub fn horizontal_derivative_of_f<M: SiteProgram>(model: &M, site: &PointedVector) -> Result<Vec<f64>> {
    let n = model.dim();
    let nl = nonlinear_connection(model, site)?;
    let f2 = jet(model, site, Truncation::new(1, 1, 1))?;
    let f = eval_f(model, site)?;
    let zero = vec![0usize; n];
    (0..n)
        .map(|k| {
            let mut e = zero.clone();
            e[k] = 1;
            let mut v = f2.derivative(&e, &zero)?;
            for m in 0..n {
                let mut em = zero.clone();
                em[m] = 1;
                v -= nl[(m, k)] * f2.derivative(&zero, &em)?;
            }
            Ok(v / (2.0 * f))
        })
        .collect()
}

/// Result of a flatness scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub flat: bool,
    pub max_residual: f64,
}

/// Largest `|Bⁱ_jkl|`, `|Hⁱ_jkl|` over the sites after rescaling each anchor
/// to `F(y) = 1`; flat iff below [`FLATNESS_TOLERANCE`].
pub fn flatness_test<M: SiteProgram>(model: &M, sites: &[PointedVector]) -> Result<FlatnessReport> {
    if sites.is_empty() {
        return Err(FinslerError::Precondition(
            "flatness test needs at least one site".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    for s in sites {
        let f = eval_f(model, s)?;
        let unit = s.scaled(1.0 / f)?;
        let c = connection_data(model, &unit)?;
        worst = worst
            .max(c.berwald_curvature.max_abs())
            .max(c.affine_curvature.max_abs());
    }
    Ok(FlatnessReport {
        flat: worst < FLATNESS_TOLERANCE,
        max_residual: worst,
    })
}
