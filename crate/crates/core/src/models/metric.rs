use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FinslerError, Result};
use crate::jets::{jet, PointedVector, SiteProgram, Truncation};

/// Sites whose metric tensor has `λ_min / trace` below this are treated as
/// degenerate.
pub const PD_RELATIVE_THRESHOLD: f64 = 1e-8;

/// Metric tensor `g_ij = ½ ∂²F²/∂yⁱ∂yʲ` and its inverse at a site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub site: PointedVector,
}

impl MetricValue {
    /// `g(u, v)`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = u.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self.g[(i, j)] * u[i] * v[j];
            }
        }
        s
    }
}

/// `F(x, y) = sqrt(F²(x, y))` with domain checks.
pub fn eval_f<P: SiteProgram>(program: &P, site: &PointedVector) -> Result<f64> {
    if !program.in_domain(&site.x) {
        return Err(FinslerError::Domain(format!("x = {:?} is outside the chart", site.x)));
    }
    let f2 = program.eval::<f64>(&site.x, &site.y);
    if !(f2.is_finite() && f2 > 0.0) {
        return Err(FinslerError::Domain(format!(
            "F² = {f2} is not positive at x = {:?}, y = {:?}",
            site.x, site.y
        )));
    }
    Ok(f2.sqrt())
}

/// Half the fibre Hessian of `F²`, without any definiteness check.
pub fn raw_metric<P: SiteProgram>(program: &P, site: &PointedVector) -> Result<DMatrix<f64>> {
    let n = program.dim();
    let f2 = jet(program, site, Truncation::new(0, 2, 2))?;
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut ay = vec![0usize; n];
            ay[i] += 1;
            ay[j] += 1;
            let v = 0.5 * f2.derivative(&vec![0; n], &ay)?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Smallest eigenvalue of `g` divided by its trace.
pub fn min_relative_eigenvalue<P: SiteProgram>(program: &P, site: &PointedVector) -> Result<f64> {
    let g = raw_metric(program, site)?;
    let trace = g.trace();
    let eig = g.symmetric_eigenvalues();
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(min / trace.abs().max(f64::MIN_POSITIVE))
}

/// The metric tensor at `site`; fails when `g` is not positive definite
/// (relative threshold [`PD_RELATIVE_THRESHOLD`]).
pub fn metric_tensor<P: SiteProgram>(program: &P, site: &PointedVector) -> Result<MetricValue> {
    let g = raw_metric(program, site)?;
    let trace = g.trace();
    let min = g.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if !(trace > 0.0 && min > PD_RELATIVE_THRESHOLD * trace) {
        return Err(FinslerError::SingularMetric(format!(
            "x = {:?}, y = {:?} (min eigenvalue {min:e}, trace {trace:e})",
            site.x, site.y
        )));
    }
    let g_inv = g
        .clone()
        .cholesky()
        .ok_or_else(|| FinslerError::SingularMetric(format!("x = {:?}, y = {:?}", site.x, site.y)))?
        .inverse();
    Ok(MetricValue {
        g,
        g_inv,
        site: site.clone(),
    })
}

/// `max |F(x, λy) − λ F(x, y)|` over all sites and factors.
pub fn check_homogeneity<P: SiteProgram>(program: &P, sites: &[PointedVector], lambdas: &[f64]) -> f64 {
    let f = |x: &[f64], y: &[f64]| program.eval::<f64>(x, y).max(0.0).sqrt();
    let mut worst: f64 = 0.0;
    for s in sites {
        let base = f(&s.x, &s.y);
        for &l in lambdas {
            let scaled: Vec<f64> = s.y.iter().map(|v| v * l).collect();
            worst = worst.max((f(&s.x, &scaled) - l * base).abs());
        }
    }
    worst
}

/// Minimum eigenvalue of `g` over the sites (`−∞` if `g` cannot be formed).
pub fn check_strong_convexity<P: SiteProgram>(program: &P, sites: &[PointedVector]) -> f64 {
    sites
        .iter()
        .map(|s| match raw_metric(program, s) {
            Ok(g) => g.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min),
            Err(_) => f64::NEG_INFINITY,
        })
        .fold(f64::INFINITY, f64::min)
}
