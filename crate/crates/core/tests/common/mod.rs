//! Independent oracles shared by the integration tests: closed-form
//! Christoffel symbols and curvature of the Riemannian models, and a
//! finite-difference reconstruction of the Berwald tower from pointwise
//! spray values.

#![allow(dead_code)]

use finsler::berwald::spray_coefficients;
use finsler::jets::{fd_partial_fn, PointedVector};
use finsler::models::{Family, FinslerModel};
use finsler::tensor::{Tensor3, Tensor4};
use finsler::{FinslerError, Result, SiteProgram};
use nalgebra::DMatrix;

/// Riemannian metric coefficients `a_ij(x)` of the Riemannian built-ins.
pub fn riemannian_metric(model: &FinslerModel, x: &[f64]) -> DMatrix<f64> {
    let n = model.dim;
    match &model.family {
        Family::Euclidean => DMatrix::identity(n, n),
        Family::ConstantRiemannian { a } => DMatrix::from_fn(n, n, |i, j| a[i][j]),
        Family::SphereStereographic => {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            DMatrix::identity(2, 2) * (4.0 / (1.0 + r2).powi(2))
        }
        Family::PoincareDisk => {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            DMatrix::identity(2, 2) * (4.0 / (1.0 - r2).powi(2))
        }
        Family::SpherePolar => DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, x[0].sin().powi(2)]),
        other => panic!("not a Riemannian family: {other:?}"),
    }
}

/// Christoffel symbols `Γⁱ_jk` in closed form.
pub fn christoffel(model: &FinslerModel, x: &[f64]) -> Tensor3 {
    let n = model.dim;
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    // conformal metric e^{2σ} δ: Γⁱ_jk = δⁱ_j σ_k + δⁱ_k σ_j − δ_jk σ_i
    let conformal = |sigma: Vec<f64>| {
        Tensor3::from_fn(n, |i, j, k| {
            delta(i, j) * sigma[k] + delta(i, k) * sigma[j] - delta(j, k) * sigma[i]
        })
    };
    match &model.family {
        Family::Euclidean | Family::ConstantRiemannian { .. } => Tensor3::zeros(n),
        Family::SphereStereographic => {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            conformal(x.iter().map(|v| -2.0 * v / (1.0 + r2)).collect())
        }
        Family::PoincareDisk => {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            conformal(x.iter().map(|v| 2.0 * v / (1.0 - r2)).collect())
        }
        Family::SpherePolar => {
            let (s, c) = x[0].sin_cos();
            let mut t = Tensor3::zeros(2);
            t.set(0, 1, 1, -s * c);
            t.set(1, 0, 1, c / s);
            t.set(1, 1, 0, c / s);
            t
        }
        other => panic!("not a Riemannian family: {other:?}"),
    }
}

/// `κ (δⁱ_k a_jl − δⁱ_l a_jk)`.
pub fn constant_curvature_riemann(kappa: f64, a: &DMatrix<f64>) -> Tensor4 {
    let n = a.nrows();
    let delta = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
    Tensor4::from_fn(n, |i, j, k, l| {
        kappa * (delta(i, k) * a[(j, l)] - delta(i, l) * a[(j, k)])
    })
}

/// Componentwise `max |a − b| / (1 + |b|)` with `b` the reference.
pub fn max_rel_err(actual: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(actual.len(), reference.len());
    actual
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
        .fold(0.0, f64::max)
}

fn unit(n: usize, k: usize) -> Vec<usize> {
    let mut e = vec![0; n];
    e[k] = 1;
    e
}

fn add(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().zip(b).map(|(p, q)| p + q).collect()
}

/// The Berwald tower reconstructed by finite differences.
pub struct FdTower {
    pub g: DMatrix<f64>,
    /// Spray from finite differences of `F²` only.
    pub spray_from_f2: Vec<f64>,
    pub nonlinear: DMatrix<f64>,
    pub berwald: Tensor3,
    pub berwald_curvature: Tensor4,
    pub affine_curvature: Tensor4,
    pub nonlinear_curvature: Tensor3,
}

/// Reconstructs the tower at `site`. `g` and the spray value come from
/// difference quotients of plain `F²` evaluations; `N`, `Γ`, `B`, `∂ₓΓ` and
/// `∂ₓN` come from difference quotients of the pointwise spray, and `H`,
/// `R` are assembled from those.
pub fn fd_tower(model: &FinslerModel, site: &PointedVector) -> Result<FdTower> {
    let n = model.dim;
    let zero = vec![0usize; n];
    let ynorm = site.y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let hy = 1e-2 * ynorm;
    let hx = 1e-2;

    let f2 = |x: &[f64], y: &[f64]| -> Result<f64> { Ok(model.f2(x, y)) };
    let dom = |x: &[f64]| model.in_domain(x);
    let step = |ax: &[usize], ay: &[usize]| -> f64 {
        let ox: usize = ax.iter().sum();
        let oy: usize = ay.iter().sum();
        if ox == 0 {
            hy
        } else if oy == 0 {
            hx
        } else {
            hx.min(hy)
        }
    };
    let d_f2 = |ax: &[usize], ay: &[usize]| fd_partial_fn(f2, dom, site, ax, ay, step(ax, ay));

    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = 0.5 * d_f2(&zero, &add(&unit(n, i), &unit(n, j)))?;
        }
    }
    let g_inv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| FinslerError::SingularMetric("finite-difference metric".into()))?;
    let mut rhs = vec![0.0; n];
    for (l, r) in rhs.iter_mut().enumerate() {
        let mut acc = -d_f2(&unit(n, l), &zero)?;
        for k in 0..n {
            acc += site.y[k] * d_f2(&unit(n, k), &unit(n, l))?;
        }
        *r = 0.25 * acc;
    }
    let spray_from_f2: Vec<f64> = (0..n).map(|i| (0..n).map(|l| g_inv[(i, l)] * rhs[l]).sum()).collect();

    let d_g = |i: usize, ax: &[usize], ay: &[usize]| -> Result<f64> {
        let f = |x: &[f64], y: &[f64]| -> Result<f64> {
            let s = PointedVector::new(x.to_vec(), y.to_vec())?;
            Ok(spray_coefficients(model, &s)?[i])
        };
        fd_partial_fn(f, dom, site, ax, ay, step(ax, ay))
    };

    let mut nonlinear = DMatrix::zeros(n, n);
    let mut berwald = Tensor3::zeros(n);
    let mut b = vec![0.0; n * n * n * n];
    let mut dx_gamma = vec![0.0; n * n * n * n];
    let mut dx_n = Tensor3::zeros(n);
    let idx4 = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    for i in 0..n {
        for j in 0..n {
            nonlinear[(i, j)] = d_g(i, &zero, &unit(n, j))?;
            for k in 0..n {
                dx_n.set(i, j, k, d_g(i, &unit(n, j), &unit(n, k))?);
                if k >= j {
                    let v = d_g(i, &zero, &add(&unit(n, j), &unit(n, k)))?;
                    berwald.set(i, j, k, v);
                    berwald.set(i, k, j, v);
                }
                for l in 0..n {
                    let jk = add(&unit(n, j), &unit(n, k));
                    b[idx4(i, j, k, l)] = d_g(i, &zero, &add(&jk, &unit(n, l)))?;
                    dx_gamma[idx4(i, j, k, l)] = d_g(i, &unit(n, l), &jk)?;
                }
            }
        }
    }
    let berwald_curvature = Tensor4::from_fn(n, |i, j, k, l| b[idx4(i, j, k, l)]);

    let delta_gamma = |i: usize, l: usize, j: usize, k: usize| -> f64 {
        let mut v = dx_gamma[idx4(i, l, j, k)];
        for m in 0..n {
            v -= nonlinear[(m, k)] * b[idx4(i, l, j, m)];
        }
        v
    };
    let affine_curvature = Tensor4::from_fn(n, |i, j, k, l| {
        let mut v = delta_gamma(i, l, j, k) - delta_gamma(i, k, j, l);
        for m in 0..n {
            v += berwald.get(m, l, j) * berwald.get(i, k, m) - berwald.get(m, k, j) * berwald.get(i, l, m);
        }
        v
    });
    let delta_n = |i: usize, j: usize, k: usize| -> f64 {
        let mut v = dx_n.get(i, j, k);
        for m in 0..n {
            v -= nonlinear[(m, j)] * berwald.get(i, k, m);
        }
        v
    };
    let nonlinear_curvature = Tensor3::from_fn(n, |i, j, k| delta_n(i, j, k) - delta_n(i, k, j));

    Ok(FdTower {
        g,
        spray_from_f2,
        nonlinear,
        berwald,
        berwald_curvature,
        affine_curvature,
        nonlinear_curvature,
    })
}

/// Seeded sites of `model` whose metric is comfortably nondegenerate, so the
/// finite-difference stencils stay in the smooth region.
pub fn oracle_sites(model: &FinslerModel, count: usize, seed: u64) -> Vec<PointedVector> {
    let mut rng = finsler::sampling::seeded(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let s = model.sample_site(&mut rng);
        if finsler::models::min_relative_eigenvalue(model, &s).unwrap_or(0.0) > 1e-2 {
            out.push(s);
        }
    }
    out
}

/// Seeded geodesic initial data `(p, v)` for which the geodesic stays well
/// inside the chart on `t ∈ [0, 5]`: start points near the chart centre and
/// a per-model speed `F(p, v)`.
pub fn geodesic_start(model: &FinslerModel, rng: &mut finsler::sampling::SampleRng) -> (Vec<f64>, Vec<f64>) {
    let (speed, centre_radius) = match model.name.as_str() {
        "s2" => (0.4, 0.5),
        "s2-polar" => (0.2, f64::INFINITY),
        "hyperbolic" => (1.0, 0.3),
        "randers-curved" => (0.1, 0.3),
        "flat-torus" => (0.2, f64::INFINITY),
        _ => (1.0, f64::INFINITY),
    };
    loop {
        let s = model.sample_site(rng);
        let r = s.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r > centre_radius {
            continue;
        }
        if model.name == "s2-polar" && !(1.2..1.9).contains(&s.x[0]) {
            continue;
        }
        if model.name == "flat-torus" && s.x.iter().any(|c| (c - std::f64::consts::PI).abs() > 1.0) {
            continue;
        }
        let f = model.norm(&s.x, &s.y);
        return (s.x, s.y.iter().map(|v| v * speed / f).collect());
    }
}

/// `g_x(u, w)` of a Riemannian built-in.
pub fn riemannian_inner(model: &FinslerModel, x: &[f64], u: &[f64], w: &[f64]) -> f64 {
    let a = riemannian_metric(model, x);
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * u[i] * w[j];
        }
    }
    s
}

/// Central-difference oracle for `(exp_p)_*` at `v` applied to `w`, built on
/// plain exponential-map evaluations.
pub fn fd_dexp(model: &FinslerModel, p: &[f64], v: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    use finsler::geodesic::{exp_map, Tolerance};
    let n = model.dim;
    let tol = Tolerance {
        rtol: 1e-13,
        atol: 1e-15,
    };
    let site = PointedVector::new(p.to_vec(), v.to_vec())?;
    let zero = vec![0usize; n];
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let f = |_x: &[f64], y: &[f64]| -> Result<f64> { Ok(exp_map(model, p, y, tol)?[i]) };
        for k in 0..n {
            let d = fd_partial_fn(f, |_| true, &site, &zero, &unit(n, k), 1e-2)?;
            *o += d * w[k];
        }
    }
    Ok(out)
}
