//! Central finite differences with Richardson extrapolation, used as an
//! independent oracle for the Taylor arithmetic.
//!
//! Each variable differentiated `k` times uses the second-order accurate
//! central stencil for the `k`-th derivative; mixed partials use the tensor
//! product of those stencils. Combining steps `h` and `h/2` as
//! `(4 D(h/2) − D(h)) / 3` removes the `h²` term, leaving `O(h⁴)`.

use super::{PointedVector, SiteProgram};
use crate::error::{FinslerError, Result};

/// Offsets (in units of the step) and weights of the central stencil for the
/// `k`-th derivative, before division by `h^k`.
fn stencil(k: usize) -> &'static [(f64, f64)] {
    match k {
        0 => &[(0.0, 1.0)],
        1 => &[(-1.0, -0.5), (1.0, 0.5)],
        2 => &[(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)],
        3 => &[(-2.0, -0.5), (-1.0, 1.0), (1.0, -1.0), (2.0, 0.5)],
        4 => &[(-2.0, 1.0), (-1.0, -4.0), (0.0, 6.0), (1.0, -4.0), (2.0, 1.0)],
        5 => &[
            (-3.0, -0.5),
            (-2.0, 2.0),
            (-1.0, -2.5),
            (1.0, 2.5),
            (2.0, -2.0),
            (3.0, 0.5),
        ],
        _ => &[],
    }
}

const MAX_FD_ORDER: usize = 5;

/// Finite-difference partial of a plain function of `(x, y)`.
///
/// `f` may fail (e.g. outside its domain); `in_domain` is consulted for every
/// stencil base point before evaluation.
pub fn fd_partial_fn<F, D>(
    f: F,
    in_domain: D,
    site: &PointedVector,
    ax: &[usize],
    ay: &[usize],
    step: f64,
) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
    D: Fn(&[f64]) -> bool,
{
    let n = site.dim();
    if ax.len() != n || ay.len() != n {
        return Err(FinslerError::DimensionMismatch {
            expected: n,
            got: ax.len().min(ay.len()),
        });
    }
    if let Some(&k) = ax.iter().chain(ay).find(|&&k| k > MAX_FD_ORDER) {
        return Err(FinslerError::OrderExceeded(format!(
            "finite-difference stencils go up to order {MAX_FD_ORDER}, requested {k}"
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(FinslerError::StepUnderflow(step));
    }
    let coords: Vec<f64> = site.x.iter().chain(&site.y).copied().collect();
    let orders: Vec<usize> = ax.iter().chain(ay).copied().collect();
    let half = 0.5 * step;
    for (c, &k) in coords.iter().zip(&orders) {
        if k > 0 && (c + half == *c || half < f64::MIN_POSITIVE) {
            return Err(FinslerError::StepUnderflow(step));
        }
    }

    let coarse = difference(&f, &in_domain, &coords, &orders, n, step)?;
    let fine = difference(&f, &in_domain, &coords, &orders, n, half)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Finite-difference partial of a site program evaluated in `f64`.
pub fn fd_partial<P: SiteProgram>(
    program: &P,
    site: &PointedVector,
    ax: &[usize],
    ay: &[usize],
    step: f64,
) -> Result<f64> {
    fd_partial_fn(
        |x, y| Ok(program.eval::<f64>(x, y)),
        |x| program.in_domain(x),
        site,
        ax,
        ay,
        step,
    )
}

fn difference<F, D>(f: &F, in_domain: &D, coords: &[f64], orders: &[usize], n: usize, h: f64) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
    D: Fn(&[f64]) -> bool,
{
    let active: Vec<(usize, &'static [(f64, f64)])> = orders
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(v, &k)| (v, stencil(k)))
        .collect();
    let total: usize = orders.iter().sum();

    let mut sum = 0.0;
    let mut cursor = vec![0usize; active.len()];
    let mut point = coords.to_vec();
    loop {
        let mut weight = 1.0;
        point.copy_from_slice(coords);
        for (slot, &(v, st)) in active.iter().enumerate() {
            let (offset, w) = st[cursor[slot]];
            point[v] += offset * h;
            weight *= w;
        }
        if !in_domain(&point[..n]) {
            return Err(FinslerError::StencilOutsideChart);
        }
        sum += weight * f(&point[..n], &point[n..])?;

        // odometer over the tensor-product stencil
        let mut slot = 0;
        loop {
            if slot == active.len() {
                return Ok(sum / h.powi(total as i32));
            }
            cursor[slot] += 1;
            if cursor[slot] < active[slot].1.len() {
                break;
            }
            cursor[slot] = 0;
            slot += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::Scalar;

    struct Product;
    impl SiteProgram for Product {
        fn dim(&self) -> usize {
            2
        }
        fn eval<S: Scalar>(&self, _x: &[S], y: &[S]) -> S {
            y[0].clone() * y[1].clone()
        }
    }

    struct ExpY;
    impl SiteProgram for ExpY {
        fn dim(&self) -> usize {
            2
        }
        fn eval<S: Scalar>(&self, _x: &[S], y: &[S]) -> S {
            y[0].exp()
        }
    }

    struct Disk;
    impl SiteProgram for Disk {
        fn dim(&self) -> usize {
            2
        }
        fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
            x[0].clone() * y[0].square()
        }
        fn in_domain(&self, x: &[f64]) -> bool {
            x[0] * x[0] + x[1] * x[1] < 1.0
        }
    }

    #[test]
    fn mixed_product_derivative() {
        let s = PointedVector::new(vec![0.0, 0.0], vec![0.3, -0.7]).unwrap();
        let d = fd_partial(&Product, &s, &[0, 0], &[1, 1], 1e-2).unwrap();
        assert!((d - 1.0).abs() < 1e-10);
    }

    #[test]
    fn third_derivative_of_exp() {
        let s = PointedVector::new(vec![0.0, 0.0], vec![0.0, 1.0]).unwrap();
        let d = fd_partial(&ExpY, &s, &[0, 0], &[3, 0], 1e-2).unwrap();
        assert!((d - 1.0).abs() < 1e-6, "{d}");
    }

    #[test]
    fn fifth_derivative_of_exp() {
        let s = PointedVector::new(vec![0.0, 0.0], vec![0.2, 1.0]).unwrap();
        let d = fd_partial(&ExpY, &s, &[0, 0], &[5, 0], 5e-2).unwrap();
        assert!((d - 0.2f64.exp()).abs() < 1e-4, "{d}");
    }

    #[test]
    fn stencil_outside_chart() {
        let s = PointedVector::new(vec![0.999, 0.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(
            fd_partial(&Disk, &s, &[1, 0], &[0, 0], 1e-2).unwrap_err(),
            FinslerError::StencilOutsideChart
        );
    }

    #[test]
    fn step_underflow() {
        let s = PointedVector::new(vec![0.0, 0.0], vec![1e10, 1.0]).unwrap();
        assert!(matches!(
            fd_partial(&Product, &s, &[0, 0], &[1, 0], 1e-12),
            Err(FinslerError::StepUnderflow(_))
        ));
        assert!(matches!(
            fd_partial(&Product, &s, &[0, 0], &[1, 0], 0.0),
            Err(FinslerError::StepUnderflow(_))
        ));
    }
}
