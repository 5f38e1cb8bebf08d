//! Truncated multivariate Taylor arithmetic over the slit tangent bundle.
//!
//! A [`TaylorScalar`] is a polynomial in the `2n` displacement variables
//! `(dx_1..dx_n, dy_1..dy_n)` around a base site `(x, y)`, truncated to the
//! monomials allowed by a [`Truncation`]. Coefficients are stored in Taylor
//! normalisation (`c_α = ∂^α f / α!`), so partial derivatives are recovered
//! by multiplying with `α!`.
//!
//! Differentiating a truncated series loses one order of accuracy. Each
//! value therefore carries its own [`Validity`], and every coefficient
//! outside it is kept at zero; requesting one is an `OrderExceeded` error
//! rather than a silently wrong number.

mod fd;
mod space;

pub use fd::{fd_partial, fd_partial_fn};
pub use space::{JetSpace, Truncation, Validity};

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FinslerError, Result};

/// Scalar type a Finsler program can be evaluated over: plain `f64` or a
/// truncated Taylor jet.
pub trait Scalar:
    Clone
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Constant term (plain evaluation at the base point).
    fn value(&self) -> f64;
    /// A constant living in the same arithmetic context as `self`.
    fn constant_like(&self, c: f64) -> Self;
    fn sqrt(&self) -> Self;
    fn powf(&self, p: f64) -> Self;
    fn powi(&self, k: i32) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn constant_like(&self, c: f64) -> Self {
        c
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn powf(&self, p: f64) -> Self {
        f64::powf(*self, p)
    }
    fn powi(&self, k: i32) -> Self {
        f64::powi(*self, k)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
}

/// A scalar program `(x, y) ↦ f(x, y)` on the tangent bundle of a chart.
pub trait SiteProgram {
    fn dim(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> S;
    /// Whether `x` lies in the chart where the program is smooth.
    fn in_domain(&self, _x: &[f64]) -> bool {
        true
    }
    /// Whether the program is known not to depend on `x`. Geodesic code
    /// uses this to skip the spray, which then vanishes identically.
    fn is_x_independent(&self) -> bool {
        false
    }
}

/// A point `(x, y)` of the slit tangent bundle: base point `x` with a
/// nonzero anchor direction `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointedVector {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PointedVector {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(FinslerError::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(FinslerError::Domain("non-finite site coordinate".into()));
        }
        if y.iter().all(|&v| v == 0.0) {
            return Err(FinslerError::Domain(
                "anchor direction y is zero (site not on the slit tangent bundle)".into(),
            ));
        }
        Ok(Self { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Same base point, anchor rescaled by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.x.clone(), self.y.iter().map(|v| v * s).collect())
    }
}

/// Which block of variables a derivative acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X(usize),
    Y(usize),
}

/// Truncated multivariate Taylor value.
#[derive(Clone)]
pub struct TaylorScalar {
    space: Arc<JetSpace>,
    coeffs: Vec<f64>,
    valid: Validity,
}

impl fmt::Debug for TaylorScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaylorScalar")
            .field("value", &self.coeffs[0])
            .field("terms", &self.coeffs.len())
            .field("valid", &self.valid)
            .finish()
    }
}

impl TaylorScalar {
    pub fn constant(space: &Arc<JetSpace>, c: f64) -> Self {
        let mut coeffs = vec![0.0; space.len()];
        coeffs[0] = c;
        Self {
            space: Arc::clone(space),
            coeffs,
            valid: space.truncation().validity(),
        }
    }

    /// The seeded variables `x_k + dx_k` and `y_k + dy_k` at `site`.
    pub fn variables(space: &Arc<JetSpace>, x: &[f64], y: &[f64]) -> (Vec<Self>, Vec<Self>) {
        let n = space.dim();
        assert_eq!(x.len(), n, "x has wrong dimension");
        assert_eq!(y.len(), n, "y has wrong dimension");
        let seed = |var: Var, base: f64| {
            let mut s = Self::constant(space, base);
            if let Some(i) = space.unit_index(var) {
                s.coeffs[i] = 1.0;
            }
            s
        };
        let xs = (0..n).map(|k| seed(Var::X(k), x[k])).collect();
        let ys = (0..n).map(|k| seed(Var::Y(k), y[k])).collect();
        (xs, ys)
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn validity(&self) -> Validity {
        self.valid
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// Taylor coefficient `∂^α f / α!` for `α = (ax, ay)`.
    pub fn coefficient(&self, ax: &[usize], ay: &[usize]) -> Result<f64> {
        let idx = self.space.index_of(ax, ay).ok_or_else(|| {
            FinslerError::OrderExceeded(format!(
                "multi-index x{ax:?} y{ay:?} is outside truncation {:?}",
                self.space.truncation()
            ))
        })?;
        let (ox, oy) = self.space.orders(idx);
        if !self.valid.contains(ox, oy) {
            return Err(FinslerError::OrderExceeded(format!(
                "multi-index x{ax:?} y{ay:?} is beyond the accuracy {:?} of this value",
                self.valid
            )));
        }
        Ok(self.coeffs[idx])
    }

    /// Partial derivative `∂^{ax}_x ∂^{ay}_y f` at the base site.
    pub fn derivative(&self, ax: &[usize], ay: &[usize]) -> Result<f64> {
        let c = self.coefficient(ax, ay)?;
        let fact: f64 = ax.iter().chain(ay).map(|&k| factorial(k)).product();
        Ok(c * fact)
    }

    /// Series of the partial derivative with respect to one variable.
    pub fn diff(&self, var: Var) -> Self {
        let mut out = vec![0.0; self.coeffs.len()];
        for &(src, dst, factor) in self.space.derivative_table(var) {
            out[dst as usize] += self.coeffs[src as usize] * factor;
        }
        let valid = self.valid.after_diff(var);
        let mut r = Self {
            space: Arc::clone(&self.space),
            coeffs: out,
            valid,
        };
        r.clear_invalid();
        r
    }

    /// True when every coefficient within the validity region is finite.
    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    fn clear_invalid(&mut self) {
        if self.valid.covers(&self.space.truncation()) {
            return;
        }
        for (i, c) in self.coeffs.iter_mut().enumerate() {
            let (ox, oy) = self.space.orders(i);
            if !self.valid.contains(ox, oy) {
                *c = 0.0;
            }
        }
    }

    fn same_space(&self, other: &Self) {
        debug_assert!(
            Arc::ptr_eq(&self.space, &other.space) || *self.space == *other.space,
            "mixing Taylor values from different jet spaces"
        );
    }

    /// `Σ_k derivs[k]/k! · (self − c0)^k`, the composition `f ∘ self` for an
    /// analytic `f` with derivatives `derivs` at the constant term.
    pub fn compose(&self, derivs: &[f64]) -> Self {
        let order = self.valid.total.max(0) as usize;
        let mut shifted = self.clone();
        shifted.coeffs[0] = 0.0;
        let coef = |k: usize| derivs.get(k).copied().unwrap_or(0.0) / factorial(k);
        let mut acc = TaylorScalar::constant(&self.space, coef(order));
        for k in (0..order).rev() {
            acc = acc * shifted.clone();
            acc.coeffs[0] += coef(k);
        }
        acc.valid = self.valid;
        acc.clear_invalid();
        acc
    }

    fn max_order(&self) -> usize {
        self.valid.total.max(0) as usize
    }

    fn recip(&self) -> Self {
        let c = self.coeffs[0];
        let derivs: Vec<f64> = (0..=self.max_order())
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * factorial(k) / c.powi(k as i32 + 1)
            })
            .collect();
        self.compose(&derivs)
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

impl Add for TaylorScalar {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.same_space(&rhs);
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
        self.valid = self.valid.min(rhs.valid);
        self.clear_invalid();
        self
    }
}

impl Sub for TaylorScalar {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self.same_space(&rhs);
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
        self.valid = self.valid.min(rhs.valid);
        self.clear_invalid();
        self
    }
}

impl Mul for TaylorScalar {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.same_space(&rhs);
        let mut out = vec![0.0; self.coeffs.len()];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for &(j, k) in self.space.mul_row(i) {
                out[k as usize] += a * rhs.coeffs[j as usize];
            }
        }
        let mut r = Self {
            space: self.space,
            coeffs: out,
            valid: self.valid.min(rhs.valid),
        };
        r.clear_invalid();
        r
    }
}

impl Div for TaylorScalar {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl Neg for TaylorScalar {
    type Output = Self;
    fn neg(mut self) -> Self {
        self.coeffs.iter_mut().for_each(|c| *c = -*c);
        self
    }
}

impl Add<f64> for TaylorScalar {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        self.coeffs[0] += rhs;
        self
    }
}

impl Sub<f64> for TaylorScalar {
    type Output = Self;
    fn sub(mut self, rhs: f64) -> Self {
        self.coeffs[0] -= rhs;
        self
    }
}

impl Mul<f64> for TaylorScalar {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        self.coeffs.iter_mut().for_each(|c| *c *= rhs);
        self
    }
}

impl Div<f64> for TaylorScalar {
    type Output = Self;
    fn div(mut self, rhs: f64) -> Self {
        self.coeffs.iter_mut().for_each(|c| *c /= rhs);
        self
    }
}

impl Scalar for TaylorScalar {
    fn value(&self) -> f64 {
        self.coeffs[0]
    }

    fn constant_like(&self, c: f64) -> Self {
        TaylorScalar::constant(&self.space, c)
    }

    fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    fn powf(&self, p: f64) -> Self {
        let c = self.coeffs[0];
        if c <= 0.0 && p.fract() != 0.0 {
            let mut r = self.clone();
            r.coeffs.iter_mut().for_each(|v| *v = f64::NAN);
            return r;
        }
        let mut falling = 1.0;
        let derivs: Vec<f64> = (0..=self.max_order())
            .map(|k| {
                if k > 0 {
                    falling *= p - (k as f64 - 1.0);
                }
                falling * c.powf(p - k as f64)
            })
            .collect();
        self.compose(&derivs)
    }

    fn powi(&self, k: i32) -> Self {
        if k < 0 {
            return self.powi(-k).recip();
        }
        let mut acc = self.constant_like(1.0);
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }

    fn exp(&self) -> Self {
        let e = self.coeffs[0].exp();
        self.compose(&vec![e; self.max_order() + 1])
    }

    fn ln(&self) -> Self {
        let c = self.coeffs[0];
        let derivs: Vec<f64> = (0..=self.max_order())
            .map(|k| match k {
                0 => c.ln(),
                _ => {
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    sign * factorial(k - 1) / c.powi(k as i32)
                }
            })
            .collect();
        self.compose(&derivs)
    }

    fn sin(&self) -> Self {
        let (s, c) = self.coeffs[0].sin_cos();
        let cycle = [s, c, -s, -c];
        let derivs: Vec<f64> = (0..=self.max_order()).map(|k| cycle[k % 4]).collect();
        self.compose(&derivs)
    }

    fn cos(&self) -> Self {
        let (s, c) = self.coeffs[0].sin_cos();
        let cycle = [c, -s, -c, s];
        let derivs: Vec<f64> = (0..=self.max_order()).map(|k| cycle[k % 4]).collect();
        self.compose(&derivs)
    }
}

/// Evaluates `program` over Taylor jets at `site` with the given truncation.
pub fn jet<P: SiteProgram>(program: &P, site: &PointedVector, trunc: Truncation) -> Result<TaylorScalar> {
    let n = program.dim();
    if site.dim() != n {
        return Err(FinslerError::DimensionMismatch {
            expected: n,
            got: site.dim(),
        });
    }
    if !program.in_domain(&site.x) {
        return Err(FinslerError::Domain(format!("x = {:?} is outside the chart", site.x)));
    }
    let space = JetSpace::shared(n, trunc);
    let (xs, ys) = TaylorScalar::variables(&space, &site.x, &site.y);
    let out = program.eval(&xs, &ys);
    if !out.is_finite() {
        return Err(FinslerError::Domain(format!(
            "program is not smooth at x = {:?}, y = {:?}",
            site.x, site.y
        )));
    }
    Ok(out)
}

/// Largest orders `partial` accepts unless a wider truncation is configured.
pub const DEFAULT_PARTIAL_LIMIT: Truncation = Truncation {
    max_x: 2,
    max_y: 5,
    max_total: 7,
};

/// `∂^{ax}_x ∂^{ay}_y program(x, y)` at `site`, exact up to rounding.
pub fn partial<P: SiteProgram>(program: &P, site: &PointedVector, ax: &[usize], ay: &[usize]) -> Result<f64> {
    partial_with_limit(program, site, ax, ay, DEFAULT_PARTIAL_LIMIT)
}

pub fn partial_with_limit<P: SiteProgram>(
    program: &P,
    site: &PointedVector,
    ax: &[usize],
    ay: &[usize],
    limit: Truncation,
) -> Result<f64> {
    let n = program.dim();
    if ax.len() != n || ay.len() != n {
        return Err(FinslerError::DimensionMismatch {
            expected: n,
            got: ax.len().min(ay.len()),
        });
    }
    let ox: usize = ax.iter().sum();
    let oy: usize = ay.iter().sum();
    if ox > limit.max_x || oy > limit.max_y || ox + oy > limit.max_total {
        return Err(FinslerError::OrderExceeded(format!(
            "orders (x: {ox}, y: {oy}) exceed limit {limit:?}"
        )));
    }
    let trunc = Truncation {
        max_x: ox,
        max_y: oy,
        max_total: ox + oy,
    };
    jet(program, site, trunc)?.derivative(ax, ay)
}
