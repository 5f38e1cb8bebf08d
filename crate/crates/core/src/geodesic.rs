//! Geodesic flow, exponential map, Berwald parallel transport and Jacobi
//! fields.
//!
//! Every field along a geodesic is integrated together with the geodesic
//! itself as one first-order system, so the connection coefficients are
//! always evaluated at the exact integrator state.
//!
//! Jacobi fields use the state `(J, P)` with `P = D_ċJ = J̇ + N J`:
//! `J̇ = P − N J`, `Ṗ = −K J − N P`, where `Kⁱ_k = Hⁱ_jkl ċʲ ċˡ`.

use std::io::{self, Write};

use nalgebra::DMatrix;

use crate::berwald::{jacobi_coefficients, nonlinear_connection, spray_coefficients, transport_coefficients};
use crate::error::{FinslerError, Result};
use crate::jets::{PointedVector, SiteProgram};
use crate::ode::{dopri5, IntegratorStats, OdeSolution, StopReason};

pub use crate::ode::Tolerance;

/// A geodesic `t ↦ (x(t), ẋ(t))` on `[0, t_end]` with cubic Hermite dense
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    positions: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
    accelerations: Vec<Vec<f64>>,
    pub stats: IntegratorStats,
    /// Set when the geodesic left the chart before the requested end time;
    /// the trajectory then stops at the last accepted state.
    pub boundary_exit: bool,
    pub requested_end: f64,
    pub tolerance: Tolerance,
}

/// Order of the dense-output interpolant.
pub const INTERPOLATION_ORDER: usize = 3;

fn hermite(t0: f64, t1: f64, y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], t: f64) -> Vec<f64> {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = (s3 - 2.0 * s2 + s) * h;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = (s3 - s2) * h;
    (0..y0.len())
        .map(|i| h00 * y0[i] + h10 * f0[i] + h01 * y1[i] + h11 * f1[i])
        .collect()
}

impl Trajectory {
    fn from_solution(sol: &OdeSolution, dim: usize, requested_end: f64, tolerance: Tolerance) -> Self {
        Self {
            dim,
            times: sol.times.clone(),
            positions: sol.states.iter().map(|s| s[..dim].to_vec()).collect(),
            velocities: sol.states.iter().map(|s| s[dim..2 * dim].to_vec()).collect(),
            accelerations: sol.derivatives.iter().map(|d| d[dim..2 * dim].to_vec()).collect(),
            stats: sol.stats,
            boundary_exit: sol.stop == StopReason::LeftDomain,
            requested_end,
            tolerance,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sample times `t₀ = 0 < … < t_K` (accepted integrator steps).
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k]
    }

    pub fn velocity(&self, k: usize) -> &[f64] {
        &self.velocities[k]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn start(&self) -> PointedVector {
        PointedVector {
            x: self.positions[0].clone(),
            y: self.velocities[0].clone(),
        }
    }

    pub fn end_position(&self) -> &[f64] {
        self.positions.last().expect("nonempty")
    }

    pub fn end_velocity(&self) -> &[f64] {
        self.velocities.last().expect("nonempty")
    }

    fn segment(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.clamp(1, self.times.len() - 1) - 1
    }

    /// Interpolated position (clamped to `[0, t_end]`).
    pub fn position_at(&self, t: f64) -> Vec<f64> {
        if self.times.len() == 1 {
            return self.positions[0].clone();
        }
        let t = t.clamp(0.0, self.t_end());
        let k = self.segment(t);
        hermite(
            self.times[k],
            self.times[k + 1],
            &self.positions[k],
            &self.velocities[k],
            &self.positions[k + 1],
            &self.velocities[k + 1],
            t,
        )
    }

    /// Interpolated velocity (clamped to `[0, t_end]`).
    pub fn velocity_at(&self, t: f64) -> Vec<f64> {
        if self.times.len() == 1 {
            return self.velocities[0].clone();
        }
        let t = t.clamp(0.0, self.t_end());
        let k = self.segment(t);
        hermite(
            self.times[k],
            self.times[k + 1],
            &self.velocities[k],
            &self.accelerations[k],
            &self.velocities[k + 1],
            &self.accelerations[k + 1],
            t,
        )
    }

    /// `max_k |F(x_k, ẋ_k) − F(x₀, ẋ₀)|` over the accepted steps.
    pub fn speed_drift<M: SiteProgram>(&self, model: &M) -> f64 {
        let f = |k: usize| {
            model
                .eval::<f64>(&self.positions[k], &self.velocities[k])
                .max(0.0)
                .sqrt()
        };
        let f0 = f(0);
        (0..self.len()).map(|k| (f(k) - f0).abs()).fold(0.0, f64::max)
    }

    /// CSV with columns `t, x1.., xdot1.., drift` where `drift = |F − F₀|`;
    /// numbers are written with 17 significant digits.
    pub fn write_csv<M: SiteProgram, W: Write>(&self, model: &M, mut out: W) -> io::Result<()> {
        let n = self.dim;
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("xdot{i}")));
        header.push("drift".into());
        writeln!(out, "{}", header.join(","))?;
        let f = |k: usize| {
            model
                .eval::<f64>(&self.positions[k], &self.velocities[k])
                .max(0.0)
                .sqrt()
        };
        let f0 = f(0);
        for k in 0..self.len() {
            let mut row = vec![format!("{:.16e}", self.times[k])];
            row.extend(self.positions[k].iter().map(|v| format!("{v:.16e}")));
            row.extend(self.velocities[k].iter().map(|v| format!("{v:.16e}")));
            row.push(format!("{:.16e}", (f(k) - f0).abs()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_start<M: SiteProgram>(model: &M, p: &[f64], v: &[f64]) -> Result<()> {
    let n = model.dim();
    if p.len() != n || v.len() != n {
        return Err(FinslerError::DimensionMismatch {
            expected: n,
            got: if p.len() != n { p.len() } else { v.len() },
        });
    }
    if !model.in_domain(p) {
        return Err(FinslerError::Domain(format!("start point {p:?} is outside the chart")));
    }
    if v.iter().all(|&c| c == 0.0) {
        return Err(FinslerError::Precondition("initial velocity must be nonzero".into()));
    }
    Ok(())
}

fn site(x: &[f64], y: &[f64]) -> Result<PointedVector> {
    PointedVector::new(x.to_vec(), y.to_vec())
}

/// Integrates the geodesic equation together with `extra` further
/// components whose derivatives `extra_rhs` computes from `(x, ẋ, extra)`.
fn integrate_coupled<M, R>(
    model: &M,
    p: &[f64],
    v: &[f64],
    extra0: &[f64],
    t_end: f64,
    tol: Tolerance,
    mut extra_rhs: R,
) -> Result<OdeSolution>
where
    M: SiteProgram,
    R: FnMut(&[f64], &[f64], &[f64], &mut [f64]) -> Result<Vec<f64>>,
{
    check_start(model, p, v)?;
    let n = model.dim();
    let mut y0 = p.to_vec();
    y0.extend_from_slice(v);
    y0.extend_from_slice(extra0);
    dopri5(
        |_, z, dz| {
            let (x, rest) = z.split_at(n);
            let (xd, extra) = rest.split_at(n);
            let (dx, drest) = dz.split_at_mut(n);
            let (dxd, dextra) = drest.split_at_mut(n);
            dx.copy_from_slice(xd);
            let spray = extra_rhs(x, xd, extra, dextra)?;
            for i in 0..n {
                dxd[i] = -2.0 * spray[i];
            }
            Ok(())
        },
        0.0,
        &y0,
        t_end,
        tol,
        |z| model.in_domain(&z[..n]),
    )
}

/// Solves `ẍⁱ + 2Gⁱ(x, ẋ) = 0` with `x(0) = p`, `ẋ(0) = v` on `[0, t_end]`.
///
/// Leaving the chart is not an error: the trajectory is truncated and
/// flagged with [`Trajectory::boundary_exit`].
pub fn geodesic_ivp<M: SiteProgram>(model: &M, p: &[f64], v: &[f64], t_end: f64, tol: Tolerance) -> Result<Trajectory> {
    let n = model.dim();
    let flat = model.is_x_independent();
    let sol = integrate_coupled(model, p, v, &[], t_end, tol, |x, xd, _, _| {
        if flat {
            Ok(vec![0.0; n])
        } else {
            spray_coefficients(model, &site(x, xd)?)
        }
    })?;
    Ok(Trajectory::from_solution(&sol, n, t_end, tol))
}

fn require_complete(traj: &Trajectory) -> Result<()> {
    if traj.boundary_exit {
        Err(FinslerError::ChartExit(traj.t_end()))
    } else {
        Ok(())
    }
}

/// `exp_p(v) = c(1)` for the geodesic with `c(0) = p`, `ċ(0) = v`;
/// `exp_p(0) = p`.
pub fn exp_map<M: SiteProgram>(model: &M, p: &[f64], v: &[f64], tol: Tolerance) -> Result<Vec<f64>> {
    if v.iter().all(|&c| c == 0.0) {
        check_start(model, p, &vec![1.0; model.dim()])?;
        return Ok(p.to_vec());
    }
    let traj = geodesic_ivp(model, p, v, 1.0, tol)?;
    require_complete(&traj)?;
    Ok(traj.end_position().to_vec())
}

/// A vector field sampled along a geodesic, with dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldAlong {
    pub trajectory: Trajectory,
    values: Vec<Vec<f64>>,
    rates: Vec<Vec<f64>>,
}

impl FieldAlong {
    fn from_solution(sol: &OdeSolution, n: usize, offset: usize, requested_end: f64, tol: Tolerance) -> Self {
        Self {
            trajectory: Trajectory::from_solution(sol, n, requested_end, tol),
            values: sol.states.iter().map(|s| s[offset..offset + n].to_vec()).collect(),
            rates: sol.derivatives.iter().map(|d| d[offset..offset + n].to_vec()).collect(),
        }
    }

    /// Field value at the `k`-th sample time.
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    /// Coordinate derivative `Ẋ` at the `k`-th sample time.
    pub fn rate(&self, k: usize) -> &[f64] {
        &self.rates[k]
    }

    pub fn end_value(&self) -> &[f64] {
        self.values.last().expect("nonempty")
    }

    /// Interpolated field value (clamped to the trajectory's time range).
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let tr = &self.trajectory;
        if tr.len() == 1 {
            return self.values[0].clone();
        }
        let t = t.clamp(0.0, tr.t_end());
        let k = tr.segment(t);
        hermite(
            tr.times[k],
            tr.times[k + 1],
            &self.values[k],
            &self.rates[k],
            &self.values[k + 1],
            &self.rates[k + 1],
            t,
        )
    }
}

/// Parallel field `X` along a geodesic `c`.
pub type TransportedField = FieldAlong;

/// Direction at which the Berwald coefficients are evaluated while
/// transporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportReference {
    /// `Ẋⁱ + Gⁱ_jk(c, X) ċʲ Xᵏ = 0`, i.e. `(c, X)` is a horizontal curve of
    /// the nonlinear connection. `F(c, X)` is then constant.
    Field,
    /// `Ẋⁱ + Gⁱ_jk(c, ċ) ċʲ Xᵏ = 0`, linear in `X`. Agrees with `Field` on
    /// Berwald models (where `Gⁱ_jk` does not depend on the direction).
    Velocity,
}

/// Jacobi field `J` along a geodesic; `derivative` holds `D_ċJ`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiField {
    pub field: FieldAlong,
    pub derivative: FieldAlong,
}

impl JacobiField {
    pub fn trajectory(&self) -> &Trajectory {
        &self.field.trajectory
    }
}

/// Parallel transport of `w0` along the geodesic that `trajectory`
/// represents, with [`TransportReference::Field`].
pub fn parallel_transport<M: SiteProgram>(model: &M, trajectory: &Trajectory, w0: &[f64]) -> Result<TransportedField> {
    parallel_transport_with(model, trajectory, w0, TransportReference::Field)
}

/// Parallel transport over the trajectory's time range; the geodesic is
/// re-integrated in the coupled system.
pub fn parallel_transport_with<M: SiteProgram>(
    model: &M,
    trajectory: &Trajectory,
    w0: &[f64],
    reference: TransportReference,
) -> Result<TransportedField> {
    let n = model.dim();
    if w0.len() != n {
        return Err(FinslerError::DimensionMismatch {
            expected: n,
            got: w0.len(),
        });
    }
    if w0.iter().all(|&c| c == 0.0) {
        return Err(FinslerError::Precondition("transported vector must be nonzero".into()));
    }
    let start = trajectory.start();
    let flat = model.is_x_independent();
    let sol = integrate_coupled(
        model,
        &start.x,
        &start.y,
        w0,
        trajectory.t_end(),
        trajectory.tolerance,
        |x, xd, w, dw| {
            if flat {
                dw.iter_mut().for_each(|v| *v = 0.0);
                return Ok(vec![0.0; n]);
            }
            match reference {
                TransportReference::Field => {
                    // Gⁱ_jk(c, X) Xᵏ = Nⁱ_j(c, X)
                    let nl = nonlinear_connection(model, &site(x, w)?)?;
                    for (i, d) in dw.iter_mut().enumerate() {
                        *d = -(0..n).map(|j| nl[(i, j)] * xd[j]).sum::<f64>();
                    }
                    spray_coefficients(model, &site(x, xd)?)
                }
                TransportReference::Velocity => {
                    let c = transport_coefficients(model, &site(x, xd)?)?;
                    for (i, d) in dw.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for j in 0..n {
                            for k in 0..n {
                                acc += c.berwald.get(i, j, k) * xd[j] * w[k];
                            }
                        }
                        *d = -acc;
                    }
                    Ok(c.spray)
                }
            }
        },
    )?;
    Ok(FieldAlong::from_solution(
        &sol,
        n,
        2 * n,
        trajectory.requested_end,
        trajectory.tolerance,
    ))
}

/// Right-hand side of `m` Jacobi systems `(J_c, P_c)` sharing one geodesic,
/// laid out as `[J_1, P_1, …, J_m, P_m]`.
fn jacobi_rhs<M: SiteProgram>(model: &M, x: &[f64], xd: &[f64], jp: &[f64], djp: &mut [f64]) -> Result<Vec<f64>> {
    let n = model.dim();
    if model.is_x_independent() {
        // N = K = 0: J̇ = P, Ṗ = 0
        for (blk, dblk) in jp.chunks(2 * n).zip(djp.chunks_mut(2 * n)) {
            dblk[..n].copy_from_slice(&blk[n..]);
            dblk[n..].iter_mut().for_each(|v| *v = 0.0);
        }
        return Ok(vec![0.0; n]);
    }
    let c = jacobi_coefficients(model, &site(x, xd)?)?;
    for (blk, dblk) in jp.chunks(2 * n).zip(djp.chunks_mut(2 * n)) {
        let (j, p) = blk.split_at(n);
        let (dj, dp) = dblk.split_at_mut(n);
        for i in 0..n {
            let mut nj = 0.0;
            let mut np = 0.0;
            let mut kj = 0.0;
            for k in 0..n {
                nj += c.nonlinear[(i, k)] * j[k];
                np += c.nonlinear[(i, k)] * p[k];
                kj += c.operator[(i, k)] * j[k];
            }
            dj[i] = p[i] - nj;
            dp[i] = -kj - np;
        }
    }
    Ok(c.spray)
}

/// Jacobi field along the geodesic of `trajectory` with `J(0) = j0` and
/// `D_ċJ(0) = j0dot`, solving `D_ċD_ċJ + K J = 0`.
pub fn jacobi_field<M: SiteProgram>(
    model: &M,
    trajectory: &Trajectory,
    j0: &[f64],
    j0dot: &[f64],
) -> Result<JacobiField> {
    let n = model.dim();
    if j0.len() != n || j0dot.len() != n {
        return Err(FinslerError::DimensionMismatch {
            expected: n,
            got: j0.len().min(j0dot.len()),
        });
    }
    let start = trajectory.start();
    let mut extra = j0.to_vec();
    extra.extend_from_slice(j0dot);
    let sol = integrate_coupled(
        model,
        &start.x,
        &start.y,
        &extra,
        trajectory.t_end(),
        trajectory.tolerance,
        |x, xd, jp, djp| jacobi_rhs(model, x, xd, jp, djp),
    )?;
    Ok(JacobiField {
        field: FieldAlong::from_solution(&sol, n, 2 * n, trajectory.requested_end, trajectory.tolerance),
        derivative: FieldAlong::from_solution(&sol, n, 3 * n, trajectory.requested_end, trajectory.tolerance),
    })
}

/// `(exp_p)_*` at `v` applied to `w`: `J(1)` for the Jacobi field along
/// `t ↦ exp_p(tv)` with `J(0) = 0`, `D_ċJ(0) = w`. At `v = 0` this is `w`.
pub fn dexp<M: SiteProgram>(model: &M, p: &[f64], v: &[f64], w: &[f64], tol: Tolerance) -> Result<Vec<f64>> {
    if v.iter().all(|&c| c == 0.0) {
        check_start(model, p, &vec![1.0; model.dim()])?;
        return Ok(w.to_vec());
    }
    let traj = geodesic_ivp(model, p, v, 1.0, tol)?;
    require_complete(&traj)?;
    let j = jacobi_field(model, &traj, &vec![0.0; model.dim()], w)?;
    require_complete(j.trajectory())?;
    Ok(j.field.end_value().to_vec())
}

/// `exp_p(v)` together with the full differential `(exp_p)_*` at `v`
/// (column `c` is the image of the `c`-th coordinate vector), from one
/// coupled integration.
pub fn exp_with_differential<M: SiteProgram>(
    model: &M,
    p: &[f64],
    v: &[f64],
    tol: Tolerance,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = model.dim();
    if v.iter().all(|&c| c == 0.0) {
        check_start(model, p, &vec![1.0; n])?;
        return Ok((p.to_vec(), DMatrix::identity(n, n)));
    }
    let mut extra = vec![0.0; 2 * n * n];
    for c in 0..n {
        extra[2 * n * c + n + c] = 1.0;
    }
    let sol = integrate_coupled(model, p, v, &extra, 1.0, tol, |x, xd, jp, djp| {
        jacobi_rhs(model, x, xd, jp, djp)
    })?;
    if sol.stop == StopReason::LeftDomain {
        return Err(FinslerError::ChartExit(sol.t_end()));
    }
    let end = sol.last_state();
    let mat = DMatrix::from_fn(n, n, |i, c| end[2 * n + 2 * n * c + i]);
    Ok((end[..n].to_vec(), mat))
}

/// A piecewise-smooth parametrised curve.
pub trait Curve {
    fn dim(&self) -> usize;
    /// Parameter values splitting the curve into smooth pieces, including
    /// both ends.
    fn breakpoints(&self) -> Vec<f64>;
    fn position(&self, t: f64) -> Vec<f64>;
    fn velocity(&self, t: f64) -> Vec<f64>;
}

/// Straight segments through the given points, parameter `k` at point `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Vec<f64>>,
}

impl Polyline {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.first().map(|p| p.len()).unwrap_or(0);
        if points.is_empty() || points.iter().any(|p| p.len() != n) {
            return Err(FinslerError::Precondition(
                "polyline needs points of one dimension".into(),
            ));
        }
        Ok(Self { points })
    }

    fn piece(&self, t: f64) -> (usize, f64) {
        let m = self.points.len() - 1;
        if m == 0 {
            return (0, 0.0);
        }
        let k = (t.floor().max(0.0) as usize).min(m - 1);
        (k, t - k as f64)
    }
}

impl Curve for Polyline {
    fn dim(&self) -> usize {
        self.points[0].len()
    }

    fn breakpoints(&self) -> Vec<f64> {
        (0..self.points.len()).map(|k| k as f64).collect()
    }

    fn position(&self, t: f64) -> Vec<f64> {
        let (k, s) = self.piece(t);
        if self.points.len() == 1 {
            return self.points[0].clone();
        }
        let (a, b) = (&self.points[k], &self.points[k + 1]);
        a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect()
    }

    fn velocity(&self, t: f64) -> Vec<f64> {
        let (k, _) = self.piece(t);
        if self.points.len() == 1 {
            return vec![0.0; self.dim()];
        }
        let (a, b) = (&self.points[k], &self.points[k + 1]);
        a.iter().zip(b).map(|(p, q)| q - p).collect()
    }
}

impl Curve for Trajectory {
    fn dim(&self) -> usize {
        self.dim
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.times.clone()
    }

    fn position(&self, t: f64) -> Vec<f64> {
        self.position_at(t)
    }

    fn velocity(&self, t: f64) -> Vec<f64> {
        self.velocity_at(t)
    }
}

// Gauss–Kronrod 7/15 nodes on [-1, 1] (non-negative half) and weights.
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for nodes 1, 3, 5, 7 of GK_NODES
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = G_WEIGHTS[3] * fc;
    for k in 0..7 {
        let s = f(c - r * GK_NODES[k]) + f(c + r * GK_NODES[k]);
        kronrod += GK_WEIGHTS[k] * s;
        if k % 2 == 1 {
            gauss += G_WEIGHTS[k / 2] * s;
        }
    }
    (kronrod * r, ((kronrod - gauss) * r).abs())
}

/// Adaptive Gauss–Kronrod quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
        let (v, err) = gauss_kronrod(f, a, b);
        if err <= tol || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth - 1) + recurse(f, m, b, 0.5 * tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    recurse(f, a, b, abs_tol, 30)
}

/// `L(γ) = ∫ F(γ, γ̇) dt`, integrated piece by piece.
pub fn curve_length<M: SiteProgram, C: Curve + ?Sized>(model: &M, curve: &C) -> f64 {
    let bps = curve.breakpoints();
    bps.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let f = |t: f64| {
                // evaluate strictly inside the piece so the velocity is that piece's
                let t = t.clamp(a + 1e-12 * (b - a), b - 1e-12 * (b - a));
                model
                    .eval::<f64>(&curve.position(t), &curve.velocity(t))
                    .max(0.0)
                    .sqrt()
            };
            integrate(&f, a, b, 1e-13)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FinslerModel;

    #[test]
    fn gauss_kronrod_is_exact_on_polynomials() {
        let total: f64 = GK_WEIGHTS[..7].iter().sum::<f64>() * 2.0 + GK_WEIGHTS[7];
        assert!((total - 2.0).abs() < 1e-15);
        let g: f64 = G_WEIGHTS[..3].iter().sum::<f64>() * 2.0 + G_WEIGHTS[3];
        assert!((g - 2.0).abs() < 1e-15);
        let (v, _) = gauss_kronrod(&|t: f64| t.powi(20), 0.0, 1.0);
        assert!((v - 1.0 / 21.0).abs() < 1e-15);
        assert!((integrate(&|t: f64| t.sin(), 0.0, std::f64::consts::PI, 1e-14) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn segment_lengths() {
        let e = FinslerModel::euclidean(2);
        let seg = Polyline::new(vec![vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert!((curve_length(&e, &seg) - 5.0).abs() < 1e-14);
        let r = FinslerModel::builtin("randers-flat").unwrap();
        let fwd = Polyline::new(vec![vec![1.0, 1.0], vec![2.0, 1.0]]).unwrap();
        let bwd = Polyline::new(vec![vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!((curve_length(&r, &fwd) - 1.5).abs() < 1e-14);
        assert!((curve_length(&r, &bwd) - 0.5).abs() < 1e-14);
        let point = Polyline::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(curve_length(&r, &point), 0.0);
    }

    #[test]
    fn exp_at_zero_and_outside() {
        let s2 = FinslerModel::sphere_stereographic();
        assert_eq!(
            exp_map(&s2, &[0.2, 0.1], &[0.0, 0.0], Tolerance::default()).unwrap(),
            vec![0.2, 0.1]
        );
        let h = FinslerModel::poincare_disk();
        assert!(matches!(
            exp_map(&h, &[2.0, 0.0], &[1.0, 0.0], Tolerance::default()),
            Err(FinslerError::Domain(_))
        ));
        assert!(matches!(
            geodesic_ivp(&h, &[0.0, 0.0], &[0.0, 0.0], 1.0, Tolerance::default()),
            Err(FinslerError::Precondition(_))
        ));
    }

    #[test]
    fn chart_exit_truncates() {
        // flat torus box (0, 2π)²: a straight line from the middle exits
        let t = FinslerModel::flat_torus();
        let traj = geodesic_ivp(&t, &[3.0, 3.0], &[1.0, 0.0], 10.0, Tolerance::default()).unwrap();
        assert!(traj.boundary_exit);
        assert!(traj.t_end() < 2.0 * std::f64::consts::PI - 3.0 + 1e-6);
        assert!(matches!(
            exp_map(&t, &[3.0, 3.0], &[10.0, 0.0], Tolerance::default()),
            Err(FinslerError::ChartExit(_))
        ));
    }
}
