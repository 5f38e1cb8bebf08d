//! Adaptive Dormand–Prince 5(4) integrator with cubic Hermite dense output.

use serde::{Deserialize, Serialize};

use crate::error::{FinslerError, Result};

/// Relative and absolute error tolerances of the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

impl Tolerance {
    /// `rtol = tol`, `atol = tol / 100`.
    pub fn new(tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(FinslerError::Precondition(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        Ok(Self {
            rtol: tol,
            atol: tol * 1e-2,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
    /// Largest normalised local error estimate among accepted steps.
    pub max_error_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Completed,
    /// The solution left the domain; the solution ends at the last accepted
    /// state inside it.
    LeftDomain,
}

/// Accepted steps of an integration, with dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
    pub stats: IntegratorStats,
    pub stop: StopReason,
}

impl OdeSolution {
    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("nonempty")
    }

    fn segment(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.clamp(1, self.times.len().max(2) - 1) - 1
    }

    /// Cubic Hermite interpolant of the state at `t` (clamped to the range).
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        self.hermite(t, false)
    }

    /// Time derivative of the Hermite interpolant.
    pub fn interpolate_derivative(&self, t: f64) -> Vec<f64> {
        self.hermite(t, true)
    }

    fn hermite(&self, t: f64, derivative: bool) -> Vec<f64> {
        if self.times.len() == 1 {
            return if derivative {
                self.derivatives[0].clone()
            } else {
                self.states[0].clone()
            };
        }
        let t = t.clamp(self.times[0], self.t_end());
        let k = self.segment(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (y0, y1) = (&self.states[k], &self.states[k + 1]);
        let (f0, f1) = (&self.derivatives[k], &self.derivatives[k + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        if derivative {
            let dh00 = (6.0 * s2 - 6.0 * s) / h;
            let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
            let dh01 = -dh00;
            let dh11 = 3.0 * s2 - 2.0 * s;
            (0..y0.len())
                .map(|i| dh00 * y0[i] + dh10 * f0[i] + dh01 * y1[i] + dh11 * f1[i])
                .collect()
        } else {
            let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
            let h10 = (s3 - 2.0 * s2 + s) * h;
            let h01 = -2.0 * s3 + 3.0 * s2;
            let h11 = (s3 - s2) * h;
            (0..y0.len())
                .map(|i| h00 * y0[i] + h10 * f0[i] + h01 * y1[i] + h11 * f1[i])
                .collect()
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus the embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const MAX_STEPS: usize = 200_000;

/// Integrates `ẏ = f(t, y)` from `t0` to `t_end > t0`.
///
/// `rhs` may fail; a [`FinslerError::Domain`] or
/// [`FinslerError::SingularMetric`] failure inside a step is treated like a
/// rejected step and the step is shrunk. Accepted states must satisfy
/// `inside`; the first state that does not ends the integration with
/// [`StopReason::LeftDomain`]. Other failures propagate.
pub fn dopri5<F, D>(mut rhs: F, t0: f64, y0: &[f64], t_end: f64, tol: Tolerance, inside: D) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    D: Fn(&[f64]) -> bool,
{
    if !(t_end > t0) {
        return Err(FinslerError::Precondition(format!(
            "need t_end > t0, got [{t0}, {t_end}]"
        )));
    }
    if !(tol.rtol > 0.0 && tol.atol > 0.0) {
        return Err(FinslerError::Precondition("tolerances must be positive".into()));
    }
    let dim = y0.len();
    let mut stats = IntegratorStats::default();
    let mut f0 = vec![0.0; dim];
    rhs(t0, y0, &mut f0)?;
    stats.rhs_evaluations += 1;

    let mut sol = OdeSolution {
        times: vec![t0],
        states: vec![y0.to_vec()],
        derivatives: vec![f0.clone()],
        stats,
        stop: StopReason::Completed,
    };

    let span = t_end - t0;
    let norm = |v: &[f64], y: &[f64]| -> f64 {
        let s: f64 = v
            .iter()
            .zip(y)
            .map(|(e, yi)| {
                let sc = tol.atol + tol.rtol * yi.abs();
                (e / sc).powi(2)
            })
            .sum();
        (s / dim.max(1) as f64).sqrt()
    };
    let mut h = {
        let d0 = norm(y0, y0);
        let d1 = norm(&f0, y0);
        let guess = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        guess.min(span)
    };

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut f = f0;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    let mut stage = vec![0.0; dim];
    let mut last_failure_domain = false;
    let mut rejected_last = false;

    while t < t_end {
        if sol.stats.steps + sol.stats.rejected > MAX_STEPS {
            return Err(FinslerError::NoConvergence(format!(
                "more than {MAX_STEPS} integrator steps"
            )));
        }
        let h_min = 1e-14 * t.abs().max(span).max(1.0);
        if h < h_min {
            if last_failure_domain {
                sol.stop = StopReason::LeftDomain;
                break;
            }
            return Err(FinslerError::IntegratorUnderflow(t));
        }
        let last = t + h >= t_end;
        let h_step = if last { t_end - t } else { h };

        k[0].copy_from_slice(&f);
        let mut failure = None;
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h_step * A[s][j] * kj[i];
                }
                stage[i] = acc;
            }
            match rhs(t + C[s] * h_step, &stage, &mut k[s]) {
                Ok(()) => sol.stats.rhs_evaluations += 1,
                Err(e @ (FinslerError::Domain(_) | FinslerError::SingularMetric(_))) => {
                    failure = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
            if k[s].iter().any(|v| !v.is_finite()) {
                failure = Some(FinslerError::Domain(format!("non-finite derivative at t = {t}")));
                break;
            }
        }
        if failure.is_some() {
            sol.stats.rejected += 1;
            last_failure_domain = true;
            rejected_last = true;
            h = h_step * 0.25;
            continue;
        }
        // stage 7 is evaluated at the new point (FSAL)
        let y_new = stage.clone();
        let err: Vec<f64> = (0..dim)
            .map(|i| h_step * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>())
            .collect();
        let scale: Vec<f64> = y.iter().zip(&y_new).map(|(a, b)| a.abs().max(b.abs())).collect();
        let err_norm = norm(&err, &scale);

        if err_norm <= 1.0 {
            if !inside(&y_new) {
                sol.stats.rejected += 1;
                last_failure_domain = true;
                rejected_last = true;
                h = h_step * 0.25;
                continue;
            }
            t = if last { t_end } else { t + h_step };
            y = y_new;
            f = k[6].clone();
            sol.stats.steps += 1;
            sol.stats.max_error_estimate = sol.stats.max_error_estimate.max(err_norm);
            sol.times.push(t);
            sol.states.push(y.clone());
            sol.derivatives.push(f.clone());
            last_failure_domain = false;
            let fac = if err_norm == 0.0 {
                5.0
            } else {
                (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            let fac = if rejected_last { fac.min(1.0) } else { fac };
            rejected_last = false;
            h = h_step * fac;
        } else {
            sol.stats.rejected += 1;
            rejected_last = true;
            last_failure_domain = false;
            h = h_step * (0.9 * err_norm.powf(-0.2)).max(0.2);
        }
    }
    Ok(sol)
}
