//! The quasi-distance `ρ(p, q) = inf L(γ)` over curves from `p` to `q`,
//! forward/backward balls and Cauchy probes.
//!
//! Distances are certified upper bounds: the value is the length of an
//! explicit curve, and `gap` estimates how far it may sit above the
//! infimum.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FinslerError, Result};
use crate::geodesic::{curve_length, exp_with_differential, geodesic_ivp, Polyline, Tolerance, Trajectory};
use crate::models::FinslerModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMethod {
    ClosedForm,
    Graph,
    Shooting,
}

/// The curve whose length certifies a distance value.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    Segment {
        from: Vec<f64>,
        to: Vec<f64>,
    },
    Polyline(Polyline),
    /// Geodesic `t ↦ exp_p(t u)`, `t ∈ [0, 1]`, followed by the straight
    /// segment from its endpoint to the target.
    Geodesic {
        initial_velocity: Vec<f64>,
        trajectory: Trajectory,
        closing: Polyline,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiDistanceResult {
    pub value: f64,
    pub gap: f64,
    pub method: DistanceMethod,
    /// Set when shooting was attempted and did not converge; the value is
    /// then the graph bound.
    pub shooting_failed: bool,
    pub witness: Witness,
}

/// JSON form of a distance report: `{value, gap, method}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub value: f64,
    pub gap: f64,
    pub method: DistanceMethod,
}

impl QuasiDistanceResult {
    pub fn report(&self) -> DistanceReport {
        DistanceReport {
            value: self.value,
            gap: self.gap,
            method: self.method,
        }
    }

    /// Length of the witness curve.
    pub fn witness_length(&self, model: &FinslerModel) -> f64 {
        match &self.witness {
            Witness::Segment { from, to } => {
                let e: Vec<f64> = to.iter().zip(from).map(|(a, b)| a - b).collect();
                model.norm(from, &e)
            }
            Witness::Polyline(p) => curve_length(model, p),
            Witness::Geodesic {
                trajectory, closing, ..
            } => curve_length(model, trajectory) + curve_length(model, closing),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceOptions {
    /// Target accuracy of the length (shooting stops when successive
    /// lengths agree to this and the endpoint residual is below it).
    pub tol: f64,
    /// Grid points per axis for the graph initialiser.
    pub grid_resolution: usize,
    /// Run the shooting refinement after the graph search.
    pub refine: bool,
    pub max_iterations: usize,
    pub integrator: Tolerance,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            grid_resolution: 41,
            refine: true,
            max_iterations: 60,
            integrator: Tolerance {
                rtol: 1e-12,
                atol: 1e-14,
            },
        }
    }
}

/// Worst-case relative overestimate of a straight segment by 8-neighbour
/// grid paths in the Euclidean plane, `√(4 − 2√2) − 1`; used as the gap of
/// a graph bound.
const GRAPH_GAP_FACTOR: f64 = 0.0824;

fn check_point(model: &FinslerModel, p: &[f64]) -> Result<()> {
    if p.len() != model.dim {
        return Err(FinslerError::DimensionMismatch {
            expected: model.dim,
            got: p.len(),
        });
    }
    if !model.in_chart(p) {
        return Err(FinslerError::Domain(format!("point {p:?} is outside the chart")));
    }
    Ok(())
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// `ρ(p, q)` as an upper bound with a gap estimate.
///
/// x-independent models use the straight segment, whose length `F(q − p)`
/// is the exact distance. Otherwise a grid-graph Dijkstra search seeds a
/// damped Gauss–Newton shooting on `exp_p(u) = q`; the returned value is
/// the shortest certified curve found.
pub fn quasi_distance(
    model: &FinslerModel,
    p: &[f64],
    q: &[f64],
    opts: &DistanceOptions,
) -> Result<QuasiDistanceResult> {
    check_point(model, p)?;
    check_point(model, q)?;
    if !(opts.tol > 0.0) {
        return Err(FinslerError::Precondition("distance tolerance must be positive".into()));
    }
    if model.meta.x_independent {
        let e = sub(q, p);
        return Ok(QuasiDistanceResult {
            value: model.norm(p, &e),
            gap: 0.0,
            method: DistanceMethod::ClosedForm,
            shooting_failed: false,
            witness: Witness::Segment {
                from: p.to_vec(),
                to: q.to_vec(),
            },
        });
    }
    if p == q {
        return Ok(QuasiDistanceResult {
            value: 0.0,
            gap: 0.0,
            method: DistanceMethod::ClosedForm,
            shooting_failed: false,
            witness: Witness::Segment {
                from: p.to_vec(),
                to: q.to_vec(),
            },
        });
    }

    let path = graph_path(model, p, q, opts.grid_resolution)?;
    let poly = Polyline::new(path)?;
    let graph_len = curve_length(model, &poly);
    let graph = QuasiDistanceResult {
        value: graph_len,
        gap: GRAPH_GAP_FACTOR * graph_len,
        method: DistanceMethod::Graph,
        shooting_failed: false,
        witness: Witness::Polyline(poly.clone()),
    };
    if !opts.refine {
        return Ok(graph);
    }
    match shoot(model, p, q, &poly, graph_len, opts) {
        Ok(shot) if shot.value <= graph_len => Ok(shot),
        Ok(_) => Ok(graph),
        Err(e) => {
            log::debug!("shooting from {p:?} to {q:?} failed: {e}");
            Ok(QuasiDistanceResult {
                shooting_failed: true,
                ..graph
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct QueueEntry {
    dist: f64,
    node: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Regular grid over a box; node `k` has multi-index `k` in mixed radix.
struct Grid {
    lower: Vec<f64>,
    step: Vec<f64>,
    m: usize,
    n: usize,
}

impl Grid {
    fn len(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    fn point(&self, mut k: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (d, xd) in x.iter_mut().enumerate() {
            *xd = self.lower[d] + self.step[d] * (k % self.m) as f64;
            k /= self.m;
        }
        x
    }

    fn index(&self, idx: &[i64]) -> Option<usize> {
        let mut k = 0usize;
        for d in (0..self.n).rev() {
            if idx[d] < 0 || idx[d] >= self.m as i64 {
                return None;
            }
            k = k * self.m + idx[d] as usize;
        }
        Some(k)
    }

    fn multi(&self, mut k: usize) -> Vec<i64> {
        (0..self.n)
            .map(|_| {
                let v = (k % self.m) as i64;
                k /= self.m;
                v
            })
            .collect()
    }
}

/// All offsets in `{−1, 0, 1}ⁿ \ {0}` (8 in 2D, 26 in 3D).
fn stencil(n: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for k in 0..3usize.pow(n as u32) {
        let mut v = Vec::with_capacity(n);
        let mut r = k;
        for _ in 0..n {
            v.push((r % 3) as i64 - 1);
            r /= 3;
        }
        if v.iter().any(|&c| c != 0) {
            out.push(v);
        }
    }
    out
}

fn edge_weight(model: &FinslerModel, a: &[f64], b: &[f64]) -> Option<f64> {
    let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    if !model.in_chart(&mid) || !model.in_chart(b) {
        return None;
    }
    let w = model.norm(&mid, &sub(b, a));
    w.is_finite().then_some(w)
}

/// Grid covering `p`, `q` and a margin, clipped to finite chart bounds.
fn build_grid(model: &FinslerModel, p: &[f64], q: &[f64], m: usize) -> Grid {
    let n = model.dim;
    let span = p.iter().zip(q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let margin = (0.5 * span).max(0.25);
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for d in 0..n {
        let mut lo = p[d].min(q[d]) - margin;
        let mut hi = p[d].max(q[d]) + margin;
        if let crate::models::Chart::Box { lower: cl, upper: cu } = &model.chart {
            lo = lo.max(cl[d] + 1e-9 * (1.0 + cl[d].abs()));
            hi = hi.min(cu[d] - 1e-9 * (1.0 + cu[d].abs()));
        }
        lower.push(lo);
        upper.push(hi);
    }
    let m = m.max(3);
    let step = lower
        .iter()
        .zip(&upper)
        .map(|(lo, hi)| (hi - lo) / (m - 1) as f64)
        .collect();
    Grid { lower, step, m, n }
}

/// Shortest grid path from `p` to `q`, including both endpoints. The two
/// query points are attached to every grid node of their enclosing cell
/// neighbourhood.
fn graph_path(model: &FinslerModel, p: &[f64], q: &[f64], resolution: usize) -> Result<Vec<Vec<f64>>> {
    let grid = build_grid(model, p, q, resolution);
    let total = grid.len();
    let (src, dst) = (total, total + 1);
    let offsets = stencil(grid.n);
    let near = |x: &[f64]| -> Vec<usize> {
        let base: Vec<i64> = (0..grid.n)
            .map(|d| ((x[d] - grid.lower[d]) / grid.step[d]).floor() as i64)
            .collect();
        let mut out = Vec::new();
        for k in 0..4usize.pow(grid.n as u32) {
            let mut idx = base.clone();
            let mut r = k;
            for v in idx.iter_mut() {
                *v += (r % 4) as i64 - 1;
                r /= 4;
            }
            if let Some(i) = grid.index(&idx) {
                out.push(i);
            }
        }
        out
    };
    let into_q: Vec<usize> = near(q);

    let mut dist = vec![f64::INFINITY; total + 2];
    let mut prev = vec![usize::MAX; total + 2];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(QueueEntry { dist: 0.0, node: src });
    let point = |k: usize| -> Vec<f64> {
        if k == src {
            p.to_vec()
        } else if k == dst {
            q.to_vec()
        } else {
            grid.point(k)
        }
    };
    while let Some(QueueEntry { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        if node == dst {
            break;
        }
        let here = point(node);
        let mut relax = |next: usize, heap: &mut BinaryHeap<QueueEntry>| {
            if let Some(w) = edge_weight(model, &here, &point(next)) {
                let nd = d + w;
                if nd < dist[next] {
                    dist[next] = nd;
                    prev[next] = node;
                    heap.push(QueueEntry { dist: nd, node: next });
                }
            }
        };
        if node == src {
            for k in near(p) {
                relax(k, &mut heap);
            }
            if euclid(&sub(p, q)) <= grid.step.iter().fold(0.0, |a: f64, b| a.max(*b)) {
                relax(dst, &mut heap);
            }
            continue;
        }
        let idx = grid.multi(node);
        for off in &offsets {
            let nb: Vec<i64> = idx.iter().zip(off).map(|(a, b)| a + b).collect();
            if let Some(k) = grid.index(&nb) {
                relax(k, &mut heap);
            }
        }
        if into_q.contains(&node) {
            relax(dst, &mut heap);
        }
    }
    if !dist[dst].is_finite() {
        return Err(FinslerError::NoConvergence(format!(
            "no grid path from {p:?} to {q:?} inside the chart"
        )));
    }
    let mut path = vec![q.to_vec()];
    let mut k = prev[dst];
    while k != src {
        path.push(point(k));
        k = prev[k];
    }
    path.push(p.to_vec());
    path.reverse();
    Ok(path)
}

/// Initial velocity for shooting: the direction of the graph path after
/// roughly a tenth of its length, scaled to the path length.
fn initial_guess(model: &FinslerModel, p: &[f64], poly: &Polyline, len: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut target = poly.points.last().expect("nonempty").clone();
    for w in poly.points.windows(2) {
        acc += model.norm(&w[0], &sub(&w[1], &w[0]));
        if acc >= 0.1 * len {
            target = w[1].clone();
            break;
        }
    }
    let d = sub(&target, p);
    let f = model.norm(p, &d);
    d.iter().map(|c| c * len / f).collect()
}

/// Damped Gauss–Newton (Levenberg–Marquardt) on `exp_p(u) = q`, with the
/// Jacobian `(exp_p)_*` from Jacobi fields.
fn shoot(
    model: &FinslerModel,
    p: &[f64],
    q: &[f64],
    poly: &Polyline,
    graph_len: f64,
    opts: &DistanceOptions,
) -> Result<QuasiDistanceResult> {
    let mut u = initial_guess(model, p, poly, graph_len);
    let eval = |u: &[f64]| -> Result<(Vec<f64>, DMatrix<f64>)> { exp_with_differential(model, p, u, opts.integrator) };
    let (mut end, mut jac) = eval(&u)?;
    let mut r = sub(&end, q);
    let mut mu = 1e-3;
    let mut prev_len = f64::INFINITY;
    let scale = 1.0 + euclid(q);
    let mut converged = false;
    for _ in 0..opts.max_iterations {
        let len = model.norm(p, &u);
        let res = euclid(&r);
        if res < 1e-3 * opts.tol * scale && (len - prev_len).abs() < opts.tol {
            converged = true;
            break;
        }
        prev_len = len;
        let jm = &jac;
        let rv = DVector::from_column_slice(&r);
        let jtj = jm.transpose() * jm;
        let jtr = jm.transpose() * &rv;
        let mut accepted = false;
        for _ in 0..30 {
            let damped = &jtj + DMatrix::from_diagonal(&jtj.diagonal()) * mu;
            let Some(step) = damped.lu().solve(&(-&jtr)) else {
                mu *= 10.0;
                continue;
            };
            let cand: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            match eval(&cand) {
                Ok((e, j)) => {
                    let rc = sub(&e, q);
                    if euclid(&rc) < res || euclid(&rc) < 1e-3 * opts.tol * scale {
                        u = cand;
                        end = e;
                        jac = j;
                        r = rc;
                        mu = (mu / 5.0).max(1e-12);
                        accepted = true;
                        break;
                    }
                    mu *= 8.0;
                }
                Err(FinslerError::ChartExit(_)) | Err(FinslerError::IntegratorUnderflow(_)) => mu *= 8.0,
                Err(e) => return Err(e),
            }
        }
        if !accepted {
            break;
        }
    }
    let final_res = euclid(&r);
    if !converged && final_res >= 1e-6 * scale {
        return Err(FinslerError::NoConvergence(format!(
            "shooting residual {final_res:e} after {} iterations",
            opts.max_iterations
        )));
    }
    let trajectory = geodesic_ivp(model, p, &u, 1.0, opts.integrator)?;
    let closing = Polyline::new(vec![end.clone(), q.to_vec()])?;
    let closing_len = curve_length(model, &closing);
    let speed = model.norm(p, &u);
    let len = speed + closing_len;
    // the dense output's quadrature length differs from the exact speed by
    // interpolation error; count it in the gap
    let interpolation = (curve_length(model, &trajectory) - speed).abs();
    Ok(QuasiDistanceResult {
        value: len,
        gap: closing_len + interpolation + 10.0 * opts.integrator.rtol * len,
        method: DistanceMethod::Shooting,
        shooting_failed: false,
        witness: Witness::Geodesic {
            initial_velocity: u,
            trajectory,
            closing,
        },
    })
}

/// Largest quasi-metric axiom violations over the sampled points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxiomViolations {
    /// `max ρ(p, p)`.
    pub identity: f64,
    /// `max ρ(p, s) − ρ(p, q) − ρ(q, s)` over ordered triples.
    pub triangle: f64,
    /// `min ρ(p, q)` over distinct pairs (must be positive).
    pub min_separation: f64,
}

pub fn check_quasi_metric_axioms(
    model: &FinslerModel,
    points: &[Vec<f64>],
    opts: &DistanceOptions,
) -> Result<AxiomViolations> {
    let m = points.len();
    if m < 3 {
        return Err(FinslerError::Precondition(
            "axiom check needs at least three points".into(),
        ));
    }
    let mut d = vec![vec![0.0; m]; m];
    let mut identity: f64 = 0.0;
    let mut min_sep = f64::INFINITY;
    for i in 0..m {
        for j in 0..m {
            d[i][j] = quasi_distance(model, &points[i], &points[j], opts)?.value;
            if i == j {
                identity = identity.max(d[i][j]);
            } else {
                min_sep = min_sep.min(d[i][j]);
            }
        }
    }
    let mut triangle = f64::NEG_INFINITY;
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                if a != b && b != c && a != c {
                    triangle = triangle.max(d[a][c] - d[a][b] - d[b][c]);
                }
            }
        }
    }
    Ok(AxiomViolations {
        identity,
        triangle,
        min_separation: min_sep,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BallDirection {
    /// `{x : ρ(a, x) < r}`
    Forward,
    /// `{x : ρ(x, a) < r}`
    Backward,
}

/// The grid points inside the forward or backward ball of radius `r`
/// about `center`. Points outside the chart are skipped.
pub fn ball(
    model: &FinslerModel,
    center: &[f64],
    r: f64,
    direction: BallDirection,
    grid: &[Vec<f64>],
    opts: &DistanceOptions,
) -> Result<Vec<Vec<f64>>> {
    if !(r > 0.0) {
        return Err(FinslerError::Precondition(format!(
            "ball radius must be positive, got {r}"
        )));
    }
    check_point(model, center)?;
    let graph_only = DistanceOptions { refine: false, ..*opts };
    let mut out = Vec::new();
    for x in grid.iter().filter(|x| model.in_chart(x)) {
        let d = match direction {
            BallDirection::Forward => quasi_distance(model, center, x, &graph_only)?,
            BallDirection::Backward => quasi_distance(model, x, center, &graph_only)?,
        };
        if d.value < r {
            out.push(x.clone());
        }
    }
    Ok(out)
}

/// Regular grid of `m` points per axis over a box.
pub fn regular_grid(lower: &[f64], upper: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = lower.len();
    let m = m.max(2);
    (0..m.pow(n as u32))
        .map(|mut k| {
            (0..n)
                .map(|d| {
                    let i = k % m;
                    k /= m;
                    lower[d] + (upper[d] - lower[d]) * i as f64 / (m - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// CSV of a point set, one point per row, columns `x1..xn`.
pub fn write_points_csv<W: Write>(points: &[Vec<f64>], dim: usize, mut out: W) -> io::Result<()> {
    let header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for p in points {
        let row: Vec<String> = p.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyLevel {
    pub epsilon: f64,
    /// Smallest `N` such that `ρ(x_m, x_n) < ε` for all `N ≤ m ≤ n` in the
    /// prefix (orders swapped for backward), if one exists in the first
    /// half of the prefix.
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyReport {
    pub is_cauchy_to_tol: bool,
    pub levels: Vec<CauchyLevel>,
    /// Last element of the prefix when successive chart coordinates settle
    /// below the finest level.
    pub converges_to: Option<Vec<f64>>,
}

/// Default ε-levels of [`cauchy_probe`].
pub const CAUCHY_LEVELS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// Checks the forward (`m ≤ n ⇒ ρ(x_m, x_n) < ε`) or backward
/// (`ρ(x_n, x_m) < ε`) Cauchy condition on a finite prefix. A level passes
/// when its index lies in the first half of the prefix, so that the tail
/// witnessing it is not trivially short.
pub fn cauchy_probe(
    model: &FinslerModel,
    sequence: &[Vec<f64>],
    direction: BallDirection,
    levels: &[f64],
    opts: &DistanceOptions,
) -> Result<CauchyReport> {
    let len = sequence.len();
    if len < 4 {
        return Err(FinslerError::Precondition(
            "Cauchy probe needs at least four terms".into(),
        ));
    }
    let mut d = vec![vec![0.0; len]; len];
    for m in 0..len {
        for n in m + 1..len {
            d[m][n] = match direction {
                BallDirection::Forward => quasi_distance(model, &sequence[m], &sequence[n], opts)?.value,
                BallDirection::Backward => quasi_distance(model, &sequence[n], &sequence[m], opts)?.value,
            };
        }
    }
    // tail[N] = max over N ≤ m < n of d[m][n]
    let mut tail = vec![0.0f64; len + 1];
    for start in (0..len).rev() {
        let row = (start + 1..len).map(|n| d[start][n]).fold(0.0, f64::max);
        tail[start] = tail[start + 1].max(row);
    }
    let out: Vec<CauchyLevel> = levels
        .iter()
        .map(|&eps| CauchyLevel {
            epsilon: eps,
            index: (0..=len / 2).find(|&k| tail[k] < eps),
        })
        .collect();
    let is_cauchy = out.iter().all(|l| l.index.is_some());
    let finest = levels.iter().copied().fold(f64::INFINITY, f64::min);
    let settle = euclid(&sub(&sequence[len - 1], &sequence[len - 2]));
    Ok(CauchyReport {
        is_cauchy_to_tol: is_cauchy,
        levels: out,
        converges_to: (is_cauchy && settle < finest).then(|| sequence[len - 1].clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencil_sizes() {
        assert_eq!(stencil(2).len(), 8);
        assert_eq!(stencil(3).len(), 26);
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = Grid {
            lower: vec![0.0, -1.0],
            step: vec![0.5, 0.25],
            m: 5,
            n: 2,
        };
        for k in 0..g.len() {
            assert_eq!(g.index(&g.multi(k)), Some(k));
        }
        assert_eq!(g.point(7), vec![1.0, -0.75]);
        assert_eq!(g.index(&[5, 0]), None);
    }

    #[test]
    fn euclidean_graph_path_is_close_to_straight() {
        // the graph search itself, without the closed-form shortcut
        let e = FinslerModel::euclidean(2);
        let path = graph_path(&e, &[0.0, 0.0], &[1.0, 0.3], 41).unwrap();
        let len = curve_length(&e, &Polyline::new(path).unwrap());
        let exact = (1.0f64 + 0.09).sqrt();
        assert!(len >= exact - 1e-12 && len < exact * (1.0 + GRAPH_GAP_FACTOR));
    }

    #[test]
    fn flat_distances_are_closed_form() {
        let q = FinslerModel::minkowski_quartic(2);
        let d = quasi_distance(&q, &[0.0, 0.0], &[1.0, 1.0], &DistanceOptions::default()).unwrap();
        assert!((d.value - 2f64.powf(0.25)).abs() < 1e-15);
        assert_eq!(d.method, DistanceMethod::ClosedForm);
        assert_eq!(d.gap, 0.0);
    }

    #[test]
    fn bad_inputs() {
        let h = FinslerModel::poincare_disk();
        let o = DistanceOptions::default();
        assert!(quasi_distance(&h, &[0.0, 0.0], &[1.5, 0.0], &o).is_err());
        assert!(ball(&h, &[0.0, 0.0], 0.0, BallDirection::Forward, &[], &o).is_err());
        assert!(check_quasi_metric_axioms(&h, &[vec![0.0, 0.0]], &o).is_err());
    }
}
