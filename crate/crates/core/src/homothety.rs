//! Homotheties `φ` with `F(φ(x), dφ y) = λ F(x, y)`, their lifts to the
//! tangent bundle, and the numerical checks built on them: the contraction
//! fixed point, equivariance of the Berwald curvature, the curvature decay
//! chain and the staged flat-model verification.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::berwald::{connection_data, flatness_test, TangentOfTM, FLATNESS_TOLERANCE};
use crate::error::{FinslerError, Result};
use crate::geodesic::{dexp, exp_map};
use crate::jets::{JetSpace, PointedVector, Scalar, TaylorScalar, Truncation};
use crate::metricspace::{quasi_distance, DistanceOptions};
use crate::models::{eval_f, min_relative_eigenvalue, FinslerModel, PD_RELATIVE_THRESHOLD};
use crate::ode::Tolerance;
use crate::sampling::{random_direction, seeded};
use crate::tensor::Tensor3;

/// How a map acts on chart coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapKind {
    /// `x ↦ A (x − c) + c + s`.
    Affine {
        center: Vec<f64>,
        matrix: Vec<Vec<f64>>,
        shift: Vec<f64>,
    },
    /// A rotation of the unit sphere read in the stereographic chart
    /// `σ(P) = (P₁, P₂) / (1 − P₃)`.
    StereographicRotation { axis: [f64; 3], angle: f64 },
}

/// A chart map together with its claimed homothety ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomothetyMap {
    pub name: String,
    pub dim: usize,
    pub lambda: f64,
    #[serde(flatten)]
    pub kind: MapKind,
}

/// Images closer than this to the projection pole count as leaving the chart.
const POLE_MARGIN: f64 = 1e-12;

fn rotation_matrix(axis: &[f64; 3], angle: f64) -> Matrix3<f64> {
    let k = Vector3::from_column_slice(axis).normalize();
    let cross = Matrix3::new(0.0, -k[2], k[1], k[2], 0.0, -k[0], -k[1], k[0], 0.0);
    Matrix3::identity() * angle.cos() + cross * angle.sin() + k * k.transpose() * (1.0 - angle.cos())
}

impl HomothetyMap {
    pub fn affine(name: &str, lambda: f64, center: Vec<f64>, matrix: Vec<Vec<f64>>, shift: Vec<f64>) -> Result<Self> {
        let n = center.len();
        if matrix.len() != n || matrix.iter().any(|r| r.len() != n) || shift.len() != n {
            return Err(FinslerError::DimensionMismatch {
                expected: n,
                got: matrix.len(),
            });
        }
        let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
        if m.determinant().abs() < 1e-14 {
            return Err(FinslerError::Precondition(format!("map `{name}` is not invertible")));
        }
        Ok(Self {
            name: name.into(),
            dim: n,
            lambda,
            kind: MapKind::Affine { center, matrix, shift },
        })
    }

    /// `x ↦ c + λ (x − c)`.
    pub fn dilation(lambda: f64, center: Vec<f64>) -> Self {
        let n = center.len();
        let matrix = (0..n)
            .map(|i| (0..n).map(|j| if i == j { lambda } else { 0.0 }).collect())
            .collect();
        Self {
            name: "dilation".into(),
            dim: n,
            lambda,
            kind: MapKind::Affine {
                center,
                matrix,
                shift: vec![0.0; n],
            },
        }
    }

    /// Dilation by `λ` about the origin composed with the swap of the first
    /// two coordinates.
    pub fn swap_dilation(lambda: f64, n: usize) -> Self {
        let mut matrix = vec![vec![0.0; n]; n];
        for (i, row) in matrix.iter_mut().enumerate() {
            let j = match i {
                0 => 1,
                1 => 0,
                _ => i,
            };
            row[j] = lambda;
        }
        Self {
            name: "swap-dilation".into(),
            dim: n,
            lambda,
            kind: MapKind::Affine {
                center: vec![0.0; n],
                matrix,
                shift: vec![0.0; n],
            },
        }
    }

    pub fn translation(shift: Vec<f64>) -> Self {
        let mut m = Self::dilation(1.0, vec![0.0; shift.len()]);
        m.name = "translation".into();
        if let MapKind::Affine { shift: s, .. } = &mut m.kind {
            *s = shift;
        }
        m
    }

    pub fn sphere_rotation(axis: [f64; 3], angle: f64) -> Result<Self> {
        if axis.iter().map(|a| a * a).sum::<f64>() < 1e-24 {
            return Err(FinslerError::Precondition("rotation axis is zero".into()));
        }
        Ok(Self {
            name: "rotation".into(),
            dim: 2,
            lambda: 1.0,
            kind: MapKind::StereographicRotation { axis, angle },
        })
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    /// `φ(x)` over any scalar type; jets give the derivatives of `φ`.
    pub fn apply<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        match &self.kind {
            MapKind::Affine { center, matrix, shift } => (0..self.dim)
                .map(|i| {
                    let mut acc = x[0].constant_like(center[i] + shift[i]);
                    for j in 0..self.dim {
                        if matrix[i][j] != 0.0 {
                            acc = acc + (x[j].clone() - center[j]) * matrix[i][j];
                        }
                    }
                    acc
                })
                .collect(),
            MapKind::StereographicRotation { axis, angle } => {
                let r = rotation_matrix(axis, *angle);
                let r2 = x[0].square() + x[1].square();
                let den = r2.clone() + 1.0;
                let p = [
                    x[0].clone() * 2.0 / den.clone(),
                    x[1].clone() * 2.0 / den.clone(),
                    (r2 - 1.0) / den,
                ];
                let q: Vec<S> = (0..3)
                    .map(|i| p[0].clone() * r[(i, 0)] + p[1].clone() * r[(i, 1)] + p[2].clone() * r[(i, 2)])
                    .collect();
                let w = -(q[2].clone() - 1.0);
                vec![q[0].clone() / w.clone(), q[1].clone() / w]
            }
        }
    }

    /// Whether `φ` is defined at `x` (always, except at the point a
    /// rotation sends to the projection pole).
    pub fn defined_at(&self, x: &[f64]) -> bool {
        match &self.kind {
            MapKind::Affine { .. } => true,
            MapKind::StereographicRotation { axis, angle } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let p = Vector3::new(2.0 * x[0], 2.0 * x[1], r2 - 1.0) / (r2 + 1.0);
                let q = rotation_matrix(axis, *angle) * p;
                1.0 - q[2] > POLE_MARGIN
            }
        }
    }

    pub fn map_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.apply(x))
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(FinslerError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !self.defined_at(x) {
            return Err(FinslerError::Domain(format!(
                "map `{}` is undefined at {x:?}",
                self.name
            )));
        }
        Ok(())
    }

    fn point_jet(&self, x: &[f64]) -> Result<Vec<TaylorScalar>> {
        self.check(x)?;
        let space = JetSpace::shared(self.dim, Truncation::new(2, 0, 2));
        let (xs, _) = TaylorScalar::variables(&space, x, &vec![0.0; self.dim]);
        Ok(self.apply(&xs))
    }

    /// `dφ` at `x`: entry `(i, j)` is `∂φⁱ/∂xʲ`.
    pub fn differential(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim;
        let out = self.point_jet(x)?;
        let zero = vec![0usize; n];
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut e = zero.clone();
                e[j] = 1;
                m[(i, j)] = out[i].derivative(&e, &zero)?;
            }
        }
        Ok(m)
    }

    /// `∂²φⁱ/∂xʲ∂xᵏ` at `x`.
    pub fn second_derivative(&self, x: &[f64]) -> Result<Tensor3> {
        let n = self.dim;
        let out = self.point_jet(x)?;
        let zero = vec![0usize; n];
        let mut t = Tensor3::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut e = zero.clone();
                    e[j] += 1;
                    e[k] += 1;
                    t.set(i, j, k, out[i].derivative(&e, &zero)?);
                }
            }
        }
        Ok(t)
    }

    /// The inverse map, with ratio `1/λ`.
    pub fn inverse(&self) -> Result<Self> {
        let kind = match &self.kind {
            MapKind::Affine { center, matrix, shift } => {
                let n = self.dim;
                let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
                let inv = m
                    .try_inverse()
                    .ok_or_else(|| FinslerError::Precondition(format!("map `{}` is not invertible", self.name)))?;
                // φ⁻¹(y) = A⁻¹ (y − c − s) + c
                MapKind::Affine {
                    center: center.iter().zip(shift).map(|(c, s)| c + s).collect(),
                    matrix: (0..n).map(|i| (0..n).map(|j| inv[(i, j)]).collect()).collect(),
                    shift: shift.iter().map(|s| -s).collect(),
                }
            }
            MapKind::StereographicRotation { axis, angle } => MapKind::StereographicRotation {
                axis: *axis,
                angle: -angle,
            },
        };
        Ok(Self {
            name: format!("{}-inverse", self.name),
            dim: self.dim,
            lambda: 1.0 / self.lambda,
            kind,
        })
    }

    /// Lift `Φ(x, y) = (φ(x), dφ y)`.
    pub fn push_site(&self, site: &PointedVector) -> Result<PointedVector> {
        let d = self.differential(&site.x)?;
        let y = d * DVector::from_column_slice(&site.y);
        PointedVector::new(self.apply(&site.x), y.iter().copied().collect())
    }

    /// `dφ v` at `x`.
    pub fn push_vector(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let d = self.differential(x)?;
        Ok((d * DVector::from_column_slice(v)).iter().copied().collect())
    }

    /// `Φ_* z = (dφ ξx, ∂²φ(ξx, y) + dφ ξy)` at `site`.
    pub fn push_tangent(&self, site: &PointedVector, z: &TangentOfTM) -> Result<TangentOfTM> {
        let n = self.dim;
        let d = self.differential(&site.x)?;
        let h = self.second_derivative(&site.x)?;
        let zx = &d * DVector::from_column_slice(&z.x);
        let zy = &d * DVector::from_column_slice(&z.y);
        let y = (0..n)
            .map(|i| {
                let mut s = zy[i];
                for j in 0..n {
                    for k in 0..n {
                        s += h.get(i, j, k) * z.x[j] * site.y[k];
                    }
                }
                s
            })
            .collect();
        Ok(TangentOfTM::new(zx.iter().copied().collect(), y))
    }
}

/// A model paired with a map that is claimed to be a homothety of it.
#[derive(Debug, Clone)]
pub struct ShippedPair {
    pub model: FinslerModel,
    pub map: HomothetyMap,
}

/// The known homothety pairs over the built-in models.
pub fn shipped_pairs() -> Vec<ShippedPair> {
    let pair = |model: &str, map: HomothetyMap| ShippedPair {
        model: FinslerModel::builtin(model).expect("built-in model"),
        map,
    };
    vec![
        pair("euclidean", HomothetyMap::dilation(0.5, vec![0.0, 0.0])),
        pair("minkowski-quartic", HomothetyMap::dilation(0.5, vec![0.0, 0.0])),
        pair("minkowski-quartic", HomothetyMap::swap_dilation(0.5, 2)),
        pair(
            "randers-flat",
            HomothetyMap::dilation(0.5, vec![1.0, 2.0]).with_name("centred-dilation"),
        ),
        pair("randers-flat", HomothetyMap::translation(vec![0.3, -0.7])),
        pair(
            "s2",
            HomothetyMap::sphere_rotation([1.0, 0.0, 0.0], 0.7)
                .expect("nonzero axis")
                .with_name("rotation-x"),
        ),
        pair(
            "s2",
            HomothetyMap::sphere_rotation([0.0, 0.0, 1.0], 1.1)
                .expect("nonzero axis")
                .with_name("rotation-z"),
        ),
    ]
}

/// A map that is not a homothety of the sphere: the chart dilation.
pub fn negative_control() -> ShippedPair {
    ShippedPair {
        model: FinslerModel::sphere_stereographic(),
        map: HomothetyMap::dilation(0.5, vec![0.0, 0.0]).with_name("chart-dilation"),
    }
}

/// Largest `|F(Φ(u)) − λ F(u)|` over the sites.
pub fn verify_homothety(model: &FinslerModel, map: &HomothetyMap, sites: &[PointedVector]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in sites {
        let img = map.push_site(s)?;
        let lhs = eval_f(model, &img)?;
        let rhs = map.lambda * eval_f(model, s)?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Sites at which both the site and its image are inside the chart.
pub fn sample_mapped_sites<R: Rng + ?Sized>(
    model: &FinslerModel,
    map: &HomothetyMap,
    count: usize,
    rng: &mut R,
) -> Vec<PointedVector> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let s = model.sample_site(rng);
        if map.defined_at(&s.x) && model.in_chart(&map.apply(&s.x)) {
            out.push(s);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub point: Vec<f64>,
    pub iterations: usize,
    /// `ρ(p, φ(p))` for the returned point.
    pub residual: f64,
    /// Whether the iteration ran on `φ⁻¹` because `λ > 1`.
    pub used_inverse: bool,
}

/// Banach iteration `x_{n+1} = φ(x_n)`, stopped once the a priori bound
/// `ρ(x_{n+1}, p) ≤ λ/(1−λ) ρ(x_n, x_{n+1})` drops below `tol`. Maps with
/// `λ > 1` are iterated through their inverse.
pub fn banach_fixed_point(
    model: &FinslerModel,
    map: &HomothetyMap,
    x0: &[f64],
    tol: f64,
    max_iterations: usize,
    opts: &DistanceOptions,
) -> Result<FixedPoint> {
    if !(map.lambda > 0.0) || !map.lambda.is_finite() {
        return Err(FinslerError::Precondition(format!(
            "ratio λ = {} must be positive",
            map.lambda
        )));
    }
    if (map.lambda - 1.0).abs() < 1e-12 {
        return Err(FinslerError::Precondition(
            "λ = 1: the map is not a contraction and no fixed point is implied".into(),
        ));
    }
    let used_inverse = map.lambda > 1.0;
    let step = if used_inverse { map.inverse()? } else { map.clone() };
    let lambda = step.lambda;
    let threshold = tol * (1.0 - lambda) / lambda;
    let mut x = x0.to_vec();
    for k in 1..=max_iterations {
        let next = step.map_point(&x)?;
        if !model.in_chart(&next) {
            return Err(FinslerError::ChartExit(k as f64));
        }
        let d = quasi_distance(model, &x, &next, opts)?.value;
        log::debug!("banach iteration {k}: ρ = {d:.3e}");
        x = next;
        if d < threshold {
            let img = step.map_point(&x)?;
            let residual = quasi_distance(model, &x, &img, opts)?.value;
            return Ok(FixedPoint {
                point: x,
                iterations: k,
                residual,
                used_inverse,
            });
        }
    }
    Err(FinslerError::NoConvergence(format!(
        "fixed-point iteration did not reach {tol:e} in {max_iterations} steps"
    )))
}

/// Largest component of `R^∇_{Φu}(Φ_*z₁, Φ_*z₂) dφ v − dφ R^∇_u(z₁, z₂) v`.
pub fn curvature_equivariance(
    model: &FinslerModel,
    map: &HomothetyMap,
    site: &PointedVector,
    z1: &TangentOfTM,
    z2: &TangentOfTM,
    v: &[f64],
) -> Result<f64> {
    let here = connection_data(model, site)?;
    let img = map.push_site(site)?;
    let there = connection_data(model, &img)?;
    let rhs = map.push_vector(&site.x, &here.curvature_apply(z1, z2, v))?;
    let lhs = there.curvature_apply(
        &map.push_tangent(site, z1)?,
        &map.push_tangent(site, z2)?,
        &map.push_vector(&site.x, v)?,
    );
    Ok(lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Values along the orbit `u_k = Φᵏ(u)` of the curvature pairing
/// `a_k = g(R^∇(z₁, z₂) v, w)` and of `m_k = g(v, v)`, with the pushed
/// arguments; both scale as `λ^{2k}` under a homothety.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayChain {
    pub curvature_pairing: Vec<f64>,
    pub metric_norm: Vec<f64>,
    /// Largest `|a_k − λ^{2k} a_0| / (1 + |a_0|)`, same for `m_k`.
    pub max_residual: f64,
}

pub fn decay_chain_check(
    model: &FinslerModel,
    map: &HomothetyMap,
    site: &PointedVector,
    args: [&TangentOfTM; 2],
    v: &[f64],
    w: &[f64],
    steps: usize,
) -> Result<DecayChain> {
    let (mut u, mut z1, mut z2) = (site.clone(), args[0].clone(), args[1].clone());
    let (mut v, mut w) = (v.to_vec(), w.to_vec());
    let mut pairing = Vec::with_capacity(steps + 1);
    let mut norm = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let c = connection_data(model, &u)?;
        pairing.push(c.inner(&c.curvature_apply(&z1, &z2, &v), &w));
        norm.push(c.inner(&v, &v));
        if k < steps {
            z1 = map.push_tangent(&u, &z1)?;
            z2 = map.push_tangent(&u, &z2)?;
            v = map.push_vector(&u.x, &v)?;
            w = map.push_vector(&u.x, &w)?;
            u = map.push_site(&u)?;
            if !model.in_chart(&u.x) {
                return Err(FinslerError::ChartExit(k as f64));
            }
        }
    }
    let l2 = map.lambda * map.lambda;
    let mut worst: f64 = 0.0;
    for seq in [&pairing, &norm] {
        let mut scale = 1.0;
        for a in seq.iter() {
            worst = worst.max((a - scale * seq[0]).abs() / (1.0 + seq[0].abs()));
            scale *= l2;
        }
    }
    Ok(DecayChain {
        curvature_pairing: pairing,
        metric_norm: norm,
        max_residual: worst,
    })
}

pub const STAGE_FIXED_POINT: f64 = 1e-8;
pub const STAGE_LOCAL_ISOMETRY: f64 = 1e-6;
pub const STAGE_GLOBAL_ISOMETRY: f64 = 1e-4;

/// Settings of the staged verification.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremConfig {
    pub samples: usize,
    pub seed: u64,
    /// Separation used by the injectivity stage.
    pub delta: f64,
    /// Start of the fixed-point iteration; a seeded sample point if unset.
    pub start: Option<Vec<f64>>,
    pub max_iterations: usize,
    /// Largest `F(p, v)` of the sampled tangent vectors at the fixed point.
    pub radius: f64,
    pub distance: DistanceOptions,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        Self {
            samples: 20,
            seed: 0,
            delta: 1e-3,
            start: None,
            max_iterations: 200,
            radius: 1.0,
            distance: DistanceOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub name: String,
    /// `None` when the stage could not run.
    pub residual: Option<f64>,
    /// `None` for the injectivity stage, which passes only with zero residual.
    pub tolerance: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Rejected,
}

/// Outcome of [`verify_theorem`]; serialises to the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub model: String,
    pub map: String,
    pub lambda: f64,
    pub fixed_point: Option<Vec<f64>>,
    pub stages: Vec<StageResult>,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl TheoremReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

fn stage(name: &str, outcome: Result<f64>, tolerance: Option<f64>) -> StageResult {
    match outcome {
        Ok(r) => StageResult {
            name: name.into(),
            residual: Some(r),
            tolerance,
            pass: match tolerance {
                Some(t) => r < t,
                None => r == 0.0,
            },
        },
        Err(e) => {
            log::debug!("stage {name} could not run: {e}");
            StageResult {
                name: name.into(),
                residual: None,
                tolerance,
                pass: false,
            }
        }
    }
}

fn tangent_samples(model: &FinslerModel, p: &[f64], count: usize, radius: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let v = random_direction(rng, model.dim, 0.1, 1.0);
            let f = model.norm(p, &v);
            let s = rng.gen_range(0.05..1.0) * radius / f;
            v.into_iter().map(|c| c * s).collect()
        })
        .collect()
}

/// Staged check that a model with a proper homothety is a flat Minkowski
/// space: fixed point, flatness near it, `exp_p` a local and a global
/// isometry from `(T_pM, F_p)`, and injectivity of `exp_p`.
pub fn verify_theorem(model: &FinslerModel, map: &HomothetyMap, config: &TheoremConfig) -> TheoremReport {
    let mut report = TheoremReport {
        model: model.name.clone(),
        map: map.name.clone(),
        lambda: map.lambda,
        fixed_point: None,
        stages: Vec::new(),
        verdict: Verdict::Fail,
        message: None,
    };
    if map.dim != model.dim {
        report.verdict = Verdict::Rejected;
        report.message = Some(format!(
            "map dimension {} does not match model dimension {}",
            map.dim, model.dim
        ));
        return report;
    }
    if (map.lambda - 1.0).abs() < 1e-12 || !(map.lambda > 0.0) {
        report.verdict = Verdict::Rejected;
        report.message = Some(format!(
            "ratio λ = {} is not a proper homothety ratio (need 0 < λ ≠ 1)",
            map.lambda
        ));
        return report;
    }
    let mut rng = seeded(config.seed);
    let start = config.start.clone().unwrap_or_else(|| model.sample_point(&mut rng));
    let internal = (STAGE_FIXED_POINT * 1e-2).max(1e-12);
    let fp = banach_fixed_point(model, map, &start, internal, config.max_iterations, &config.distance);
    let p = match &fp {
        Ok(f) => Some(f.point.clone()),
        Err(e) => {
            report.message = Some(format!("fixed point: {e}"));
            None
        }
    };
    report
        .stages
        .push(stage("fixed-point", fp.map(|f| f.residual), Some(STAGE_FIXED_POINT)));
    let Some(p) = p else {
        for (name, tol) in [
            ("flatness", Some(FLATNESS_TOLERANCE)),
            ("local-isometry", Some(STAGE_LOCAL_ISOMETRY)),
            ("global-isometry", Some(STAGE_GLOBAL_ISOMETRY)),
            ("injectivity", None),
        ] {
            report.stages.push(stage(
                name,
                Err(FinslerError::Precondition("no fixed point".into())),
                tol,
            ));
        }
        return report;
    };
    report.fixed_point = Some(p.clone());
    let n = model.dim;
    let tol = Tolerance {
        rtol: 1e-12,
        atol: 1e-14,
    };

    let flat = (|| {
        let mut sites = Vec::with_capacity(config.samples);
        while sites.len() < config.samples {
            let x: Vec<f64> = p.iter().map(|c| c + rng.gen_range(-0.5..0.5)).collect();
            if !model.in_chart(&x) {
                continue;
            }
            let y = random_direction(&mut rng, n, 0.5, 1.5);
            let s = PointedVector::new(x, y)?;
            if min_relative_eigenvalue(model, &s)? > PD_RELATIVE_THRESHOLD {
                sites.push(s);
            }
        }
        Ok(flatness_test(model, &sites)?.max_residual)
    })();
    report.stages.push(stage("flatness", flat, Some(FLATNESS_TOLERANCE)));

    let vs = tangent_samples(model, &p, config.samples, config.radius, &mut rng);
    let ws = tangent_samples(model, &p, config.samples, config.radius, &mut rng);

    let local = (|| {
        let mut worst: f64 = 0.0;
        for (v, w) in vs.iter().zip(&ws) {
            let q = exp_map(model, &p, v, tol)?;
            let dw = dexp(model, &p, v, w, tol)?;
            worst = worst.max((model.norm(&q, &dw) - model.norm(&p, w)).abs());
        }
        Ok(worst)
    })();
    report
        .stages
        .push(stage("local-isometry", local, Some(STAGE_LOCAL_ISOMETRY)));

    let global = (|| {
        let mut worst: f64 = 0.0;
        for (v, w) in vs.iter().zip(&ws) {
            let a = exp_map(model, &p, v, tol)?;
            let b = exp_map(model, &p, w, tol)?;
            let d = quasi_distance(model, &a, &b, &config.distance)?.value;
            let e: Vec<f64> = w.iter().zip(v).map(|(x, y)| x - y).collect();
            worst = worst.max((d - model.norm(&p, &e)).abs());
        }
        Ok(worst)
    })();
    report
        .stages
        .push(stage("global-isometry", global, Some(STAGE_GLOBAL_ISOMETRY)));

    // Pairs at F-separation between δ and 10δ, where a fold of exp_p would
    // show up first.
    let injective = (|| {
        let mut worst: f64 = 0.0;
        for v in &vs {
            let dir = random_direction(&mut rng, n, 1.0, 1.0);
            let sep = rng.gen_range(1.0..10.0) * config.delta;
            let s = sep / model.norm(&p, &dir);
            let w: Vec<f64> = v.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
            let a = exp_map(model, &p, v, tol)?;
            let b = exp_map(model, &p, &w, tol)?;
            let d = quasi_distance(model, &a, &b, &config.distance)?.value;
            worst = worst.max(config.delta / 2.0 - d);
        }
        Ok(worst.max(0.0))
    })();
    report.stages.push(stage("injectivity", injective, None));

    report.verdict = if report.stages.iter().all(|s| s.pass) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    report
}
