//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the summary is
//! always printed.

mod common;

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use common::{
    christoffel, constant_curvature_riemann, fd_dexp, fd_tower, geodesic_start, max_rel_err, oracle_sites,
    riemannian_inner, riemannian_metric,
};
use finsler::berwald::{connection_data, TangentOfTM};
use finsler::geodesic::{dexp, geodesic_ivp, jacobi_field, Tolerance};
use finsler::homothety::{
    banach_fixed_point, curvature_equivariance, negative_control, sample_mapped_sites, shipped_pairs, HomothetyMap,
};
use finsler::metricspace::{quasi_distance, DistanceOptions};
use finsler::models::FinslerModel;
use finsler::sampling::{random_direction, seeded};
use finsler::tensor::max_abs_diff;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Criterion 1: Berwald coefficients of the constant-curvature Riemannian
/// models are the Christoffel symbols, B vanishes and H is the
/// constant-curvature Riemann tensor, at 50 seeded sites per model.
fn riemannian_reduction() -> Outcome {
    let (mut gamma_err, mut b_max, mut h_err) = (0.0f64, 0.0f64, 0.0f64);
    for (m, model) in [
        FinslerModel::sphere_stereographic(),
        FinslerModel::sphere_polar(),
        FinslerModel::poincare_disk(),
    ]
    .iter()
    .enumerate()
    {
        let kappa = model.meta.constant_curvature.ok_or("missing curvature metadata")?;
        let mut rng = seeded(1000 + m as u64);
        for _ in 0..50 {
            let site = model.sample_site(&mut rng);
            let c = connection_data(model, &site).map_err(err)?;
            gamma_err = gamma_err.max(max_abs_diff(
                c.berwald.as_slice(),
                christoffel(model, &site.x).as_slice(),
            ));
            b_max = b_max.max(c.berwald_curvature.max_abs());
            let r = constant_curvature_riemann(kappa, &riemannian_metric(model, &site.x));
            h_err = h_err.max(max_abs_diff(c.affine_curvature.as_slice(), r.as_slice()));
        }
    }
    ensure(gamma_err < 1e-8 && b_max < 1e-10 && h_err < 1e-8, || {
        format!("Γ err {gamma_err:.2e}, |B| {b_max:.2e}, H err {h_err:.2e}")
    })?;
    Ok(format!(
        "max Γ err {gamma_err:.1e}, max |B| {b_max:.1e}, max H err {h_err:.1e} (150 sites)"
    ))
}

/// Criterion 2: the whole tower agrees with the finite-difference oracle at
/// 104 seeded sites over all built-in models.
fn oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for (m, model) in FinslerModel::all_builtins().iter().enumerate() {
        for site in oracle_sites(model, 13, 2000 + m as u64) {
            let fd = fd_tower(model, &site).map_err(err)?;
            let c = connection_data(model, &site).map_err(err)?;
            for (name, e) in [
                ("g", max_rel_err(c.g.as_slice(), fd.g.as_slice())),
                ("G", max_rel_err(&c.spray, &fd.spray_from_f2)),
                ("N", max_rel_err(c.nonlinear.as_slice(), fd.nonlinear.as_slice())),
                ("Gamma", max_rel_err(c.berwald.as_slice(), fd.berwald.as_slice())),
                (
                    "B",
                    max_rel_err(c.berwald_curvature.as_slice(), fd.berwald_curvature.as_slice()),
                ),
                (
                    "H",
                    max_rel_err(c.affine_curvature.as_slice(), fd.affine_curvature.as_slice()),
                ),
                (
                    "R",
                    max_rel_err(c.nonlinear_curvature.as_slice(), fd.nonlinear_curvature.as_slice()),
                ),
            ] {
                ensure(e < 1e-4, || {
                    format!("{}: {name} relative error {e:.2e} at {site:?}", model.name)
                })?;
                worst = worst.max(e);
            }
            count += 1;
        }
    }
    Ok(format!("max relative error {worst:.1e} over {count} sites"))
}

/// Criterion 3: F is constant along geodesics to 1e-9 on t ∈ [0, 5].
fn conservativity() -> Outcome {
    let tol = Tolerance {
        rtol: 1e-10,
        atol: 1e-12,
    };
    let mut worst = 0.0f64;
    for (m, model) in FinslerModel::all_builtins().iter().enumerate() {
        let mut rng = seeded(3000 + m as u64);
        for _ in 0..3 {
            let (p, v) = geodesic_start(model, &mut rng);
            let traj = geodesic_ivp(model, &p, &v, 5.0, tol).map_err(err)?;
            ensure(!traj.boundary_exit, || {
                format!("{}: geodesic left the chart", model.name)
            })?;
            let d = traj.speed_drift(model);
            ensure(d < 1e-9, || format!("{}: drift {d:.2e}", model.name))?;
            worst = worst.max(d);
        }
    }
    Ok(format!("max drift {worst:.1e} over 24 geodesics"))
}

/// Criterion 4: dexp through Jacobi fields against differences of exp on
/// 20 instances; flat instances give the identity.
fn dexp_oracle() -> Outcome {
    let tol = Tolerance::default();
    let mut rng = seeded(4000);
    let (mut curved_err, mut flat_err) = (0.0f64, 0.0f64);
    let mut count = 0;
    for (name, reps) in [
        ("s2", 3),
        ("s2-polar", 3),
        ("hyperbolic", 3),
        ("randers-curved", 3),
        ("euclidean", 2),
        ("minkowski-quartic", 2),
        ("randers-flat", 2),
        ("flat-torus", 2),
    ] {
        let model = FinslerModel::builtin(name).map_err(err)?;
        for _ in 0..reps {
            let (p, v) = geodesic_start(&model, &mut rng);
            let v: Vec<f64> = v.iter().map(|c| 2.0 * c).collect();
            let w = random_direction(&mut rng, 2, 0.5, 1.5);
            let jac = dexp(&model, &p, &v, &w, tol).map_err(err)?;
            let fd = fd_dexp(&model, &p, &v, &w).map_err(err)?;
            let e = max_rel_err(&jac, &fd);
            ensure(e < 1e-4, || format!("{name}: relative error {e:.2e}"))?;
            curved_err = curved_err.max(e);
            if model.meta.is_flat_expected {
                let d = max_abs_diff(&jac, &w);
                ensure(d < 1e-9, || format!("{name}: dexp differs from identity by {d:.2e}"))?;
                flat_err = flat_err.max(d);
            }
            count += 1;
        }
    }
    Ok(format!(
        "{count} instances, max relative error vs differences {curved_err:.1e}, flat identity error {flat_err:.1e}"
    ))
}

/// Criterion 5: asymmetry of flat Randers, the S² antipodal distance and
/// the triangle inequality on flat models.
fn quasi_metric() -> Outcome {
    let opts = DistanceOptions::default();
    let r = FinslerModel::builtin("randers-flat").map_err(err)?;
    let fwd = quasi_distance(&r, &[0.0, 0.0], &[1.0, 0.0], &opts).map_err(err)?.value;
    let bwd = quasi_distance(&r, &[1.0, 0.0], &[0.0, 0.0], &opts).map_err(err)?.value;
    ensure((fwd - 1.5).abs() < 1e-8 && (bwd - 0.5).abs() < 1e-8, || {
        format!("ρ = {fwd}, {bwd}")
    })?;
    let s2 = FinslerModel::sphere_stereographic();
    let anti = quasi_distance(&s2, &[1.0, 0.0], &[-1.0, 0.0], &opts)
        .map_err(err)?
        .value;
    ensure((anti - PI).abs() < 1e-4, || format!("antipodal distance {anti}"))?;
    let mut worst = f64::NEG_INFINITY;
    for (m, name) in ["euclidean", "minkowski-quartic", "randers-flat"].iter().enumerate() {
        let model = FinslerModel::builtin(name).map_err(err)?;
        let mut rng = seeded(5000 + m as u64);
        for _ in 0..50 {
            let [a, b, c] = [0; 3].map(|_| model.sample_point(&mut rng));
            let d = |p: &[f64], q: &[f64]| quasi_distance(&model, p, q, &opts).map(|r| r.value);
            let v = d(&a, &c).map_err(err)? - d(&a, &b).map_err(err)? - d(&b, &c).map_err(err)?;
            worst = worst.max(v);
        }
    }
    ensure(worst <= 1e-8, || format!("triangle violation {worst:.2e}"))?;
    Ok(format!(
        "ρ = {fwd} / {bwd}, antipode error {:.1e}, worst triangle excess {worst:.1e} (150 triples)",
        (anti - PI).abs()
    ))
}

/// Criterion 6: ρ(φp, φq) = λ ρ(p, q) on 20 pairs per shipped pair.
fn homothety_scaling() -> Outcome {
    let opts = DistanceOptions::default();
    let mut worst = 0.0f64;
    for (m, pair) in shipped_pairs().iter().enumerate() {
        let mut rng = seeded(6000 + m as u64);
        for _ in 0..20 {
            let s = sample_mapped_sites(&pair.model, &pair.map, 2, &mut rng);
            let (p, q) = (&s[0].x, &s[1].x);
            let d = quasi_distance(&pair.model, p, q, &opts).map_err(err)?.value;
            let (fp, fq) = (pair.map.map_point(p).map_err(err)?, pair.map.map_point(q).map_err(err)?);
            let di = quasi_distance(&pair.model, &fp, &fq, &opts).map_err(err)?.value;
            let e = (di - pair.map.lambda * d).abs();
            ensure(e < 1e-6, || {
                format!("{} / {}: {di} vs λ·{d}", pair.model.name, pair.map.name)
            })?;
            worst = worst.max(e);
        }
    }
    Ok(format!("max |ρ(φp, φq) − λρ(p, q)| = {worst:.1e} over 7 pairs × 20"))
}

/// Criterion 7: Banach iteration recovers the centre of a shifted dilation.
fn banach_stage() -> Outcome {
    let model = FinslerModel::builtin("randers-flat").map_err(err)?;
    let centre = [1.0, 2.0];
    let map = HomothetyMap::dilation(0.5, centre.to_vec());
    let mut rng = seeded(7000);
    let mut points = Vec::new();
    let mut max_iter = 0;
    for _ in 0..5 {
        let x0: Vec<f64> = (0..2).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let fp = banach_fixed_point(&model, &map, &x0, 1e-11, 60, &DistanceOptions::default()).map_err(err)?;
        let e = max_abs_diff(&fp.point, &centre);
        ensure(e < 1e-10 && fp.iterations <= 60, || {
            format!("start {x0:?}: error {e:.2e} after {}", fp.iterations)
        })?;
        max_iter = max_iter.max(fp.iterations);
        points.push(fp.point);
    }
    let spread = points
        .iter()
        .flat_map(|a| points.iter().map(move |b| max_abs_diff(a, b)))
        .fold(0.0, f64::max);
    ensure(spread < 2e-10, || format!("starts disagree by {spread:.2e}"))?;
    Ok(format!("5 starts, ≤ {max_iter} iterations, spread {spread:.1e}"))
}

/// Criterion 8: curvature equivariance under S² rotations, and its failure
/// for a chart dilation.
fn equivariance() -> Outcome {
    let tangent = |rng: &mut finsler::sampling::SampleRng| {
        TangentOfTM::new(random_direction(rng, 2, 0.3, 1.0), random_direction(rng, 2, 0.3, 1.0))
    };
    let mut worst = 0.0f64;
    for (m, pair) in shipped_pairs().iter().filter(|p| p.model.name == "s2").enumerate() {
        let mut rng = seeded(8000 + m as u64);
        for s in sample_mapped_sites(&pair.model, &pair.map, 20, &mut rng) {
            let (z1, z2) = (tangent(&mut rng), tangent(&mut rng));
            let v = random_direction(&mut rng, 2, 0.3, 1.0);
            let r = curvature_equivariance(&pair.model, &pair.map, &s, &z1, &z2, &v).map_err(err)?;
            ensure(r < 1e-7, || format!("{}: residual {r:.2e}", pair.map.name))?;
            worst = worst.max(r);
        }
    }
    let c = negative_control();
    let mut rng = seeded(8100);
    let mut residuals = Vec::new();
    for s in sample_mapped_sites(&c.model, &c.map, 20, &mut rng) {
        let (z1, z2) = (tangent(&mut rng), tangent(&mut rng));
        let v = random_direction(&mut rng, 2, 0.3, 1.0);
        residuals.push(curvature_equivariance(&c.model, &c.map, &s, &z1, &z2, &v).map_err(err)?);
    }
    // same residual as for the rotations: the largest over the tuples
    let control = residuals.iter().copied().fold(0.0, f64::max);
    let detected = residuals.iter().filter(|&&r| r > 1e-2).count();
    ensure(control > 1e-2, || {
        format!("negative control residual only {control:.2e}")
    })?;
    Ok(format!(
        "max rotation residual {worst:.1e} (40 tuples), control residual {control:.2e} ({detected}/20 tuples above 1e-2)"
    ))
}

/// Criterion 9: the CLI theorem pipeline passes and is byte-reproducible.
fn theorem_pipeline() -> Outcome {
    let runs: [&[&str]; 2] = [
        &["--model", "minkowski-quartic", "--map", "dilation", "--lambda", "0.5"],
        &[
            "--model",
            "randers-flat",
            "--map",
            "dilation",
            "--lambda",
            "0.5",
            "--center",
            "1,2",
        ],
    ];
    let expected = [
        ("fixed-point", Some(1e-8)),
        ("flatness", Some(1e-7)),
        ("local-isometry", Some(1e-6)),
        ("global-isometry", Some(1e-4)),
        ("injectivity", None),
    ];
    for args in runs {
        let run = || {
            Command::new(env!("CARGO_BIN_EXE_finsler"))
                .arg("verify-theorem")
                .args(args)
                .args(["--seed", "42"])
                .output()
                .map_err(err)
        };
        let (a, b) = (run()?, run()?);
        ensure(a.status.code() == Some(0), || {
            format!(
                "{args:?}: exit {:?}: {}",
                a.status.code(),
                String::from_utf8_lossy(&a.stdout)
            )
        })?;
        ensure(a.stdout == b.stdout, || {
            format!("{args:?}: reports differ between runs")
        })?;
        let v: serde_json::Value = serde_json::from_slice(&a.stdout).map_err(err)?;
        let stages = v["stages"].as_array().ok_or("report has no stages")?;
        ensure(stages.len() == expected.len(), || "wrong number of stages".into())?;
        for (s, (name, tol)) in stages.iter().zip(expected) {
            ensure(
                s["name"] == name && s["pass"] == true && s["tolerance"].as_f64() == tol,
                || format!("{args:?}: stage {s}"),
            )?;
        }
    }
    Ok("quartic and shifted flat Randers: 5/5 stages, exit 0, identical reports".into())
}

/// Criterion 10: on S², |J(t)| = sin(t) |w| for J(0) = 0, J'(0) = w ⊥ ċ.
fn jacobi_closed_form() -> Outcome {
    let model = FinslerModel::sphere_stereographic();
    let mut rng = seeded(10_000);
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let p = vec![rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
        let dir = random_direction(&mut rng, 2, 1.0, 1.0);
        let speed = riemannian_inner(&model, &p, &dir, &dir).sqrt();
        let v: Vec<f64> = dir.iter().map(|d| d / speed).collect();
        let perp = [-v[1], v[0]];
        let wn = rng.gen_range(0.2..2.0);
        let s = riemannian_inner(&model, &p, &perp, &perp).sqrt();
        let w: Vec<f64> = perp.iter().map(|c| wn * c / s).collect();
        let traj = geodesic_ivp(&model, &p, &v, 3.0, Tolerance::default()).map_err(err)?;
        let jf = jacobi_field(&model, &traj, &[0.0, 0.0], &w).map_err(err)?;
        let tr = jf.trajectory();
        for k in 0..tr.len() {
            let t = tr.times()[k];
            let j = jf.field.value(k);
            let e = (riemannian_inner(&model, tr.position(k), j, j).sqrt() - t.sin() * wn).abs();
            worst = worst.max(e);
        }
        for k in 0..=300 {
            let t = 0.01 * k as f64;
            let j = jf.field.value_at(t);
            let e = (riemannian_inner(&model, &traj.position_at(t), &j, &j).sqrt() - t.sin() * wn).abs();
            worst = worst.max(e);
        }
    }
    ensure(worst < 1e-6, || format!("max deviation {worst:.2e}"))?;
    Ok(format!(
        "max ||J(t)| − sin(t)|w|| = {worst:.1e} on [0, 3] (steps and 301 interpolated times)"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("Riemannian reduction", riemannian_reduction),
        ("oracle equivalence", oracle_equivalence),
        ("conservativity", conservativity),
        ("dexp via Jacobi fields", dexp_oracle),
        ("quasi-metric", quasi_metric),
        ("homothety scaling", homothety_scaling),
        ("Banach fixed point", banach_stage),
        ("curvature equivariance", equivariance),
        ("theorem pipeline", theorem_pipeline),
        ("Jacobi closed form", jacobi_closed_form),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} ({name}): {detail} [{secs:.1}s]", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2} ({name}): {why} [{secs:.1}s]", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
