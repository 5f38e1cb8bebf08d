use finsler::berwald::connection_data;
use finsler::homothety::HomothetyMap;
use finsler::jets::{JetSpace, TaylorScalar, Truncation};
use finsler::metricspace::{quasi_distance, DistanceOptions};
use finsler::models::{metric_tensor, FinslerModel, BUILTIN_NAMES};
use finsler::sampling::seeded;
use finsler::{PointedVector, Scalar};
use proptest::prelude::*;

fn model_and_site(idx: usize, seed: u64) -> (FinslerModel, PointedVector) {
    let model = FinslerModel::builtin(BUILTIN_NAMES[idx % BUILTIN_NAMES.len()]).unwrap();
    let site = model.sample_site(&mut seeded(seed));
    (model, site)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jet_identities(x in -1.5f64..1.5, y in 0.2f64..3.0) {
        let space = JetSpace::shared(1, Truncation::new(3, 3, 5));
        let (xs, ys) = TaylorScalar::variables(&space, &[x], &[y]);
        let one = xs[0].sin().square() + xs[0].cos().square();
        prop_assert!((one.coefficients()[0] - 1.0).abs() < 1e-14);
        prop_assert!(one.coefficients()[1..].iter().all(|c| c.abs() < 1e-13));
        let back = ys[0].ln().exp();
        for (a, b) in back.coefficients().iter().zip(ys[0].coefficients()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        // product rule for the mixed derivative ∂x∂y (x² y³) = 6 x y²
        let p = xs[0].square() * ys[0].powi(3);
        prop_assert!(close(p.derivative(&[1], &[1]).unwrap(), 6.0 * x * y * y, 1e-13));
    }

    #[test]
    fn f_is_positively_homogeneous(idx in 0usize..8, seed in any::<u64>(), lambda in 0.05f64..20.0) {
        let (model, s) = model_and_site(idx, seed);
        let f = model.norm(&s.x, &s.y);
        let scaled: Vec<f64> = s.y.iter().map(|v| v * lambda).collect();
        prop_assert!(close(model.norm(&s.x, &scaled), lambda * f, 1e-13));
    }

    #[test]
    fn metric_reproduces_f_squared(idx in 0usize..8, seed in any::<u64>()) {
        let (model, s) = model_and_site(idx, seed);
        let g = metric_tensor(&model, &s).unwrap();
        prop_assert!(close(g.inner(&s.y, &s.y), model.f2(&s.x, &s.y), 1e-12));
    }

    #[test]
    fn connection_symmetries(idx in 0usize..8, seed in any::<u64>()) {
        let (model, s) = model_and_site(idx, seed);
        let c = connection_data(&model, &s).unwrap();
        let n = model.dim;
        let scale = 1.0 + c.berwald.max_abs() + c.berwald_curvature.max_abs();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    prop_assert!((c.berwald.get(i, j, k) - c.berwald.get(i, k, j)).abs() < 1e-11 * scale);
                    // Γ is 0-homogeneous in y, so Bⁱ_jkl yˡ = 0
                    let contracted: f64 = (0..n).map(|l| c.berwald_curvature.get(i, j, k, l) * s.y[l]).sum();
                    prop_assert!(contracted.abs() < 1e-9 * scale);
                    for l in 0..n {
                        let b = c.berwald_curvature.get(i, j, k, l);
                        prop_assert!((b - c.berwald_curvature.get(i, k, j, l)).abs() < 1e-9 * scale);
                        prop_assert!((b - c.berwald_curvature.get(i, j, l, k)).abs() < 1e-9 * scale);
                        let h = c.affine_curvature.get(i, j, k, l);
                        prop_assert!((h + c.affine_curvature.get(i, j, l, k)).abs() < 1e-9 * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn dilations_scale_f(
        seed in any::<u64>(),
        lambda in 0.1f64..3.0,
        cx in -2.0f64..2.0,
        cy in -2.0f64..2.0,
        swap in any::<bool>(),
    ) {
        for name in ["euclidean", "minkowski-quartic", "randers-flat"] {
            let model = FinslerModel::builtin(name).unwrap();
            let map = if swap && name == "minkowski-quartic" {
                HomothetyMap::swap_dilation(lambda, 2)
            } else {
                HomothetyMap::dilation(lambda, vec![cx, cy])
            };
            let s = model.sample_site(&mut seeded(seed));
            let img = map.push_site(&s).unwrap();
            prop_assert!(close(model.norm(&img.x, &img.y), lambda * model.norm(&s.x, &s.y), 1e-13));
            let back = map.inverse().unwrap().map_point(&img.x).unwrap();
            prop_assert!((back[0] - s.x[0]).abs() < 1e-12 && (back[1] - s.x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn rotations_invert(ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in 0.1f64..1.0, angle in -3.0f64..3.0,
                        x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let m = HomothetyMap::sphere_rotation([ax, ay, az], angle).unwrap();
        prop_assume!(m.defined_at(&[x, y]));
        let img = m.map_point(&[x, y]).unwrap();
        prop_assume!(img[0].hypot(img[1]) < 1e3);
        let back = m.inverse().unwrap().map_point(&img).unwrap();
        prop_assert!((back[0] - x).abs() < 1e-9 && (back[1] - y).abs() < 1e-9);
    }

    #[test]
    fn flat_distances_satisfy_triangle_inequality(seed in any::<u64>()) {
        let model = FinslerModel::builtin("randers-flat").unwrap();
        let mut rng = seeded(seed);
        let [a, b, c] = [0; 3].map(|_| model.sample_point(&mut rng));
        let o = DistanceOptions::default();
        let d = |p: &[f64], q: &[f64]| quasi_distance(&model, p, q, &o).unwrap().value;
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        prop_assert!(d(&a, &b) > 0.0 || a == b);
    }
}
