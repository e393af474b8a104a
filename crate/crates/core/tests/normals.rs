use std::sync::{Arc, OnceLock};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use exemplar_ps::brdf::{BrdfDictionary, HalfDiffGrid, ParametricBrdfSpec, ParametricSweep, Vec3};
use exemplar_ps::geometry::{angular_error, cone_indices, equiangular_hemisphere, euler_to_normal, CandidatePyramid};
use exemplar_ps::normals::{
    estimate_gradients, estimate_gradients_from, estimate_normal_map, fit_at, level_residuals, match_normal_bruteforce,
    match_normal_c2f, refine_normal, GradientOptions, NormalMapOptions, RefineOptions, RefineStatus, SearchOptions,
};
use exemplar_ps::pipeline::bench::random_normal;
use exemplar_ps::render::{
    render_pixel, render_scene, ExemplarBank, LightingRig, SceneGeometry, SceneReflectance, SceneSpec,
};
use exemplar_ps::Error;

fn dict() -> Arc<BrdfDictionary> {
    static D: OnceLock<Arc<BrdfDictionary>> = OnceLock::new();
    D.get_or_init(|| Arc::new(BrdfDictionary::from_sweep(&ParametricSweep::default(), HalfDiffGrid::with_divisor(6).unwrap()).unwrap()))
        .clone()
}

fn bank() -> &'static ExemplarBank {
    static B: OnceLock<ExemplarBank> = OnceLock::new();
    B.get_or_init(|| {
        let pyramid = CandidatePyramid::new(&[10.0, 5.0, 2.0, 1.0], &Vector3::z()).unwrap();
        ExemplarBank::build(dict(), pyramid, LightingRig::hemisphere(60).unwrap()).unwrap()
    })
}

#[test]
fn bruteforce_is_exhaustive_minimum() {
    let b = bank();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..10 {
        let n = random_normal(&mut rng, 80.0);
        let profile = render_pixel(dict().atom(trial % 20), &n, b.rig()).unwrap();
        let opts = SearchOptions::excluding(20, trial % 20);
        for level in 0..2 {
            let est = match_normal_bruteforce(&profile, b, level, &opts).unwrap();
            let all = level_residuals(&profile, b, level, &opts).unwrap();
            let best = all.iter().copied().fold(f64::INFINITY, f64::min);
            let idx = (0..b.level_len(level)).find(|&i| b.normal(level, i) == &est.normal).unwrap();
            assert_eq!(all[idx], best);
            assert_eq!(est.evaluated_count, b.level_len(level));
        }
    }
}

#[test]
fn on_grid_truth_is_recovered_exactly() {
    let b = bank();
    let level = 2;
    for idx in [0, 17, 400, b.level_len(level) - 1] {
        let n = *b.normal(level, idx);
        let profile = render_pixel(dict().atom(5), &n, b.rig()).unwrap();
        let est = match_normal_bruteforce(&profile, b, level, &SearchOptions::default()).unwrap();
        assert_eq!(est.normal, n);
        assert!(est.residual < 1e-10, "{}", est.residual);
    }
}

#[test]
fn off_grid_error_within_spacing_of_dense_oracle() {
    let b = bank();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let n = random_normal(&mut rng, 70.0);
        let profile = render_pixel(dict().atom(3), &n, b.rig()).unwrap();
        let est = match_normal_bruteforce(&profile, b, 1, &SearchOptions::default()).unwrap();
        let spacing = b.pyramid().level(1).neighbour_spacing_deg();
        assert!(angular_error(&est.normal, &n) <= spacing, "{}", angular_error(&est.normal, &n));
        // Dense oracle: the best 1° candidate near the truth fits at least as well.
        let dense = equiangular_hemisphere(1.0, &Vector3::z()).unwrap();
        let near = cone_indices(&dense, &n, 1.0);
        let oracle = near
            .iter()
            .map(|&i| fit_at(&profile, &dense.normals[i], b, &SearchOptions::default()).unwrap().1)
            .fold(f64::INFINITY, f64::min);
        assert!(oracle <= est.residual + 1e-12);
    }
}

#[test]
fn single_level_coarse_to_fine_equals_bruteforce() {
    let d = dict();
    let rig = LightingRig::hemisphere(30).unwrap();
    let pyramid = CandidatePyramid::new(&[4.0], &Vector3::z()).unwrap();
    let single = ExemplarBank::build(d.clone(), pyramid, rig.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let n = random_normal(&mut rng, 85.0);
        let profile = render_pixel(d.atom(rng.gen_range(0..20)), &n, &rig).unwrap();
        let a = match_normal_c2f(&profile, &single, &SearchOptions::default()).unwrap();
        let b = match_normal_bruteforce(&profile, &single, 0, &SearchOptions::default()).unwrap();
        assert_eq!(a.normal, b.normal);
        assert_eq!(a.evaluated_count, b.evaluated_count);
    }
}

#[test]
fn coarse_to_fine_count_is_bounded() {
    let b = bank();
    let total: usize = (0..b.num_levels()).map(|l| b.level_len(l)).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let n = random_normal(&mut rng, 90.0);
        let profile = render_pixel(dict().atom(11), &n, b.rig()).unwrap();
        let est = match_normal_c2f(&profile, b, &SearchOptions::excluding(20, 11)).unwrap();
        assert!(est.evaluated_count <= total);
        assert!(est.evaluated_count < b.level_len(b.num_levels() - 1) / 10);
        assert!(angular_error(&est.normal, &n) < 6.0);
    }
}

#[test]
fn lambertian_gradient_matches_analytic() {
    let grid = HalfDiffGrid::with_divisor(6).unwrap();
    let k = 0.7;
    let atom = ParametricBrdfSpec::Lambertian { albedo: k * std::f64::consts::PI }.tabulate(grid).unwrap();
    let d = BrdfDictionary::new(vec![atom], vec!["lambertian".into()]).unwrap();
    let rig = LightingRig::hemisphere(40).unwrap();
    let candidates = equiangular_hemisphere(0.5, &Vector3::z()).unwrap();
    // ∂/∂θ (k·n·l) = k·l·(cosθ cosφ, cosθ sinφ, −sinθ), away from the pole
    // where the Euler chart is singular and from the shading clamp.
    let (t, p) = (30f64.to_radians(), 40f64.to_radians());
    let n = euler_to_normal(30.0, 40.0);
    let dn = Vector3::new(t.cos() * p.cos(), t.cos() * p.sin(), -t.sin());
    let g = estimate_gradients_from(&d, &rig, &candidates, &n, &GradientOptions::default()).unwrap();
    let lit: Vec<usize> = (0..rig.q()).filter(|&i| n.dot(&rig.lights()[i]) > 0.1).collect();
    let analytic: Vec<f64> = lit.iter().map(|&i| k * rig.lights()[i].dot(&dn)).collect();
    let num: f64 = lit.iter().zip(&analytic).map(|(&i, a)| (g.d_theta[(i, 0)] - a).powi(2)).sum::<f64>().sqrt();
    let den: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(num / den <= 0.01, "relative error {}", num / den);
}

#[test]
fn gradient_vanishes_at_stationary_point() {
    let grid = HalfDiffGrid::with_divisor(6).unwrap();
    let atom = ParametricBrdfSpec::Lambertian { albedo: 1.0 }.tabulate(grid).unwrap();
    let d = BrdfDictionary::new(vec![atom], vec!["l".into()]).unwrap();
    let rig = LightingRig::new(vec![Vector3::z(), Vector3::new(0.6, 0.0, 0.8), Vector3::new(0.0, 0.6, 0.8)], vec![1.0; 3], Vector3::z())
        .unwrap();
    let candidates = equiangular_hemisphere(0.5, &Vector3::z()).unwrap();
    let g = estimate_gradients_from(&d, &rig, &candidates, &Vector3::z(), &GradientOptions::default()).unwrap();
    // Per-radian slope; the 2° neighbourhood leaves a curvature bias of order 1e-3.
    assert!(g.d_theta[(0, 0)].abs() < 1e-2, "{}", g.d_theta[(0, 0)]);
}

#[test]
fn gradient_unavailable_with_sparse_neighbourhood() {
    let rig = LightingRig::hemisphere(10).unwrap();
    let candidates = equiangular_hemisphere(10.0, &Vector3::z()).unwrap();
    let n = euler_to_normal(33.0, 71.0);
    let r = estimate_gradients_from(&dict(), &rig, &candidates, &n, &GradientOptions::default());
    assert!(matches!(r, Err(Error::GradientUnavailable(_))));
}

#[test]
fn refinement_fixed_point_at_exact_optimum() {
    let b = bank();
    let level = b.num_levels() - 1;
    for idx in [123, 2000] {
        let n = *b.normal(level, idx);
        let profile = render_pixel(dict().atom(8), &n, b.rig()).unwrap();
        let est = match_normal_c2f(&profile, b, &SearchOptions::default()).unwrap();
        assert_eq!(est.normal, n);
        let refined = refine_normal(&profile, &est, b, &RefineOptions::default(), &SearchOptions::default()).unwrap();
        assert!(angular_error(&refined.normal, &n) <= 1e-6);
        assert!(refined.residual <= est.residual);
    }
}

#[test]
fn refinement_is_monotone_and_helps_on_average() {
    let b = bank();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut before, mut after) = (0.0, 0.0);
    for trial in 0..30 {
        let n = random_normal(&mut rng, 80.0);
        let atom = trial % 20;
        let profile = render_pixel(dict().atom(atom), &n, b.rig()).unwrap();
        let opts = SearchOptions::excluding(20, atom);
        let est = match_normal_c2f(&profile, b, &opts).unwrap();
        let refined = refine_normal(&profile, &est, b, &RefineOptions::default(), &opts).unwrap();
        assert!(refined.residual <= est.residual);
        assert!(matches!(refined.refine, RefineStatus::Refined { .. }));
        before += angular_error(&est.normal, &n);
        after += angular_error(&refined.normal, &n);
    }
    assert!(after < before, "{after} vs {before}");
}

#[test]
fn refinement_skipped_without_gradients() {
    let d = dict();
    let rig = LightingRig::hemisphere(20).unwrap();
    let coarse = ExemplarBank::build(d.clone(), CandidatePyramid::new(&[10.0], &Vector3::z()).unwrap(), rig.clone()).unwrap();
    let n = euler_to_normal(40.0, 10.0);
    let profile = render_pixel(d.atom(2), &n, &rig).unwrap();
    let est = match_normal_c2f(&profile, &coarse, &SearchOptions::default()).unwrap();
    let r = refine_normal(&profile, &est, &coarse, &RefineOptions::default(), &SearchOptions::default()).unwrap();
    assert_eq!(r.refine, RefineStatus::Skipped);
    assert_eq!(r.normal, est.normal);
    let _ = estimate_gradients(&coarse, &n, &GradientOptions::default()).unwrap_err();
}

#[test]
fn normal_map_flat_scene_and_mask() {
    let b = bank();
    let n: Vec3 = euler_to_normal(20.0, 45.0);
    let mut c = vec![0.0; 20];
    c[4] = 1.0;
    let spec = SceneSpec {
        geometry: SceneGeometry::Flat { width: 5, height: 4, normal: n },
        reflectance: SceneReflectance::Uniform(c.clone()),
        noise_sigma: 0.0,
        seed: 0,
    };
    let scene = render_scene(&spec, Some(&dict()), b.rig()).unwrap();
    let out = estimate_normal_map(&scene.stack, b, &NormalMapOptions::default()).unwrap();
    let first = out.map.normals[0].unwrap();
    assert!(out.map.normals.iter().all(|m| m.unwrap() == first));

    let sphere = SceneSpec { geometry: SceneGeometry::Sphere { size: 8 }, reflectance: SceneReflectance::Uniform(c), noise_sigma: 0.0, seed: 0 };
    let scene = render_scene(&sphere, Some(&dict()), b.rig()).unwrap();
    let out = estimate_normal_map(&scene.stack, b, &NormalMapOptions::default()).unwrap();
    for (p, &m) in scene.stack.mask().iter().enumerate() {
        assert_eq!(out.estimates[p].is_some(), m);
        assert_eq!(out.map.normals[p].is_some(), m);
    }

    let other = LightingRig::hemisphere(61).unwrap();
    let scene = render_scene(&sphere, Some(&dict()), &other).unwrap();
    assert!(estimate_normal_map(&scene.stack, b, &NormalMapOptions::default()).is_err());
}
