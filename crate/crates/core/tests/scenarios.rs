//! Closed-form behavior of the built-in scenarios through the public API.

use leafwise::connection::{canonical_at, levi_civita_at, torsion_at};
use leafwise::geometry::{metric_at, projector_at};
use leafwise::transport::{integrate_geodesic, jacobi_field_ode, parallel_transport};
use leafwise::{build_frobenius_chart, exp_map, leaf_sample, load_config, ChartOptions, IntegrabilityMode};

#[test]
fn contact_normal_part_of_the_vertical() {
    let cfg = load_config("contact3d").unwrap();
    let (g, e) = (cfg.metric(), cfg.distribution());
    for x in [-0.4, 0.0, 0.6] {
        let p = [x, 1.0, 0.2];
        let q = projector_at(g, e, &p).unwrap().normal(&[0.0, 0.0, 1.0]);
        let gm = metric_at(g, &p).unwrap();
        assert!((gm.bilinear(&q, &q) - 0.5).abs() < 1e-12, "{q:?}");
    }
}

#[test]
fn warped_christoffels_and_torsion() {
    let cfg = load_config("warped_product").unwrap();
    let (g, e) = (cfg.metric(), cfg.distribution());
    for z in [-0.6, 0.1, 0.8] {
        let p = [0.2, -0.3, z];
        let lc = levi_civita_at(g, &p).unwrap().gamma;
        // f = e^z: Γ^z_xx = −f f', Γ^x_xz = f'/f
        let ff = (2.0 * z).exp();
        assert!((lc[(2, 0, 0)] + ff).abs() < 1e-12);
        assert!((lc[(2, 1, 1)] + ff).abs() < 1e-12);
        assert!((lc[(0, 0, 2)] - 1.0).abs() < 1e-12);
        assert!((lc[(1, 2, 1)] - 1.0).abs() < 1e-12);
        let t = torsion_at(g, e, &p).unwrap();
        assert!((t.apply(&[0.0, 0.0, 1.0], &[0.0, 1.0, 0.0])[1] - 1.0).abs() < 1e-12);
        assert!(t.apply(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).iter().all(|c| c.abs() < 1e-12));
    }
}

#[test]
fn warped_fiber_lines_are_geodesics() {
    let cfg = load_config("warped_product").unwrap();
    let (g, e) = (cfg.metric(), cfg.distribution());
    let p = [0.3, 0.1, -0.5];
    let traj = integrate_geodesic(g, e, &p, &[0.0, 0.0, 0.5], 1.0, 1e-3).unwrap();
    for (k, x) in traj.points.iter().enumerate() {
        let t = k as f64 * traj.h;
        assert!((x[0] - 0.3).abs() < 1e-12 && (x[1] - 0.1).abs() < 1e-12);
        assert!((x[2] - (-0.5 + 0.5 * t)).abs() < 1e-10);
    }
}

#[test]
fn warped_leaves_are_level_sets() {
    let cfg = load_config("warped_product").unwrap();
    let (g, e) = (cfg.metric(), cfg.distribution());
    let p = [0.1, 0.2, 0.4];
    let leaf = leaf_sample(g, e, &p, 0.3, 5, 1e-2, IntegrabilityMode::Strict).unwrap();
    assert_eq!(leaf.points.len(), 25);
    assert!(leaf.points.iter().all(|q| (q[2] - 0.4).abs() < 1e-9));
    assert!(leaf.max_residual() < 1e-6);
}

#[test]
fn euclidean_exponential_is_translation() {
    let cfg = load_config("euclidean_planes").unwrap();
    let (g, e) = (cfg.metric(), cfg.distribution());
    let q = exp_map(g, e, &[0.1, 0.2, 0.3], &[0.4, -0.5, 0.2], 1e-3).unwrap();
    for (a, b) in q.iter().zip([0.5, -0.3, 0.5]) {
        assert!((a - b).abs() < 1e-13);
    }
}

#[test]
fn full_rank_pipeline_is_riemannian() {
    let cfg = load_config("full_tm").unwrap();
    let (g, e) = (cfg.metric(), cfg.distribution());
    let p = [0.2, -0.1, 0.3];
    let can = canonical_at(g, e, &p).unwrap().gamma;
    assert!(can.max_abs_diff(&levi_civita_at(g, &p).unwrap().gamma) < 1e-12);

    let traj = integrate_geodesic(g, e, &p, &[0.3, 0.2, -0.1], 1.0, 1e-3).unwrap();
    let w0 = [0.0, 1.0, 0.5];
    let moved = parallel_transport(g, e, &traj, &w0).unwrap();
    let gram = |k: usize, a: &[f64], b: &[f64]| metric_at(g, &traj.points[k]).unwrap().bilinear(a, b);
    let last = traj.len() - 1;
    let n0 = gram(0, &w0, &traj.velocities[0]);
    assert!((gram(last, &moved.values[last], &traj.velocities[last]) - n0).abs() < 1e-9);

    // J = tγ' has J(0) = 0 and covariant derivative γ'(0).
    let j = jacobi_field_ode(g, e, &traj, &[0.0; 3], &traj.velocities[0]).unwrap();
    for k in [250, 500, last] {
        let t = k as f64 * traj.h;
        for i in 0..3 {
            assert!((j.values[k][i] - t * traj.velocities[k][i]).abs() < 1e-9);
        }
    }
}

#[test]
fn sphere_chart_fibers_lie_on_spheres() {
    let cfg = load_config("sphere_foliation").unwrap();
    let (g, e) = (cfg.metric(), cfg.distribution());
    let options = ChartOptions::default();
    let chart = build_frobenius_chart(g, e, &cfg.base_point, 0.2, 3, options).unwrap();
    assert_eq!(chart.points.len(), 27);
    for (x, y) in chart.params.iter().zip(&chart.points) {
        let radius = y.iter().map(|c| c * c).sum::<f64>().sqrt();
        assert!((radius - (2.0 + x[2])).abs() < 1e-6, "{x:?} -> {radius}");
    }
    assert!(chart.residuals().unwrap().iter().all(|&r| r < 1e-5));
}
