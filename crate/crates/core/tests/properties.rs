use leafwise::connection::{blend, canonical_at, levi_civita_at, torsion_at};
use leafwise::expr::parse_expression;
use leafwise::geometry::{
    involutivity_residual, lie_derivative_metric, metric_at, projector_at, ExprField, ScaledField,
    VectorField,
};
use leafwise::scenario::{load_config, ScenarioConfig};
use leafwise::transport::integrate_geodesic;
use leafwise::{leaf_sample, IntegrabilityMode};
use proptest::prelude::*;

fn scenario(name: &str) -> ScenarioConfig {
    load_config(name).unwrap()
}

fn expr_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (0usize..3).prop_map(|i| format!("x{}", i + 1)),
        (-2.0f64..2.0).prop_map(|c| format!("({c:.3})")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("exp(sin({a}))")),
            inner.clone().prop_map(|a| format!("log(1 + ({a})^2)")),
            inner.clone().prop_map(|a| format!("sqrt(2 + cos({a}))")),
            inner.clone().prop_map(|a| format!("({a})^2")),
            inner.clone().prop_map(|a| format!("-({a})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) / (1 + ({b})^2)")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) * ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) + ({b})")),
            (inner.clone(), inner).prop_map(|(a, b)| format!("({a}) - ({b})")),
        ]
    })
}

fn vec3(range: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-range..range, 3)
}

fn unit_cube_point() -> impl Strategy<Value = Vec<f64>> {
    vec3(0.9)
}

/// Scenario plus a point inside its shrunk domain.
fn scenario_point() -> impl Strategy<Value = (&'static str, Vec<f64>)> {
    let names = prop_oneof![
        Just("euclidean_planes"),
        Just("contact3d"),
        Just("sphere_foliation"),
        Just("warped_product"),
        Just("full_tm"),
        Just("normal_line"),
    ];
    (names, prop::collection::vec(0.05f64..0.95, 3)).prop_map(|(name, u)| {
        let d = scenario(name).domain.shrunk(0.1);
        let p = (0..3).map(|i| d.lower[i] + u[i] * (d.upper[i] - d.lower[i])).collect();
        (name, p)
    })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn derivative_matches_central_difference(text in expr_text(), p in unit_cube_point(), v in vec3(1.0)) {
        let e = parse_expression(&text, 3).unwrap();
        let (value, d) = e.directional_derivative(&p, &v).unwrap();
        prop_assert_eq!(value, e.evaluate(&p).unwrap());
        let h = 1e-5;
        let at = |s: f64| {
            let q: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            e.evaluate(&q).unwrap()
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        prop_assert!(close(d, fd, 1e-6), "{text}: {d} vs {fd}");
    }

    #[test]
    fn second_derivative_is_symmetric(text in expr_text(), p in unit_cube_point(), u in vec3(1.0), v in vec3(1.0)) {
        let e = parse_expression(&text, 3).unwrap();
        let a = e.second_directional(&p, &u, &v).unwrap();
        let b = e.second_directional(&p, &v, &u).unwrap();
        prop_assert!(close(a, b, 1e-10), "{text}: {a} vs {b}");
    }

    #[test]
    fn serialization_reparses(text in expr_text(), p in unit_cube_point()) {
        let e = parse_expression(&text, 3).unwrap();
        let s = e.serialize();
        let again = parse_expression(&s, 3).unwrap();
        prop_assert_eq!(&again.serialize(), &s);
        let (a, b) = (e.evaluate(&p).unwrap(), again.evaluate(&p).unwrap());
        prop_assert!(close(a, b, 1e-12), "{text} -> {s}: {a} vs {b}");
    }

    #[test]
    fn lie_derivative_of_scaled_field(p in unit_cube_point(), c in -1.0f64..1.0) {
        let cfg = scenario("full_tm");
        let g = cfg.metric();
        let w = ExprField::parse(&["x2", "1", "x1*x3"]).unwrap();
        let u = ExprField::parse(&["1", "x3", "0"]).unwrap();
        let v = ExprField::parse(&["0", "sin(x1)", "1"]).unwrap();
        let f_text = format!("1 + {c}*x1^2 + x2*x3");
        let f = parse_expression(&f_text, 3).unwrap();
        let fw = ScaledField { factor: f.clone(), field: w.clone() };
        let lhs = lie_derivative_metric(g, &fw, &u, &v, &p).unwrap();
        // L_{fW} g (U, V) = f L_W g (U, V) + (Uf) g(W, V) + (Vf) g(U, W)
        let gm = metric_at(g, &p).unwrap();
        let (wv, uv, vv) = (w.eval(&p).unwrap(), u.eval(&p).unwrap(), v.eval(&p).unwrap());
        let (fv, uf) = f.directional_derivative(&p, &uv).unwrap();
        let (_, vf) = f.directional_derivative(&p, &vv).unwrap();
        let rhs = fv * lie_derivative_metric(g, &w, &u, &v, &p).unwrap()
            + uf * gm.bilinear(&wv, &vv)
            + vf * gm.bilinear(&uv, &wv);
        prop_assert!(close(lhs, rhs, 1e-10), "{lhs} vs {rhs}");
    }

    #[test]
    fn projectors_split_the_tangent_space((name, p) in scenario_point(), v in vec3(1.0), w in vec3(1.0)) {
        let cfg = scenario(name);
        let (g, e) = (cfg.metric(), cfg.distribution());
        let proj = projector_at(g, e, &p).unwrap();
        let gm = metric_at(g, &p).unwrap();
        let pp = proj.p.matmul(&proj.p);
        let pq = proj.p.matmul(&proj.q);
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((pp[(i, j)] - proj.p[(i, j)]).abs() <= 1e-10);
                prop_assert!(pq[(i, j)].abs() <= 1e-10);
                let id = if i == j { 1.0 } else { 0.0 };
                prop_assert!((proj.p[(i, j)] + proj.q[(i, j)] - id).abs() <= 1e-12);
            }
        }
        prop_assert!(gm.bilinear(&proj.tangent(&v), &proj.normal(&w)).abs() <= 1e-10);
        for x in e.frame_vectors(&p).unwrap() {
            let scale = 1.0 + x.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            prop_assert!(proj.normal(&x).iter().all(|c| c.abs() <= 1e-10 * scale));
        }
    }

    #[test]
    fn torsion_depends_only_on_the_distribution(
        (name, p) in scenario_point(),
        upper in prop::collection::vec(-1.0f64..1.0, 3),
        diag in prop::collection::vec(0.5f64..2.0, 3),
    ) {
        let cfg = scenario(name);
        let (g, e) = (cfg.metric(), cfg.distribution());
        let r = cfg.r;
        let m: Vec<Vec<f64>> = (0..r)
            .map(|i| (0..r).map(|j| if j == i { diag[i] } else if j > i { upper[i + j - 1] } else { 0.0 }).collect())
            .collect();
        let other = e.recombined(&m).unwrap();
        let a = torsion_at(g, e, &p).unwrap();
        let b = torsion_at(g, &other, &p).unwrap();
        prop_assert!(a.t.max_abs_diff(&b.t) <= 1e-8);

        let unit: Vec<Vec<f64>> = m
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().enumerate().map(|(j, &c)| if i == j { 1.0 } else { c }).collect())
            .collect();
        let unimodular = e.recombined(&unit).unwrap();
        let d = involutivity_residual(g, e, &p).unwrap() - involutivity_residual(g, &unimodular, &p).unwrap();
        prop_assert!(d.abs() <= 1e-8);
    }

    #[test]
    fn canonical_connection_is_metric_with_declared_torsion((name, p) in scenario_point()) {
        let cfg = scenario(name);
        let (g, e) = (cfg.metric(), cfg.distribution());
        let c = canonical_at(g, e, &p).unwrap();
        let t = torsion_at(g, e, &p).unwrap();
        let gm = metric_at(g, &p).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            let shifted = |s: f64| {
                let mut q = p.clone();
                q[i] += s;
                metric_at(g, &q).unwrap()
            };
            let (plus, minus) = (shifted(h), shifted(-h));
            for j in 0..3 {
                for k in 0..3 {
                    let dg = (plus[(j, k)] - minus[(j, k)]) / (2.0 * h);
                    let rhs: f64 = (0..3)
                        .map(|m| c.gamma[(m, i, j)] * gm[(m, k)] + c.gamma[(m, i, k)] * gm[(j, m)])
                        .sum();
                    prop_assert!((dg - rhs).abs() <= 1e-7, "{name} d{i} g{j}{k}: {dg} vs {rhs}");
                    prop_assert!((t.t[(k, i, j)] + t.t[(k, j, i)]).abs() <= 1e-12);
                    prop_assert!((c.torsion()[(k, i, j)] - t.t[(k, i, j)]).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn blend_is_affine((name, p) in scenario_point(), lambda in -1.0f64..2.0, mu in 0.0f64..1.0) {
        let cfg = scenario(name);
        let (g, e) = (cfg.metric(), cfg.distribution());
        let a = canonical_at(g, e, &p).unwrap();
        let b = levi_civita_at(g, &p).unwrap();
        let direct = blend(&a, &b, lambda).unwrap();
        // Blending two blends of the same pair stays on the line through them.
        let x = blend(&a, &b, mu).unwrap();
        let composed = blend(&a, &x, lambda).unwrap();
        let expected = blend(&a, &b, lambda * mu).unwrap();
        prop_assert!(composed.gamma.max_abs_diff(&expected.gamma) <= 1e-9);
        let n = 3;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let want = (1.0 - lambda) * a.gamma[(k, i, j)] + lambda * b.gamma[(k, i, j)];
                    prop_assert!((direct.gamma[(k, i, j)] - want).abs() <= 1e-12);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn geodesic_speed_is_conserved((name, p) in scenario_point(), v in vec3(0.3)) {
        let cfg = scenario(name);
        let (g, e) = (cfg.metric(), cfg.distribution());
        let traj = integrate_geodesic(g, e, &p, &v, 0.5, 1e-2).unwrap();
        let speed = |k: usize| metric_at(g, &traj.points[k]).unwrap().bilinear(&traj.velocities[k], &traj.velocities[k]);
        let e0 = speed(0);
        for k in 0..traj.len() {
            prop_assert!((speed(k) - e0).abs() <= 1e-7 * (1.0 + e0), "{name} step {k}");
        }
    }

    #[test]
    fn sphere_leaves_through_any_point(u in prop::collection::vec(0.2f64..0.8, 3)) {
        let cfg = scenario("sphere_foliation");
        let (g, e) = (cfg.metric(), cfg.distribution());
        let d = &cfg.domain;
        let p: Vec<f64> = (0..3).map(|i| d.lower[i] + u[i] * (d.upper[i] - d.lower[i])).collect();
        let radius = p.iter().map(|c| c * c).sum::<f64>().sqrt();
        let leaf = leaf_sample(g, e, &p, 0.2, 3, 1e-2, IntegrabilityMode::Strict).unwrap();
        prop_assert!(leaf.max_residual() <= 1e-5);
        for q in &leaf.points {
            let rq = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            prop_assert!((rq - radius).abs() <= 1e-6, "{rq} vs {radius}");
        }
    }
}
