use anyhow::{Context, Result};
use leafwise::connection::{canonical_at, curvature_at, levi_civita_at, torsion_at};
use leafwise::frobenius::{build_frobenius_chart, chart_invertibility_report, leaf_sample, IntegrabilityMode};
use leafwise::geometry::{adapted_frame_at, involutivity_residual, metric_at};
use leafwise::scenario::ScenarioConfig;
use leafwise::transport::{integrate_geodesic, jacobi_field_ode, parallel_transport, variation_jacobi_oracle};
use leafwise::verify::{self, describe, CheckRecord, Relation};

use crate::output::{columns, real, reals, Report, Sink};

pub struct Run<'a> {
    pub cfg: &'a ScenarioConfig,
    pub sink: &'a Sink,
    pub report: &'a mut Report,
    pub allow_non_involutive: bool,
}

/// Probe points for the tabulating commands: the base point first.
const TABLE_PROBES: usize = 8;

fn table_points(cfg: &ScenarioConfig, count: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![cfg.base_point.clone()];
    pts.extend(cfg.probes(count));
    pts
}

fn mode(run: &Run<'_>) -> IntegrabilityMode {
    if run.allow_non_involutive {
        IntegrabilityMode::WarnAndProceed
    } else {
        IntegrabilityMode::Strict
    }
}

fn context(cfg: &ScenarioConfig, what: &str) -> String {
    format!("scenario {}: {what}", cfg.name)
}

pub fn check_involutive(run: Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    let (g, e, n, m) = (cfg.metric(), cfg.distribution(), cfg.n, cfg.numerics.m);
    let inner = cfg.domain.shrunk(0.1);
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let (a, b) = (inner.lower[i], inner.upper[i]);
            (0..m)
                .map(|k| if m == 1 { 0.5 * (a + b) } else { a + (b - a) * k as f64 / (m - 1) as f64 })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    let mut worst = (0.0f64, cfg.base_point.clone());
    for flat in 0..m.pow(n as u32) {
        let mut rem = flat;
        let mut p = vec![0.0; n];
        for i in (0..n).rev() {
            p[i] = axes[i][rem % m];
            rem /= m;
        }
        let res = involutivity_residual(g, e, &p).with_context(|| context(cfg, &format!("involutivity at {}", describe(&p))))?;
        if res > worst.0 {
            worst = (res, p.clone());
        }
        rows.push(reals(&p).chain([real(res)]).collect());
    }
    let mut header = columns("x", n);
    header.push("residual".into());
    run.sink.csv(run.report, "involutivity.csv", &header, &rows)?;

    let base = involutivity_residual(g, e, &cfg.base_point).with_context(|| context(cfg, "involutivity at base point"))?;
    let tol = cfg.numerics.tolerances.involutivity;
    let involutive = worst.0 <= tol;
    run.report.summary.push(format!("involutivity residual at base point {}: {}", describe(&cfg.base_point), real(base)));
    run.report.summary.push(format!("max residual over the {}-point grid: {} at {}", rows.len(), real(worst.0), describe(&worst.1)));
    run.report.summary.push(format!(
        "scenario flagged {}",
        if involutive { "involutive" } else { "non-involutive" }
    ));
    run.report.checks.push(CheckRecord::new("involutivity_at_base", describe(&cfg.base_point), base, tol, Relation::Info));
    run.report.checks.push(CheckRecord::new("involutivity_max_on_grid", describe(&worst.1), worst.0, tol, Relation::Info));
    Ok(())
}

pub fn connection(run: Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    let (g, e, n) = (cfg.metric(), cfg.distribution(), cfg.n);
    let mut gamma_rows = Vec::new();
    let mut curv_rows = Vec::new();
    for (probe, p) in table_points(cfg, TABLE_PROBES).iter().enumerate() {
        let ctx = || context(cfg, &format!("connection at {}", describe(p)));
        let can = canonical_at(g, e, p).with_context(ctx)?;
        let lc = levi_civita_at(g, p).with_context(ctx)?;
        let t = torsion_at(g, e, p).with_context(ctx)?;
        let r = curvature_at(g, e, p).with_context(ctx)?;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut row = vec![probe.to_string()];
                    row.extend(reals(p));
                    row.extend([k + 1, i + 1, j + 1].map(|c| c.to_string()));
                    row.extend([can.gamma[(k, i, j)], lc.gamma[(k, i, j)], t.t[(k, i, j)]].map(real));
                    gamma_rows.push(row);
                }
            }
        }
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut row = vec![probe.to_string()];
                        row.extend(reals(p));
                        row.extend([l + 1, k + 1, i + 1, j + 1].map(|c| c.to_string()));
                        row.push(real(r.get(l, k, i, j)));
                        curv_rows.push(row);
                    }
                }
            }
        }
    }
    let mut header = vec!["probe".to_string()];
    header.extend(columns("x", n));
    header.extend(["k", "i", "j", "canonical", "levi_civita", "torsion"].map(String::from));
    run.sink.csv(run.report, "connection.csv", &header, &gamma_rows)?;
    let mut header = vec!["probe".to_string()];
    header.extend(columns("x", n));
    header.extend(["l", "k", "i", "j", "curvature"].map(String::from));
    run.sink.csv(run.report, "curvature.csv", &header, &curv_rows)?;

    let ctx = || context(cfg, "connection invariants");
    run.report.checks.extend(verify::check_compatibility(cfg).with_context(ctx)?);
    run.report.checks.extend(verify::check_torsion_conditions(cfg).with_context(ctx)?);
    if cfg.r == n {
        run.report.checks.extend(verify::check_reduction(cfg).with_context(ctx)?);
    }
    run.report.summary.push(format!(
        "Γ, T and R tabulated at {} points (base point first)",
        TABLE_PROBES + 1
    ));
    Ok(())
}

pub fn compare(run: Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    let points = table_points(cfg, 4);
    let rows = verify::comparison_rows(cfg, &points).with_context(|| context(cfg, "comparison table"))?;
    let mut out = Vec::new();
    let (mut svk, mut vr) = ((0.0f64, String::new()), (0.0f64, String::new()));
    for row in &rows {
        let probe = points.iter().position(|p| p == &row.point).unwrap_or(0);
        let label = || format!("p={} X=e{} Y=e{}", describe(&row.point), row.x + 1, row.y + 1);
        if row.canonical_vs_schouten > svk.0 {
            svk = (row.canonical_vs_schouten, label());
        }
        if row.canonical_vs_vranceanu > vr.0 {
            vr = (row.canonical_vs_vranceanu, label());
        }
        let mut r = vec![probe.to_string()];
        r.extend(reals(&row.point));
        r.extend([row.x + 1, row.y + 1].map(|c| c.to_string()));
        r.push(real(row.canonical_vs_schouten));
        r.push(real(row.canonical_vs_vranceanu));
        r.push(row.bott_defect.map(real).unwrap_or_default());
        out.push(r);
    }
    let mut header = vec!["probe".to_string()];
    header.extend(columns("x", cfg.n));
    header.extend(["X", "Y", "canonical_vs_schouten", "canonical_vs_vranceanu", "bott_defect"].map(String::from));
    run.sink.csv(run.report, "compare.csv", &header, &out)?;
    let gap = cfg.numerics.tolerances.comparison_gap;
    run.report.summary.push(format!("max |∇ − ∇°| = {} at {}", real(svk.0), svk.1));
    run.report.summary.push(format!("max |∇ − ∇*| = {} at {}", real(vr.0), vr.1));
    run.report.checks.push(CheckRecord::new("max_gap_schouten", svk.1, svk.0, gap, Relation::Info));
    run.report.checks.push(CheckRecord::new("max_gap_vranceanu", vr.1, vr.0, gap, Relation::Info));
    run.report.checks.extend(verify::check_bott(cfg).with_context(|| context(cfg, "Bott defect identity"))?);
    Ok(())
}

fn trajectory_columns(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(columns("x", n));
    h.extend(columns("v", n));
    h
}

fn trajectory_row(t: f64, x: &[f64], v: &[f64]) -> Vec<String> {
    std::iter::once(real(t)).chain(reals(x)).chain(reals(v)).collect()
}

pub fn geodesic(run: Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    let (g, e) = (cfg.metric(), cfg.distribution());
    let traj = integrate_geodesic(g, e, &cfg.base_point, &cfg.initial_velocity, 1.0, cfg.numerics.h)
        .with_context(|| context(cfg, "reference geodesic"))?;
    let rows: Vec<Vec<String>> = (0..traj.len())
        .map(|k| trajectory_row(traj.times[k], &traj.points[k], &traj.velocities[k]))
        .collect();
    run.sink.csv(run.report, "geodesic.csv", &trajectory_columns(cfg.n), &rows)?;
    run.report.summary.push(format!(
        "geodesic from {} with velocity {}: {} samples, endpoint {}",
        describe(&cfg.base_point),
        describe(&cfg.initial_velocity),
        traj.len(),
        describe(traj.end_point())
    ));
    run.report.checks.extend(verify::check_reference_geodesic(cfg).with_context(|| context(cfg, "geodesic invariants"))?);
    Ok(())
}

pub fn transport(run: Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    let (g, e, n) = (cfg.metric(), cfg.distribution(), cfg.n);
    let traj = integrate_geodesic(g, e, &cfg.base_point, &cfg.initial_velocity, 1.0, cfg.numerics.h)
        .with_context(|| context(cfg, "reference geodesic"))?;
    let frame = adapted_frame_at(g, e, &cfg.base_point).with_context(|| context(cfg, "adapted frame at base point"))?;
    let fields: Vec<Vec<Vec<f64>>> = frame
        .vectors
        .iter()
        .map(|v| Ok(parallel_transport(g, e, &traj, v)?.values))
        .collect::<leafwise::Result<_>>()
        .with_context(|| context(cfg, "parallel transport of the adapted frame"))?;
    let mut drift = (0.0f64, 0.0);
    let mut rows = Vec::new();
    for k in 0..traj.len() {
        let gm = metric_at(g, &traj.points[k])?;
        for a in 0..n {
            for b in 0..n {
                let target = if a == b { 1.0 } else { 0.0 };
                let d = (gm.bilinear(&fields[a][k], &fields[b][k]) - target).abs();
                if d > drift.0 {
                    drift = (d, traj.times[k]);
                }
            }
        }
        let mut row = trajectory_row(traj.times[k], &traj.points[k], &traj.velocities[k]);
        for f in &fields {
            row.extend(reals(&f[k]));
        }
        rows.push(row);
    }
    let mut header = trajectory_columns(n);
    for a in 1..=n {
        header.extend(columns(&format!("e{a}_"), n));
    }
    run.sink.csv(run.report, "transport.csv", &header, &rows)?;
    run.report.summary.push(format!("adapted frame at {} transported along the reference geodesic", describe(&cfg.base_point)));
    run.report.checks.push(CheckRecord::new(
        "transport_preserves_gram",
        format!("t={}", drift.1),
        drift.0,
        cfg.numerics.tolerances.energy,
        Relation::AtMost,
    ));
    Ok(())
}

pub fn jacobi(run: Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    let (g, e, n, h) = (cfg.metric(), cfg.distribution(), cfg.n, cfg.numerics.h);
    let (p, x) = (&cfg.base_point, &cfg.initial_velocity);
    let y = verify::jacobi_probe_vector(cfg);
    let ctx = || context(cfg, "Jacobi field");
    let traj = integrate_geodesic(g, e, p, x, 1.0, h).with_context(ctx)?;
    let st = jacobi_field_ode(g, e, &traj, &vec![0.0; n], &y).with_context(ctx)?;
    let derivs = st.derivatives.as_ref().expect("Jacobi state carries derivatives");
    let rows: Vec<Vec<String>> = (0..traj.len())
        .map(|k| {
            trajectory_row(traj.times[k], &traj.points[k], &traj.velocities[k])
                .into_iter()
                .chain(reals(&st.values[k]))
                .chain(reals(&derivs[k]))
                .collect()
        })
        .collect();
    let mut header = trajectory_columns(n);
    header.extend(columns("J", n));
    header.extend(columns("DJ", n));
    run.sink.csv(run.report, "jacobi.csv", &header, &rows)?;

    let mut table = Vec::new();
    for t in verify::JACOBI_TIMES {
        let fd = variation_jacobi_oracle(g, e, p, x, &y, t, h).with_context(ctx)?;
        let j = &st.values[traj.index_of(t)];
        let err = leafwise::linalg::norm2(&leafwise::linalg::sub(j, &fd)) / leafwise::linalg::norm2(&fd);
        table.push(std::iter::once(real(t)).chain(reals(j)).chain(reals(&fd)).chain([real(err)]).collect());
    }
    let mut header = vec!["t".to_string()];
    header.extend(columns("ode", n));
    header.extend(columns("oracle", n));
    header.push("relative_error".into());
    run.sink.csv(run.report, "jacobi_oracle.csv", &header, &table)?;
    run.report.summary.push(format!("J(0) = 0, ∇J(0) = {} along the reference geodesic", describe(&y)));
    let involutive = verify::classify(cfg).with_context(ctx)?.involutive;
    run.report.checks.extend(verify::check_jacobi(cfg, involutive).with_context(ctx)?);
    Ok(())
}

pub fn leaf(run: Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    let num = &cfg.numerics;
    let sample = leaf_sample(cfg.metric(), cfg.distribution(), &cfg.base_point, num.epsilon, num.m, num.chart_step, mode(&run))
        .with_context(|| context(cfg, "leaf sample"))?;
    let rows: Vec<Vec<String>> = sample
        .params
        .iter()
        .zip(&sample.points)
        .zip(&sample.residuals)
        .map(|((t, x), r)| reals(t).chain(reals(x)).chain([real(*r)]).collect())
        .collect();
    let mut header = columns("t", cfg.r);
    header.extend(columns("x", cfg.n));
    header.push("residual".into());
    run.sink.csv(run.report, "leaf.csv", &header, &rows)?;
    let worst = sample.max_residual();
    run.report.warnings.extend(sample.warnings);
    run.report.summary.push(format!("max tangency residual: {}", real(worst)));
    let relation = if run.report.warnings.is_empty() { Relation::AtMost } else { Relation::Info };
    run.report.checks.push(CheckRecord::new(
        "leaf_tangency",
        format!("epsilon={} m={}", num.epsilon, num.m),
        worst,
        num.tolerances.tangency,
        relation,
    ));
    Ok(())
}

pub fn chart(run: Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    let num = &cfg.numerics;
    let ctx = || context(cfg, "Frobenius chart");
    let chart = build_frobenius_chart(
        cfg.metric(),
        cfg.distribution(),
        &cfg.base_point,
        num.delta,
        num.m,
        verify::chart_options(cfg, mode(&run)),
    )
    .with_context(ctx)?;
    let residuals = chart.residuals().with_context(ctx)?;
    let mut worst = (0.0f64, vec![0.0; cfg.n]);
    let rows: Vec<Vec<String>> = chart
        .params
        .iter()
        .zip(&chart.points)
        .zip(&residuals)
        .map(|((x, y), r)| {
            if *r > worst.0 {
                worst = (*r, x.clone());
            }
            reals(x).chain(reals(y)).chain([real(*r)]).collect()
        })
        .collect();
    let mut header = columns("x", cfg.n);
    header.extend(columns("y", cfg.n));
    header.push("residual".into());
    run.sink.csv(run.report, "chart.csv", &header, &rows)?;
    let origin = vec![0.0; cfg.n];
    let inv = chart_invertibility_report(&chart, &origin).with_context(ctx)?;
    run.report.warnings.extend(chart.warnings.iter().cloned());
    run.report.summary.push(format!("max tangency residual: {} at {}", real(worst.0), describe(&worst.1)));
    run.report.summary.push(format!(
        "Jacobian at origin: condition {}, determinant sign {}",
        real(inv.condition),
        inv.det_sign
    ));
    let relation = if run.report.warnings.is_empty() { Relation::AtMost } else { Relation::Info };
    run.report.checks.push(CheckRecord::new(
        "chart_tangency",
        describe(&worst.1),
        worst.0,
        num.tolerances.tangency,
        relation,
    ));
    Ok(())
}

pub fn verify(run: Run<'_>) -> Result<()> {
    let cfg = run.cfg;
    let checks = verify::run_suite(cfg).with_context(|| context(cfg, "invariant suite"))?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.id.as_str()).collect();
    run.report.summary.push(format!("{} checks, {} failed", checks.len(), failed.len()));
    if !failed.is_empty() {
        run.report.summary.push(format!("failed: {}", failed.join(", ")));
    }
    run.report.checks.extend(checks);
    Ok(())
}
