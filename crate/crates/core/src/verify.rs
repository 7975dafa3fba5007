//! The invariant suite run by `verify`: every property of the connection,
//! transport and chart constructions, evaluated on one scenario and reduced
//! to one record per check (worst probe wins).

use rand::Rng;
use serde::{Serialize, Serializer};

use crate::connection::{
    blend, bott_defect_identity, canonical_at, curvature_at, koszul_pairing, levi_civita_at, torsion_at,
    ConnectionEval,
};
use crate::error::Result;
use crate::frobenius::{
    build_frobenius_chart, chart_invertibility_report, leaf_sample, ChartOptions, FrobeniusChart, IntegrabilityMode,
    Parametrization,
};
use crate::geometry::{
    adapted_frame_at, involutivity_residual, lie_derivative_metric, metric_at, projector_at, AdaptedFrame,
    AdaptedFrameField, DistributionSpec, MetricField,
};
use crate::linalg;
use crate::real::Dual;
use crate::scenario::ScenarioConfig;
use crate::transport::{
    geodesic_residual, integrate_geodesic, jacobi_field_ode, parallel_transport, self_convergence,
    variation_jacobi_oracle, Trajectory,
};

pub const PROBES: usize = 200;
pub const LIGHT_PROBES: usize = 100;
pub const HEAVY_PROBES: usize = 40;
pub const CURVE_SAMPLES: usize = 20;
pub const TRANSPORT_SAMPLES: usize = 5;
pub const JACOBI_TIMES: [f64; 3] = [0.25, 0.5, 1.0];
/// Below this both self-convergence errors are roundoff and the integrator
/// is exact on the scenario.
pub const EXACT_ERROR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = ">")]
    Above,
    /// Reported, not judged.
    #[serde(rename = "info")]
    Info,
}

impl Relation {
    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Relation::AtMost => value <= threshold,
            Relation::AtLeast => value >= threshold,
            Relation::Above => value > threshold,
            Relation::Info => true,
        }
    }
}

/// JSON has no infinities; those become strings.
fn real<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub id: String,
    pub probe: String,
    #[serde(serialize_with = "real")]
    pub value: f64,
    #[serde(serialize_with = "real")]
    pub threshold: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl CheckRecord {
    pub fn new(id: &str, probe: impl Into<String>, value: f64, threshold: f64, relation: Relation) -> Self {
        Self {
            id: id.to_string(),
            probe: probe.into(),
            value,
            threshold,
            relation,
            pass: relation.holds(value, threshold),
        }
    }
}

pub fn all_pass(records: &[CheckRecord]) -> bool {
    records.iter().all(|r| r.pass)
}

pub fn describe(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|c| format!("{c:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Running maximum of a residual with the probe that produced it. A NaN
/// residual is kept as the worst value so it cannot pass silently.
struct Worst {
    id: &'static str,
    threshold: f64,
    value: f64,
    probe: String,
}

impl Worst {
    fn new(id: &'static str, threshold: f64) -> Self {
        Self {
            id,
            threshold,
            value: 0.0,
            probe: "none".into(),
        }
    }

    fn see(&mut self, value: f64, probe: impl FnOnce() -> String) {
        if value.is_nan() || (!self.value.is_nan() && value > self.value) || self.probe == "none" {
            self.value = value;
            self.probe = probe();
        }
    }

    fn record(self) -> CheckRecord {
        CheckRecord::new(self.id, self.probe, self.value, self.threshold, Relation::AtMost)
    }
}

fn frame_fields<'a>(cfg: &'a ScenarioConfig, frame: &AdaptedFrame) -> Vec<AdaptedFrameField<'a>> {
    (0..cfg.n)
        .map(|index| AdaptedFrameField {
            metric: cfg.metric(),
            distribution: cfg.distribution(),
            pivots: frame.pivots.clone(),
            index,
        })
        .collect()
}

/// Whether `E` is involutive on the scenario domain, judged at the base
/// point and at the probe points.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub involutive: bool,
    pub full_rank: bool,
    pub base_residual: f64,
    pub max_residual: f64,
}

pub fn classify(cfg: &ScenarioConfig) -> Result<Classification> {
    let (g, e) = (cfg.metric(), cfg.distribution());
    let base_residual = involutivity_residual(g, e, &cfg.base_point)?;
    let mut max_residual = base_residual;
    for p in cfg.probes(CURVE_SAMPLES) {
        max_residual = max_residual.max(involutivity_residual(g, e, &p)?);
    }
    Ok(Classification {
        involutive: max_residual <= cfg.numerics.tolerances.involutivity,
        full_rank: cfg.r == cfg.n,
        base_residual,
        max_residual,
    })
}

/// Full suite in a fixed order.
pub fn run_suite(cfg: &ScenarioConfig) -> Result<Vec<CheckRecord>> {
    let class = classify(cfg)?;
    let tol = &cfg.numerics.tolerances;
    let mut out = vec![CheckRecord::new(
        "involutivity_residual",
        if class.involutive { "involutive" } else { "not involutive" },
        class.max_residual,
        tol.involutivity,
        Relation::Info,
    )];
    out.extend(check_projectors(cfg)?);
    out.extend(check_frame_recombination(cfg)?);
    if class.full_rank {
        out.extend(check_reduction(cfg)?);
    }
    out.extend(check_torsion_conditions(cfg)?);
    out.extend(check_compatibility(cfg)?);
    out.extend(check_koszul(cfg)?);
    out.extend(check_blend(cfg)?);
    out.extend(check_bott(cfg)?);
    out.extend(check_curvature(cfg, class.involutive)?);
    if class.involutive {
        out.extend(check_total_geodesy(cfg)?);
        out.extend(check_confinement(cfg)?);
    }
    out.extend(check_reference_geodesic(cfg)?);
    out.extend(check_jacobi(cfg, class.involutive)?);
    if class.involutive {
        out.extend(check_chart(cfg)?);
    } else {
        out.extend(check_negative_control(cfg, &class)?);
    }
    out.push(check_convergence(cfg)?);
    Ok(out)
}

pub fn check_projectors(cfg: &ScenarioConfig) -> Result<Vec<CheckRecord>> {
    let (g, e, n) = (cfg.metric(), cfg.distribution(), cfg.n);
    let tol = cfg.numerics.tolerances.projector;
    let mut idem = Worst::new("projector_idempotent", tol);
    let mut adj = Worst::new("projector_self_adjoint", tol);
    let mut trace = Worst::new("projector_trace", tol);
    let mut split = Worst::new("projector_split", tol);
    let mut orth = Worst::new("projector_orthogonal", tol);
    let mut rng = cfg.rng(1);
    for p in cfg.probes(PROBES) {
        let pr = projector_at(g, e, &p)?;
        let gm = metric_at(g, &p)?;
        idem.see(pr.p.matmul(&pr.p).max_abs_diff(&pr.p), || describe(&p));
        adj.see(gm.matmul(&pr.p).max_abs_diff(&pr.p.transpose().matmul(&gm)), || describe(&p));
        let tr: f64 = (0..n).map(|i| pr.p[(i, i)]).sum();
        trace.see((tr - cfg.r as f64).abs(), || describe(&p));
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (pv, qv) = (pr.tangent(&v), pr.normal(&v));
        split.see(linalg::norm2(&linalg::sub(&linalg::add(&pv, &qv), &v)), || describe(&p));
        orth.see(gm.bilinear(&pv, &pr.normal(&w)).abs(), || describe(&p));
    }
    Ok(vec![idem.record(), adj.record(), trace.record(), split.record(), orth.record()])
}

/// Unit upper-triangular constant recombination of the declared frame.
pub fn recombination_matrix(cfg: &ScenarioConfig) -> Vec<Vec<f64>> {
    let mut rng = cfg.rng(2);
    (0..cfg.r)
        .map(|i| {
            (0..cfg.r)
                .map(|j| match j.cmp(&i) {
                    std::cmp::Ordering::Less => 0.0,
                    std::cmp::Ordering::Equal => 1.0,
                    std::cmp::Ordering::Greater => rng.gen_range(-1.0..1.0),
                })
                .collect()
        })
        .collect()
}

/// Torsion and the involutivity residual depend on `E`, not on its frame.
pub fn check_frame_recombination(cfg: &ScenarioConfig) -> Result<Vec<CheckRecord>> {
    let (g, e) = (cfg.metric(), cfg.distribution());
    let other = e.recombined(&recombination_matrix(cfg))?;
    let tol = cfg.numerics.tolerances.frame_independence;
    let mut torsion = Worst::new("torsion_frame_independence", tol);
    let mut inv = Worst::new("involutivity_frame_independence", tol);
    for p in cfg.probes(LIGHT_PROBES) {
        let a = torsion_at(g, e, &p)?;
        let b = torsion_at(g, &other, &p)?;
        torsion.see(a.t.max_abs_diff(&b.t), || describe(&p));
        let d = involutivity_residual(g, e, &p)? - involutivity_residual(g, &other, &p)?;
        inv.see(d.abs(), || describe(&p));
    }
    Ok(vec![torsion.record(), inv.record()])
}

pub fn check_reduction(cfg: &ScenarioConfig) -> Result<Vec<CheckRecord>> {
    let (g, e) = (cfg.metric(), cfg.distribution());
    let mut w = Worst::new("reduction_to_levi_civita", cfg.numerics.tolerances.reduction);
    for p in cfg.probes(LIGHT_PROBES) {
        let d = canonical_at(g, e, &p)?.gamma.max_abs_diff(&levi_civita_at(g, &p)?.gamma);
        w.see(d, || describe(&p));
    }
    Ok(vec![w.record()])
}

/// Defining conditions of the production torsion: vanishing on `E` and on
/// `E⊥`, and the two Lie-derivative identities along adapted frame fields.
pub fn check_torsion_conditions(cfg: &ScenarioConfig) -> Result<Vec<CheckRecord>> {
    let (g, e, r, n) = (cfg.metric(), cfg.distribution(), cfg.r, cfg.n);
    let tol = &cfg.numerics.tolerances;
    let mut ee = Worst::new("torsion_vanishes_on_E", tol.torsion_vanishing);
    let mut nn = Worst::new("torsion_vanishes_on_normal", tol.torsion_vanishing);
    let mut c2 = Worst::new("torsion_condition_tangent", tol.torsion_conditions);
    let mut c3 = Worst::new("torsion_condition_normal", tol.torsion_conditions);
    for p in cfg.probes(PROBES) {
        let gm = metric_at(g, &p)?;
        let t = torsion_at(g, e, &p)?;
        let frame = adapted_frame_at(g, e, &p)?;
        let fields = frame_fields(cfg, &frame);
        let v = &frame.vectors;
        for i in 0..r {
            for j in 0..r {
                ee.see(linalg::g_norm(&gm, &t.apply(&v[i], &v[j])), || describe(&p));
            }
        }
        for a in r..n {
            for b in r..n {
                nn.see(linalg::g_norm(&gm, &t.apply(&v[a], &v[b])), || describe(&p));
            }
        }
        for a in r..n {
            for i in 0..r {
                let tau = t.apply(&v[a], &v[i]);
                for j in 0..r {
                    let lie = lie_derivative_metric(g, &fields[a], &fields[i], &fields[j], &p)?;
                    c2.see((gm.bilinear(&tau, &v[j]) - 0.5 * lie).abs(), || describe(&p));
                }
                for b in r..n {
                    let lie = lie_derivative_metric(g, &fields[i], &fields[a], &fields[b], &p)?;
                    c3.see((gm.bilinear(&tau, &v[b]) + 0.5 * lie).abs(), || describe(&p));
                }
            }
        }
    }
    Ok(vec![ee.record(), nn.record(), c2.record(), c3.record()])
}

/// `∂_i g_jk = Γ^m_ij g_mk + Γ^m_ik g_jm` and `Γ^k_ij − Γ^k_ji = T^k_ij`.
pub fn check_compatibility(cfg: &ScenarioConfig) -> Result<Vec<CheckRecord>> {
    let (g, e, n) = (cfg.metric(), cfg.distribution(), cfg.n);
    let tol = &cfg.numerics.tolerances;
    let mut compat = Worst::new("metric_compatibility", tol.compatibility);
    let mut recovery = Worst::new("torsion_recovery", tol.torsion_recovery);
    for p in cfg.probes(PROBES) {
        let gm = metric_at(g, &p)?;
        let c = canonical_at(g, e, &p)?;
        let t = torsion_at(g, e, &p)?;
        let gamma = &c.gamma;
        for i in 0..n {
            let dg = g.eval(&Dual::seed_axis(&p, i))?;
            for j in 0..n {
                for k in 0..n {
                    let mut rhs = 0.0;
                    for m in 0..n {
                        rhs += gamma[(m, i, j)] * gm[(m, k)] + gamma[(m, i, k)] * gm[(j, m)];
                    }
                    compat.see((dg[(j, k)].eps - rhs).abs(), || describe(&p));
                    let d = gamma[(k, i, j)] - gamma[(k, j, i)] - t.t[(k, i, j)];
                    recovery.see(d.abs(), || describe(&p));
                }
            }
        }
    }
    Ok(vec![compat.record(), recovery.record()])
}

/// `2g(∇_X Y, Z)` from the Koszul formula with the production torsion,
/// against the production coefficients, on adapted frame fields.
pub fn check_koszul(cfg: &ScenarioConfig) -> Result<Vec<CheckRecord>> {
    let (g, e, n) = (cfg.metric(), cfg.distribution(), cfg.n);
    let mut w = Worst::new("koszul_agreement", cfg.numerics.tolerances.koszul);
    for p in cfg.probes(HEAVY_PROBES) {
        let gm = metric_at(g, &p)?;
        let c = canonical_at(g, e, &p)?;
        let t = torsion_at(g, e, &p)?;
        let frame = adapted_frame_at(g, e, &p)?;
        let fields = frame_fields(cfg, &frame);
        for x in &fields {
            for y in &fields {
                let d = c.covariant_derivative(x, y)?;
                for (z, zv) in fields.iter().zip(&frame.vectors) {
                    let k = koszul_pairing(g, &t, x, y, z, &p)?;
                    w.see((gm.bilinear(&d, zv) - 0.5 * k).abs(), || describe(&p));
                }
            }
        }
        debug_assert_eq!(frame.vectors.len(), n);
    }
    Ok(vec![w.record()])
}

pub fn check_blend(cfg: &ScenarioConfig) -> Result<Vec<CheckRecord>> {
    let (g, e) = (cfg.metric(), cfg.distribution());
    let mut w = Worst::new("blend_torsion_affine", cfg.numerics.tolerances.blend);
    let mut rng = cfg.rng(3);
    for p in cfg.probes(LIGHT_PROBES) {
        let lambda: f64 = rng.gen_range(-1.0..2.0);
        let lc = levi_civita_at(g, &p)?;
        let can = canonical_at(g, e, &p)?;
        let t = torsion_at(g, e, &p)?;
        let mixed = blend(&lc, &can, lambda)?.torsion();
        let expected = t.t.map(|c| lambda * c);
        w.see(mixed.max_abs_diff(&expected), || format!("{} λ={lambda:.6}", describe(&p)));
    }
    Ok(vec![w.record()])
}

/// The Bott defect identity on adapted frame fields; empty when `E = TM`.
pub fn check_bott(cfg: &ScenarioConfig) -> Result<Vec<CheckRecord>> {
    let (g, e, r, n) = (cfg.metric(), cfg.distribution(), cfg.r, cfg.n);
    if r == n {
        return Ok(Vec::new());
    }
    let mut w = Worst::new("bott_defect_identity", cfg.numerics.tolerances.bott);
    for p in cfg.probes(LIGHT_PROBES) {
        let frame = adapted_frame_at(g, e, &p)?;
        let fields = frame_fields(cfg, &frame);
        for x in &fields[..r] {
            for xi in &fields[r..] {
                for eta in &fields[r..] {
                    let (lhs, rhs) = bott_defect_identity(g, e, x, xi, eta, &p)?;
                    w.see((lhs - rhs).abs(), || describe(&p));
                }
            }
        }
    }
    Ok(vec![w.record()])
}

pub fn check_curvature(cfg: &ScenarioConfig, involutive: bool) -> Result<Vec<CheckRecord>> {
    let (g, e, r, n) = (cfg.metric(), cfg.distribution(), cfg.r, cfg.n);
    let tol = cfg.numerics.tolerances.curvature_closure;
    let mut anti = Worst::new("curvature_antisymmetry", tol);
    let mut closure = Worst::new("curvature_E_closure", tol);
    for p in cfg.probes(HEAVY_PROBES) {
        let curv = curvature_at(g, e, &p)?;
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        anti.see((curv.get(l, k, i, j) + curv.get(l, k, j, i)).abs(), || describe(&p));
                    }
                }
            }
        }
        if involutive {
            let gm = metric_at(g, &p)?;
            let pr = projector_at(g, e, &p)?;
            let frame = adapted_frame_at(g, e, &p)?;
            let t = frame.tangent();
            for a in 0..r {
                for b in 0..r {
                    for c in 0..r {
                        let v = pr.normal(&curv.apply(&t[a], &t[b], &t[c]));
                        closure.see(linalg::g_norm(&gm, &v), || describe(&p));
                    }
                }
            }
        }
    }
    let mut out = vec![anti.record()];
    if involutive {
        out.push(closure.record());
    }
    Ok(out)
}

/// `g(∇_X Y, ξ) = 0` for adapted tangent fields `X, Y` and normal `ξ`.
pub fn check_total_geodesy(cfg: &ScenarioConfig) -> Result<Vec<CheckRecord>> {
    let (g, e, r) = (cfg.metric(), cfg.distribution(), cfg.r);
    let mut w = Worst::new("total_geodesy", cfg.numerics.tolerances.total_geodesy);
    for p in cfg.probes(LIGHT_PROBES) {
        let gm = metric_at(g, &p)?;
        let c = canonical_at(g, e, &p)?;
        let frame = adapted_frame_at(g, e, &p)?;
        let fields = frame_fields(cfg, &frame);
        for x in &fields[..r] {
            for y in &fields[..r] {
                let d = c.covariant_derivative(x, y)?;
                for xi in frame.normal() {
                    w.see(gm.bilinear(&d, xi).abs(), || describe(&p));
                }
            }
        }
    }
    Ok(vec![w.record()])
}

/// Half of the smallest half-width of the domain: a safe speed for unit
/// time geodesics from the base point.
pub fn probe_speed(cfg: &ScenarioConfig) -> f64 {
    let d = &cfg.domain;
    let half = d
        .lower
        .iter()
        .zip(&d.upper)
        .map(|(a, b)| 0.5 * (b - a))
        .fold(f64::INFINITY, f64::min);
    0.25 * half
}

/// `count` random vectors in `E` at the base point with g-norm `speed`.
pub fn tangent_velocities(cfg: &ScenarioConfig, count: usize, stream: u64) -> Result<Vec<Vec<f64>>> {
    let frame = adapted_frame_at(cfg.metric(), cfg.distribution(), &cfg.base_point)?;
    let speed = probe_speed(cfg);
    let mut rng = cfg.rng(stream);
    Ok((0..count)
        .map(|_| {
            let c: Vec<f64> = (0..cfg.r).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let len = linalg::norm2(&c).max(1e-3);
            let mut v = vec![0.0; cfg.n];
            for (ci, xi) in c.iter().zip(frame.tangent()) {
                linalg::axpy(speed * ci / len, xi, &mut v);
            }
            v
        })
        .collect())
}

fn max_along(g: &MetricField, e: &DistributionSpec, traj: &Trajectory, vs: &[Vec<f64>], normal: bool) -> Result<f64> {
    let mut worst = 0.0f64;
    for (x, v) in traj.points.iter().zip(vs) {
        let pr = projector_at(g, e, x)?;
        let gm = metric_at(g, x)?;
        let part = if normal { pr.normal(v) } else { pr.tangent(v) };
        worst = worst.max(linalg::g_norm(&gm, &part));
    }
    Ok(worst)
}

fn energy_drift(g: &MetricField, traj: &Trajectory, vs: &[Vec<f64>]) -> Result<f64> {
    let e0 = metric_at(g, &traj.points[0])?.bilinear(&vs[0], &vs[0]);
    let mut worst = 0.0f64;
    for (x, v) in traj.points.iter().zip(vs) {
        worst = worst.max((metric_at(g, x)?.bilinear(v, v) - e0).abs());
    }
    Ok(worst)
}

/// E-tangent geodesics stay E-tangent; transport keeps `E` and its
/// complement.
pub fn check_confinement(cfg: &ScenarioConfig) -> Result<Vec<CheckRecord>> {
    let (g, e, r, n) = (cfg.metric(), cfg.distribution(), cfg.r, cfg.n);
    let tol = &cfg.numerics.tolerances;
    let frame = adapted_frame_at(g, e, &cfg.base_point)?;
    let mut curve = Worst::new("geodesic_stays_in_E", tol.confinement);
    let mut energy = Worst::new("geodesic_energy_in_E", tol.energy);
    let mut keep_e = Worst::new("transport_keeps_E", tol.confinement);
    let mut keep_n = Worst::new("transport_keeps_normal", tol.confinement);
    let mut norm = Worst::new("transport_preserves_norm", tol.energy);
    for (s, v0) in tangent_velocities(cfg, CURVE_SAMPLES, 4)?.iter().enumerate() {
        let traj = integrate_geodesic(g, e, &cfg.base_point, v0, 1.0, cfg.numerics.h)?;
        let probe = || format!("v0={}", describe(v0));
        curve.see(max_along(g, e, &traj, &traj.velocities, true)?, probe);
        energy.see(energy_drift(g, &traj, &traj.velocities)?, probe);
        if s < TRANSPORT_SAMPLES {
            let x = &frame.vectors[s % r];
            let st = parallel_transport(g, e, &traj, x)?;
            keep_e.see(max_along(g, e, &traj, &st.values, true)?, probe);
            norm.see(energy_drift(g, &traj, &st.values)?, probe);
            if r < n {
                let xi = &frame.vectors[r + s % (n - r)];
                let st = parallel_transport(g, e, &traj, xi)?;
                keep_n.see(max_along(g, e, &traj, &st.values, false)?, probe);
                norm.see(energy_drift(g, &traj, &st.values)?, probe);
            }
        }
    }
    let mut out = vec![curve.record(), energy.record(), keep_e.record()];
    if r < n {
        out.push(keep_n.record());
    }
    out.push(norm.record());
    Ok(out)
}

/// Energy, transported norm and the discrete geodesic residual along the
/// scenario's reference geodesic.
pub fn check_reference_geodesic(cfg: &ScenarioConfig) -> Result<Vec<CheckRecord>> {
    let (g, e, h) = (cfg.metric(), cfg.distribution(), cfg.numerics.h);
    let tol = &cfg.numerics.tolerances;
    let traj = integrate_geodesic(g, e, &cfg.base_point, &cfg.initial_velocity, 1.0, h)?;
    let probe = format!("v0={}", describe(&cfg.initial_velocity));
    let energy = energy_drift(g, &traj, &traj.velocities)?;
    let mut rng = cfg.rng(5);
    let v: Vec<f64> = (0..cfg.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let st = parallel_transport(g, e, &traj, &v)?;
    let norm = energy_drift(g, &traj, &st.values)?;
    let residual = geodesic_residual(g, e, &traj)? / (h * h);
    Ok(vec![
        CheckRecord::new("reference_energy", probe.clone(), energy, tol.energy, Relation::AtMost),
        CheckRecord::new("reference_transport_norm", probe.clone(), norm, tol.energy, Relation::AtMost),
        CheckRecord::new("geodesic_residual_constant", probe, residual, 0.0, Relation::Info),
    ])
}

fn relative(a: &[f64], b: &[f64]) -> f64 {
    let scale = linalg::norm2(b);
    let d = linalg::norm2(&linalg::sub(a, b));
    if scale > 0.0 {
        d / scale
    } else {
        d
    }
}

/// Initial covariant derivative `Y` of the Jacobi field compared against
/// the variation oracle.
pub fn jacobi_probe_vector(cfg: &ScenarioConfig) -> Vec<f64> {
    let mut rng = cfg.rng(6);
    (0..cfg.n).map(|_| rng.gen_range(-1.0..1.0) * probe_speed(cfg)).collect()
}

/// Velocity solves the Jacobi equation; the ODE agrees with the variation
/// oracle; on involutive scenarios Jacobi fields from `E` stay in `E`.
pub fn check_jacobi(cfg: &ScenarioConfig, involutive: bool) -> Result<Vec<CheckRecord>> {
    let (g, e, n, h) = (cfg.metric(), cfg.distribution(), cfg.n, cfg.numerics.h);
    let tol = &cfg.numerics.tolerances;
    let (p, x) = (&cfg.base_point, &cfg.initial_velocity);
    let traj = integrate_geodesic(g, e, p, x, 1.0, h)?;
    let probe = format!("v0={}", describe(x));

    let st = jacobi_field_ode(g, e, &traj, x, &vec![0.0; n])?;
    let velocity = st
        .values
        .iter()
        .zip(&traj.velocities)
        .map(|(j, v)| linalg::norm2(&linalg::sub(j, v)))
        .fold(0.0, f64::max);

    let y = jacobi_probe_vector(cfg);
    let st = jacobi_field_ode(g, e, &traj, &vec![0.0; n], &y)?;
    let mut oracle = Worst::new("jacobi_vs_variation", tol.jacobi_oracle);
    for t in JACOBI_TIMES {
        let fd = variation_jacobi_oracle(g, e, p, x, &y, t, h)?;
        let j = &st.values[traj.index_of(t)];
        oracle.see(relative(j, &fd), || format!("{probe} Y={} t={t}", describe(&y)));
    }
    let mut out = vec![
        CheckRecord::new("jacobi_velocity_solution", probe, velocity, tol.confinement, Relation::AtMost),
        oracle.record(),
    ];
    if involutive {
        let vs = tangent_velocities(cfg, 2, 7)?;
        let traj = integrate_geodesic(g, e, p, &vs[0], 1.0, h)?;
        let st = jacobi_field_ode(g, e, &traj, &vec![0.0; n], &vs[1])?;
        let conf = max_along(g, e, &traj, &st.values, true)?;
        out.push(CheckRecord::new(
            "jacobi_stays_in_E",
            format!("v0={} J'0={}", describe(&vs[0]), describe(&vs[1])),
            conf,
            tol.jacobi_confinement,
            Relation::AtMost,
        ));
    }
    Ok(out)
}

pub fn chart_options(cfg: &ScenarioConfig, mode: IntegrabilityMode) -> ChartOptions {
    ChartOptions {
        h: cfg.numerics.chart_step,
        frame_rule: cfg.numerics.frame_rule,
        mode,
    }
}

/// Grid points used for the determinant-sign survey: centre, face centres
/// and corners of the parameter box.
pub fn sign_survey(n: usize, delta: f64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; n]];
    for i in 0..n {
        for s in [-delta, delta] {
            let mut x = vec![0.0; n];
            x[i] = s;
            out.push(x);
        }
    }
    for mask in 0..(1usize << n) {
        out.push((0..n).map(|i| if mask >> i & 1 == 1 { delta } else { -delta }).collect());
    }
    out
}

fn chart_jacobian_error(chart: &FrobeniusChart<'_>) -> Result<f64> {
    let n = chart.dim();
    let step = crate::frobenius::FD_STEP;
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        a[i] = step;
        b[i] = -step;
        let col = linalg::scaled(0.5 / step, &linalg::sub(&chart.map(&a)?, &chart.map(&b)?));
        worst = worst.max(linalg::norm2(&linalg::sub(&col, &chart.frame.vectors[i])));
    }
    Ok(worst)
}

pub fn check_chart(cfg: &ScenarioConfig) -> Result<Vec<CheckRecord>> {
    let (g, e, r, n) = (cfg.metric(), cfg.distribution(), cfg.r, cfg.n);
    let num = &cfg.numerics;
    let tol = &num.tolerances;
    let p = &cfg.base_point;
    let chart = build_frobenius_chart(g, e, p, num.delta, num.m, chart_options(cfg, IntegrabilityMode::Strict))?;
    let mut tangency = Worst::new("chart_tangency", tol.tangency);
    for (x, res) in chart.params.iter().zip(chart.residuals()?) {
        tangency.see(res, || describe(x));
    }

    let leaf = leaf_sample(g, e, p, num.delta, num.m, num.chart_step, IntegrabilityMode::Strict)?;
    let mut consistency = Worst::new("leaf_chart_consistency", tol.leaf_consistency);
    let slice = chart.params.iter().zip(&chart.points).filter(|(x, _)| x[r..].iter().all(|&c| c == 0.0));
    for ((t, a), (_, b)) in leaf.params.iter().zip(&leaf.points).zip(slice) {
        consistency.see(linalg::norm2(&linalg::sub(a, b)), || describe(t));
    }
    let wide = leaf_sample(g, e, p, num.epsilon, num.m, num.chart_step, IntegrabilityMode::Strict)?;
    let mut leaf_tangency = Worst::new("leaf_tangency", tol.tangency);
    for (t, res) in wide.params.iter().zip(&wide.residuals) {
        leaf_tangency.see(*res, || describe(t));
    }

    let origin = vec![0.0; n];
    let at0 = chart_invertibility_report(&chart, &origin)?;
    let mut flips = 0usize;
    let mut where_ = Vec::new();
    for x in sign_survey(n, num.delta) {
        let rep = chart_invertibility_report(&chart, &x)?;
        if rep.singular || rep.det_sign != at0.det_sign {
            flips += 1;
            where_.push(describe(&x));
        }
    }
    Ok(vec![
        tangency.record(),
        consistency.record(),
        leaf_tangency.record(),
        CheckRecord::new(
            "chart_jacobian_matches_frame",
            describe(&origin),
            chart_jacobian_error(&chart)?,
            tol.tangency,
            Relation::AtMost,
        ),
        CheckRecord::new(
            "chart_condition_at_origin",
            describe(&origin),
            (at0.condition - 1.0).abs(),
            tol.tangency,
            Relation::AtMost,
        ),
        CheckRecord::new(
            "chart_determinant_sign_changes",
            if where_.is_empty() { "none".to_string() } else { where_.join(" ") },
            flips as f64,
            0.0,
            Relation::AtMost,
        ),
    ])
}

/// On a non-involutive scenario the construction must visibly fail.
pub fn check_negative_control(cfg: &ScenarioConfig, class: &Classification) -> Result<Vec<CheckRecord>> {
    let (g, e) = (cfg.metric(), cfg.distribution());
    let num = &cfg.numerics;
    let floor = num.tolerances.negative_control;
    let p = &cfg.base_point;
    let mode = IntegrabilityMode::WarnAndProceed;
    let chart = build_frobenius_chart(g, e, p, num.delta, num.m, chart_options(cfg, mode))?;
    let mut worst = (0.0f64, String::from("none"));
    for (x, res) in chart.params.iter().zip(chart.residuals()?) {
        if res > worst.0 {
            worst = (res, describe(x));
        }
    }
    let leaf = leaf_sample(g, e, p, num.epsilon, num.m, num.chart_step, mode)?;
    Ok(vec![
        CheckRecord::new(
            "negative_control_involutivity",
            describe(p),
            class.base_residual,
            floor,
            Relation::Above,
        ),
        CheckRecord::new("negative_control_chart_tangency", worst.1, worst.0, floor, Relation::Above),
        CheckRecord::new(
            "negative_control_leaf_tangency",
            format!("epsilon={}", num.epsilon),
            leaf.max_residual(),
            floor,
            Relation::Above,
        ),
    ])
}

/// Observed RK4 order on the reference geodesic. When both errors are at
/// roundoff their ratio is noise; if it then falls short, the integrator is
/// exact on the scenario and the order is reported as infinite.
pub fn check_convergence(cfg: &ScenarioConfig) -> Result<CheckRecord> {
    let sc = self_convergence(cfg.metric(), cfg.distribution(), &cfg.base_point, &cfg.initial_velocity, 1.0)?;
    let threshold = cfg.numerics.tolerances.convergence_order;
    let exact = sc.error_h <= EXACT_ERROR && sc.error_half <= EXACT_ERROR;
    let order = if exact && !(sc.order >= threshold) {
        f64::INFINITY
    } else {
        sc.order
    };
    Ok(CheckRecord::new(
        "rk4_order",
        format!("errors {:e} {:e}", sc.error_h, sc.error_half),
        order,
        threshold,
        Relation::AtLeast,
    ))
}

/// Canonical, Schouten–Van Kampen and Vranceanu derivatives of adapted
/// frame fields compared in g-norm, plus the Bott defect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub point: Vec<f64>,
    pub x: usize,
    pub y: usize,
    pub canonical_vs_schouten: f64,
    pub canonical_vs_vranceanu: f64,
    pub bott_defect: Option<f64>,
}

pub fn comparison_rows(cfg: &ScenarioConfig, points: &[Vec<f64>]) -> Result<Vec<ComparisonRow>> {
    use crate::connection::{bott_at, schouten_van_kampen_at, vranceanu_at};
    let (g, e, r) = (cfg.metric(), cfg.distribution(), cfg.r);
    let mut rows = Vec::new();
    for p in points {
        let gm = metric_at(g, p)?;
        let c: ConnectionEval = canonical_at(g, e, p)?;
        let frame = adapted_frame_at(g, e, p)?;
        let fields = frame_fields(cfg, &frame);
        for (a, x) in fields.iter().enumerate() {
            for (b, y) in fields.iter().enumerate() {
                let d = c.covariant_derivative(x, y)?;
                let svk = schouten_van_kampen_at(g, e, x, y, p)?;
                let vr = vranceanu_at(g, e, x, y, p)?;
                let bott = if a < r && b >= r {
                    Some(bott_at(g, e, x, y, p)?.defect)
                } else {
                    None
                };
                rows.push(ComparisonRow {
                    point: p.clone(),
                    x: a,
                    y: b,
                    canonical_vs_schouten: linalg::g_norm(&gm, &linalg::sub(&d, &svk)),
                    canonical_vs_vranceanu: linalg::g_norm(&gm, &linalg::sub(&d, &vr)),
                    bott_defect: bott,
                });
            }
        }
    }
    Ok(rows)
}
