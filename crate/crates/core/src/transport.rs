//! Fixed-step RK4 integration of the canonical connection's ODEs:
//! geodesics, parallel transport, the exponential map and Jacobi fields.
//!
//! Every integration runs on the grid `t_k = k·T/N` with `N = ceil(T/h)`.
//! Parallel transport and Jacobi fields integrate an augmented system that
//! contains the geodesic itself; its curve part performs exactly the same
//! arithmetic as [`integrate_geodesic`], so the samples coincide bitwise with
//! the stored trajectory.

use crate::connection::{canonical_gamma, canonical_generic, Tensor3};
use crate::error::{Error, Result};
use crate::geometry::{DistributionSpec, MetricField};
use crate::linalg;
use crate::real::Dual;

/// Sampled geodesic `γ(t_k)`, `γ′(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// Step actually used, `T/N`.
    pub h: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn end_point(&self) -> &[f64] {
        self.points.last().expect("trajectory has an initial sample")
    }

    pub fn end_velocity(&self) -> &[f64] {
        self.velocities.last().expect("trajectory has an initial sample")
    }

    /// Index of the sample closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        let k = (t / self.h).round();
        (k.max(0.0) as usize).min(self.len().saturating_sub(1))
    }
}

/// Vectors carried along a trajectory: parallel-transported `V(t_k)`, or a
/// Jacobi field `J(t_k)` with its covariant derivative `∇_{γ′}J(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportState {
    pub trajectory: Trajectory,
    pub values: Vec<Vec<f64>>,
    pub derivatives: Option<Vec<Vec<f64>>>,
}

fn coefficients(g: &MetricField, e: &DistributionSpec, x: &[f64]) -> Result<Tensor3<f64>> {
    canonical_gamma(g, e, x)
}

fn steps(t_end: f64, h: f64) -> Result<(usize, f64)> {
    if !(h > 0.0 && t_end > 0.0) || !h.is_finite() || !t_end.is_finite() {
        return Err(Error::Precondition(format!(
            "need T > 0 and h > 0, got T = {t_end}, h = {h}"
        )));
    }
    // guard against T/h landing a rounding error above an integer
    let n = ((t_end / h) * (1.0 - 4.0 * f64::EPSILON)).ceil().max(1.0) as usize;
    Ok((n, t_end / n as f64))
}

fn rk4_step(
    state: &[f64],
    h: f64,
    f: &mut impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let shifted = |k: &[f64], c: f64| -> Vec<f64> {
        state.iter().zip(k).map(|(s, d)| s + c * d).collect()
    };
    let k1 = f(state)?;
    let k2 = f(&shifted(&k1, 0.5 * h))?;
    let k3 = f(&shifted(&k2, 0.5 * h))?;
    let k4 = f(&shifted(&k3, h))?;
    Ok((0..state.len())
        .map(|i| state[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrate a state whose first `2n` entries are `(γ, γ′)`; returns the
/// trajectory and the full state at every sample.
fn integrate(
    g: &MetricField,
    n: usize,
    init: Vec<f64>,
    t_end: f64,
    h: f64,
    mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<(Trajectory, Vec<Vec<f64>>)> {
    let (steps, h) = steps(t_end, h)?;
    let domain = g.domain();
    if !domain.contains(&init[..n]) {
        return Err(Error::Precondition(format!(
            "initial point {:?} is outside the domain",
            &init[..n]
        )));
    }
    let mut traj = Trajectory {
        times: vec![0.0],
        points: vec![init[..n].to_vec()],
        velocities: vec![init[n..2 * n].to_vec()],
        h,
    };
    let mut states = vec![init];
    for k in 1..=steps {
        let t = k as f64 * h;
        let next = rk4_step(states.last().unwrap(), h, &mut f)?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        if !domain.contains(&next[..n]) {
            return Err(Error::DomainExit {
                t,
                point: next[..n].to_vec(),
                partial: Box::new(traj),
            });
        }
        traj.times.push(t);
        traj.points.push(next[..n].to_vec());
        traj.velocities.push(next[n..2 * n].to_vec());
        states.push(next);
    }
    Ok((traj, states))
}

fn check_dims(g: &MetricField, e: &DistributionSpec, vs: &[&[f64]]) -> Result<usize> {
    let n = g.dim();
    if e.dim() != n || vs.iter().any(|v| v.len() != n) {
        return Err(Error::Dimension(format!("expected vectors of length {n}")));
    }
    Ok(n)
}

/// `γ″ = −Γ(γ′, γ′)` from `(p0, v0)` over `[0, T]`.
pub fn integrate_geodesic(
    g: &MetricField,
    e: &DistributionSpec,
    p0: &[f64],
    v0: &[f64],
    t_end: f64,
    h: f64,
) -> Result<Trajectory> {
    let n = check_dims(g, e, &[p0, v0])?;
    let init = [p0, v0].concat();
    let (traj, _) = integrate(g, n, init, t_end, h, |s| {
        let (x, v) = s.split_at(n);
        let gamma = coefficients(g, e, x)?;
        let acc = gamma.contract(v, v);
        Ok(v.iter().copied().chain(acc.into_iter().map(|a| -a)).collect())
    })?;
    Ok(traj)
}

/// `exp_p(v)`: endpoint of the geodesic at `t = 1`.
pub fn exp_map(g: &MetricField, e: &DistributionSpec, p: &[f64], v: &[f64], h: f64) -> Result<Vec<f64>> {
    check_dims(g, e, &[p, v])?;
    if v.iter().all(|&c| c == 0.0) {
        return Ok(p.to_vec());
    }
    Ok(integrate_geodesic(g, e, p, v, 1.0, h)?.end_point().to_vec())
}

fn initial_state(traj: &Trajectory) -> Result<Vec<f64>> {
    if traj.len() < 2 || !(traj.h > 0.0) {
        return Err(Error::Precondition("trajectory needs at least one step".into()));
    }
    Ok([traj.points[0].as_slice(), &traj.velocities[0]].concat())
}

/// `V′ = −Γ(γ′, V)` along the trajectory.
pub fn parallel_transport(
    g: &MetricField,
    e: &DistributionSpec,
    traj: &Trajectory,
    v0: &[f64],
) -> Result<TransportState> {
    let n = check_dims(g, e, &[v0])?;
    let t_end = traj.h * (traj.len() - 1) as f64;
    let init = [initial_state(traj)?, v0.to_vec()].concat();
    let (path, states) = integrate(g, n, init, t_end, traj.h, |s| {
        let (x, rest) = s.split_at(n);
        let (v, w) = rest.split_at(n);
        let gamma = coefficients(g, e, x)?;
        let acc = gamma.contract(v, v);
        let dw = gamma.contract(v, w);
        Ok(v.iter()
            .copied()
            .chain(acc.into_iter().map(|a| -a))
            .chain(dw.into_iter().map(|a| -a))
            .collect())
    })?;
    Ok(TransportState {
        trajectory: path,
        values: states.iter().map(|s| s[2 * n..].to_vec()).collect(),
        derivatives: None,
    })
}

/// Right-hand side of the Jacobi system in coordinate components.
///
/// State `(x, v, J, K)` with `K` the coordinate derivative of `J`. Writing
/// `W = ∇J = K + Γ(v, J)`, the equation `∇∇J = R(v,J)v + ∇(τ(v,J))` gives
/// `K′ = R(v,J)v + ∇(τ(v,J)) − Γ(v,W) − (∂_vΓ)(v,J) − Γ(v′,J) − Γ(v,K)`.
fn jacobi_rhs(g: &MetricField, e: &DistributionSpec, n: usize, s: &[f64]) -> Result<Vec<f64>> {
    let (x, rest) = s.split_at(n);
    let (v, rest) = rest.split_at(n);
    let (j, k) = rest.split_at(n);
    let (gd, td) = canonical_generic(g, e, &Dual::seed(x, v))?;
    let gamma = gd.map(|d| d.re);
    let dv_gamma = gd.map(|d| d.eps);
    let tors = td.map(|d| d.re);
    let dv_tors = td.map(|d| d.eps);
    let (gj, _) = canonical_generic(g, e, &Dual::seed(x, j))?;
    let dj_gamma = gj.map(|d| d.eps);

    let acc: Vec<f64> = gamma.contract(v, v).into_iter().map(|a| -a).collect();
    // R(v, J) v
    let curv = {
        let mut r = linalg::sub(&dv_gamma.contract(j, v), &dj_gamma.contract(v, v));
        r = linalg::add(&r, &gamma.contract(v, &gamma.contract(j, v)));
        linalg::sub(&r, &gamma.contract(j, &gamma.contract(v, v)))
    };
    // ∇_v (τ(v, J)) with coordinate derivative of τ(v, J) along the curve
    let tau_vj = tors.contract(v, j);
    let mut dtau = dv_tors.contract(v, j);
    dtau = linalg::add(&dtau, &tors.contract(&acc, j));
    dtau = linalg::add(&dtau, &tors.contract(v, k));
    let cov_tau = linalg::add(&dtau, &gamma.contract(v, &tau_vj));

    let w = linalg::add(k, &gamma.contract(v, j));
    let mut kdot = linalg::add(&curv, &cov_tau);
    kdot = linalg::sub(&kdot, &gamma.contract(v, &w));
    kdot = linalg::sub(&kdot, &dv_gamma.contract(v, j));
    kdot = linalg::sub(&kdot, &gamma.contract(&acc, j));
    kdot = linalg::sub(&kdot, &gamma.contract(v, k));

    Ok([v, &acc, k, &kdot].concat())
}

/// Jacobi field with `J(0) = j0` and `∇_{γ′}J(0) = dj0`. Returned
/// derivatives are covariant.
pub fn jacobi_field_ode(
    g: &MetricField,
    e: &DistributionSpec,
    traj: &Trajectory,
    j0: &[f64],
    dj0: &[f64],
) -> Result<TransportState> {
    let n = check_dims(g, e, &[j0, dj0])?;
    let t_end = traj.h * (traj.len() - 1) as f64;
    let start = initial_state(traj)?;
    let gamma0 = coefficients(g, e, &start[..n])?;
    let k0 = linalg::sub(dj0, &gamma0.contract(&start[n..], j0));
    let init = [start, j0.to_vec(), k0].concat();
    let (path, states) = integrate(g, n, init, t_end, traj.h, |s| jacobi_rhs(g, e, n, s))?;
    let mut values = Vec::with_capacity(states.len());
    let mut derivatives = Vec::with_capacity(states.len());
    for s in &states {
        let gamma = coefficients(g, e, &s[..n])?;
        let j = &s[2 * n..3 * n];
        values.push(j.to_vec());
        derivatives.push(linalg::add(&s[3 * n..], &gamma.contract(&s[n..2 * n], j)));
    }
    Ok(TransportState {
        trajectory: path,
        values,
        derivatives: Some(derivatives),
    })
}

/// Finite-difference step in `u` for [`variation_jacobi_oracle`].
pub const VARIATION_STEP: f64 = 1e-5;

/// `∂/∂u exp_p(t(X + uY))` at `u = 0` by central differences.
#[allow(clippy::too_many_arguments)]
pub fn variation_jacobi_oracle(
    g: &MetricField,
    e: &DistributionSpec,
    p: &[f64],
    x: &[f64],
    y: &[f64],
    t: f64,
    h: f64,
) -> Result<Vec<f64>> {
    let n = check_dims(g, e, &[p, x, y])?;
    if t == 0.0 || y.iter().all(|&c| c == 0.0) {
        return Ok(vec![0.0; n]);
    }
    let shoot = |u: f64| -> Result<Vec<f64>> {
        let w: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + u * b).collect();
        Ok(integrate_geodesic(g, e, p, &w, t, h)?.end_point().to_vec())
    };
    let plus = shoot(VARIATION_STEP)?;
    let minus = shoot(-VARIATION_STEP)?;
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(a, b)| (a - b) / (2.0 * VARIATION_STEP))
        .collect())
}

/// Largest `‖(γ_{k+1} − 2γ_k + γ_{k−1})/h² + Γ(γ′_k, γ′_k)‖` over interior
/// samples; `O(h²)` for a correctly integrated geodesic.
pub fn geodesic_residual(g: &MetricField, e: &DistributionSpec, traj: &Trajectory) -> Result<f64> {
    let h2 = traj.h * traj.h;
    let mut worst = 0.0f64;
    for k in 1..traj.len().saturating_sub(1) {
        let (a, b, c) = (&traj.points[k - 1], &traj.points[k], &traj.points[k + 1]);
        let gamma = coefficients(g, e, b)?;
        let acc = gamma.contract(&traj.velocities[k], &traj.velocities[k]);
        let r: Vec<f64> = (0..b.len())
            .map(|i| (c[i] - 2.0 * b[i] + a[i]) / h2 + acc[i])
            .collect();
        worst = worst.max(linalg::norm2(&r));
    }
    Ok(worst)
}

/// Endpoint errors at `h` and `h/2` against a fine reference, and the
/// observed order `log2(err_h / err_{h/2})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfConvergence {
    pub h: f64,
    pub error_h: f64,
    pub error_half: f64,
    pub order: f64,
}

pub const CONVERGENCE_STEPS: (f64, f64, f64) = (1e-2, 5e-3, 1e-4);

pub fn self_convergence(
    g: &MetricField,
    e: &DistributionSpec,
    p0: &[f64],
    v0: &[f64],
    t_end: f64,
) -> Result<SelfConvergence> {
    let (coarse, fine, reference) = CONVERGENCE_STEPS;
    let end = |h: f64| -> Result<Vec<f64>> {
        let tr = integrate_geodesic(g, e, p0, v0, t_end, h)?;
        Ok([tr.end_point(), tr.end_velocity()].concat())
    };
    let r = end(reference)?;
    let error_h = linalg::norm2(&linalg::sub(&end(coarse)?, &r));
    let error_half = linalg::norm2(&linalg::sub(&end(fine)?, &r));
    Ok(SelfConvergence {
        h: coarse,
        error_h,
        error_half,
        order: (error_h / error_half).log2(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{adapted_frame_at, metric_at, projector_at, Domain};

    fn cube() -> Domain {
        Domain::new(vec![-1.0; 3], vec![1.0; 3]).unwrap()
    }

    fn planes() -> (MetricField, DistributionSpec) {
        (
            MetricField::euclidean(3, cube()),
            DistributionSpec::parse(3, &[vec!["1", "0", "0"], vec!["0", "1", "0"]]).unwrap(),
        )
    }

    fn sphere() -> (MetricField, DistributionSpec) {
        let d = Domain::new(vec![-1.5, -1.5, 1.0], vec![1.5, 1.5, 3.0]).unwrap();
        (
            MetricField::euclidean(3, d),
            DistributionSpec::parse(3, &[vec!["x3", "0", "-x1"], vec!["0", "x3", "-x2"]]).unwrap(),
        )
    }

    fn warped() -> (MetricField, DistributionSpec) {
        (
            MetricField::parse(3, &["exp(2*x3)", "0", "0", "exp(2*x3)", "0", "1"], cube()).unwrap(),
            DistributionSpec::parse(3, &[vec!["1", "0", "0"], vec!["0", "1", "0"]]).unwrap(),
        )
    }

    #[test]
    fn step_count() {
        assert_eq!(steps(1.0, 1e-3).unwrap().0, 1000);
        assert_eq!(steps(0.25, 1e-3).unwrap().0, 250);
        assert_eq!(steps(1.0, 0.3).unwrap().0, 4);
        assert!(steps(1.0, 0.0).is_err());
    }

    #[test]
    fn euclidean_geodesic_is_a_line() {
        let (g, e) = planes();
        let p = [0.1, -0.2, 0.3];
        let v = [0.3, 0.2, -0.1];
        let tr = integrate_geodesic(&g, &e, &p, &v, 1.0, 1e-2).unwrap();
        for (t, x) in tr.times.iter().zip(&tr.points) {
            for i in 0..3 {
                assert!((x[i] - (p[i] + t * v[i])).abs() < 1e-14);
            }
        }
        assert_eq!(exp_map(&g, &e, &p, &[0.0; 3], 1e-3).unwrap(), p.to_vec());
    }

    #[test]
    fn sphere_geodesic_stays_on_sphere() {
        let (g, e) = sphere();
        let p = [0.0, 0.0, 2.0];
        let tr = integrate_geodesic(&g, &e, &p, &[0.5, 0.3, 0.0], 1.0, 1e-3).unwrap();
        for x in &tr.points {
            assert!((linalg::norm2(x) - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn domain_exit_keeps_partial_trajectory() {
        let (g, e) = planes();
        match integrate_geodesic(&g, &e, &[0.0; 3], &[2.0, 0.0, 0.0], 1.0, 1e-2) {
            Err(Error::DomainExit { t, partial, .. }) => {
                assert!(t > 0.49 && t < 0.51);
                assert!(partial.points.iter().all(|x| x[0] < 1.0));
            }
            other => panic!("expected domain exit, got {other:?}"),
        }
    }

    #[test]
    fn transport_reuses_the_trajectory() {
        let (g, e) = warped();
        let tr = integrate_geodesic(&g, &e, &[0.1, 0.0, -0.2], &[0.3, -0.2, 0.4], 0.5, 1e-2).unwrap();
        let st = parallel_transport(&g, &e, &tr, &[1.0, 0.5, -0.3]).unwrap();
        assert_eq!(st.trajectory, tr);
        let gm0 = metric_at(&g, &tr.points[0]).unwrap();
        let gm1 = metric_at(&g, tr.end_point()).unwrap();
        let v0 = &st.values[0];
        let v1 = st.values.last().unwrap();
        assert!((gm0.bilinear(v0, v0) - gm1.bilinear(v1, v1)).abs() < 1e-7);
    }

    #[test]
    fn transport_preserves_distribution_on_sphere() {
        let (g, e) = sphere();
        let p = [0.0, 0.0, 2.0];
        let frame = adapted_frame_at(&g, &e, &p).unwrap();
        let v = linalg::add(&linalg::scaled(0.6, &frame.vectors[0]), &linalg::scaled(0.3, &frame.vectors[1]));
        let tr = integrate_geodesic(&g, &e, &p, &v, 1.0, 1e-3).unwrap();
        let along = parallel_transport(&g, &e, &tr, &frame.vectors[1]).unwrap();
        let across = parallel_transport(&g, &e, &tr, &frame.vectors[2]).unwrap();
        for k in (0..tr.len()).step_by(50) {
            let proj = projector_at(&g, &e, &tr.points[k]).unwrap();
            let gm = metric_at(&g, &tr.points[k]).unwrap();
            assert!(linalg::g_norm(&gm, &proj.normal(&along.values[k])) < 1e-6);
            assert!(linalg::g_norm(&gm, &proj.tangent(&across.values[k])) < 1e-6);
        }
    }

    #[test]
    fn euclidean_jacobi_is_affine() {
        let (g, e) = planes();
        let tr = integrate_geodesic(&g, &e, &[0.0; 3], &[0.2, 0.1, 0.0], 1.0, 1e-2).unwrap();
        let j0 = [0.1, 0.2, 0.3];
        let dj0 = [0.3, -0.1, 0.2];
        let st = jacobi_field_ode(&g, &e, &tr, &j0, &dj0).unwrap();
        for (t, j) in tr.times.iter().zip(&st.values) {
            for i in 0..3 {
                assert!((j[i] - (j0[i] + t * dj0[i])).abs() < 1e-14);
            }
        }
        let oracle = variation_jacobi_oracle(&g, &e, &[0.0; 3], &[0.2, 0.1, 0.0], &dj0, 1.0, 1e-2).unwrap();
        for i in 0..3 {
            assert!((oracle[i] - dj0[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn velocity_is_a_jacobi_field() {
        let (g, e) = warped();
        let p = [0.1, 0.2, -0.1];
        let v = [0.4, -0.3, 0.5];
        let tr = integrate_geodesic(&g, &e, &p, &v, 1.0, 1e-3).unwrap();
        let st = jacobi_field_ode(&g, &e, &tr, &v, &[0.0; 3]).unwrap();
        for (j, vel) in st.values.iter().zip(&tr.velocities) {
            assert!(linalg::norm2(&linalg::sub(j, vel)) < 1e-6);
        }
    }

    #[test]
    fn jacobi_matches_variation_on_warped() {
        let (g, e) = warped();
        let p = [0.0, 0.1, 0.2];
        let x = [0.3, 0.2, -0.4];
        let y = [-0.2, 0.5, 0.3];
        let tr = integrate_geodesic(&g, &e, &p, &x, 1.0, 1e-3).unwrap();
        let st = jacobi_field_ode(&g, &e, &tr, &[0.0; 3], &y).unwrap();
        for t in [0.25, 0.5, 1.0] {
            let want = variation_jacobi_oracle(&g, &e, &p, &x, &y, t, 1e-3).unwrap();
            let got = &st.values[tr.index_of(t)];
            let rel = linalg::norm2(&linalg::sub(got, &want)) / linalg::norm2(&want);
            assert!(rel < 1e-4, "t = {t}: {rel:e}");
        }
    }

    #[test]
    fn geodesic_residual_is_small() {
        let (g, e) = warped();
        let tr = integrate_geodesic(&g, &e, &[0.0; 3], &[0.3, 0.2, 0.4], 1.0, 1e-2).unwrap();
        assert!(geodesic_residual(&g, &e, &tr).unwrap() < 1e-3);
    }
}
