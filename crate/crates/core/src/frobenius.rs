//! Leaves and Frobenius charts built from geodesics of the canonical
//! connection.
//!
//! The leaf through `p` is sampled as `exp_p(Σ t_i X_i)` and the chart is
//!
//! ```text
//! Φ(x) = exp_q(x¹Y_1 + … + xʳY_r),   q = exp_p(x^{r+1}ξ_{r+1} + … + xⁿξ_n)
//! ```
//!
//! where `Y_i` is a frame of `E_q` chosen by a [`FrameRule`]. Derivatives of
//! both maps are central finite differences so the check does not share
//! machinery with the integrator it validates.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    adapted_frame_at, involutivity_residual, metric_at, orthonormal_tangent, projector_at, AdaptedFrame,
    DistributionSpec, MetricField,
};
use crate::linalg::{self, Mat};
use crate::transport::{exp_map, integrate_geodesic, parallel_transport};

/// Largest involutivity residual at the base point accepted in strict mode.
pub const INVOLUTIVITY_TOL: f64 = 1e-6;
/// Central-difference step for chart and leaf derivatives.
pub const FD_STEP: f64 = 1e-5;
/// Condition numbers above this count as a singular Jacobian.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// How the E-frame at the foot `q` of the transverse geodesic is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameRule {
    /// Parallel-transport `X_1..X_r` from `p` to `q`, project onto `E_q` and
    /// re-orthonormalize.
    #[default]
    ProjectedTransport,
    /// Tangent block of the adapted frame at `q`.
    AdaptedAtBase,
}

/// Behavior when the base point fails the involutivity test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrabilityMode {
    #[default]
    Strict,
    /// Record a warning and build the object anyway.
    WarnAndProceed,
}

fn integrability_gate(
    g: &MetricField,
    e: &DistributionSpec,
    p: &[f64],
    mode: IntegrabilityMode,
) -> Result<(f64, Vec<String>)> {
    let res = involutivity_residual(g, e, p)?;
    if res <= INVOLUTIVITY_TOL {
        return Ok((res, Vec::new()));
    }
    match mode {
        IntegrabilityMode::Strict => Err(Error::Precondition(format!(
            "distribution is not involutive at {p:?} (residual {res:e})"
        ))),
        IntegrabilityMode::WarnAndProceed => Ok((
            res,
            vec![format!(
                "distribution is not involutive at {p:?} (residual {res:e}); proceeding"
            )],
        )),
    }
}

/// `m` evenly spaced values on `[−radius, radius]`.
pub fn grid_axis(radius: f64, m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..m)
            .map(|k| -radius + 2.0 * radius * k as f64 / (m - 1) as f64)
            .collect(),
    }
}

/// Cartesian grid `axis^dim`, first parameter varying slowest.
pub fn grid(radius: f64, m: usize, dim: usize) -> Vec<Vec<f64>> {
    let axis = grid_axis(radius, m);
    let mut out = vec![Vec::with_capacity(dim)];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&a| {
                    let mut v = prefix.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

/// A map from parameters to points whose first `leaf_dims` parameter
/// directions should be tangent to `E`.
pub trait Parametrization: Sync {
    fn param_dim(&self) -> usize;
    fn leaf_dims(&self) -> usize;
    /// Half-width of the parameter box on which the map is sampled.
    fn radius(&self) -> f64;
    fn map(&self, x: &[f64]) -> Result<Vec<f64>>;
}

fn check_on_grid<M: Parametrization + ?Sized>(map: &M, x: &[f64]) -> Result<()> {
    let limit = map.radius() * (1.0 + 1e-12);
    if x.len() != map.param_dim() || x.iter().any(|c| !(c.abs() <= limit)) {
        return Err(Error::OffGrid(x.to_vec()));
    }
    Ok(())
}

fn central_column<M: Parametrization + ?Sized>(map: &M, x: &[f64], i: usize) -> Result<Vec<f64>> {
    let mut a = x.to_vec();
    let mut b = x.to_vec();
    a[i] += FD_STEP;
    b[i] -= FD_STEP;
    let (fa, fb) = (map.map(&a)?, map.map(&b)?);
    Ok(fa.iter().zip(&fb).map(|(u, v)| (u - v) / (2.0 * FD_STEP)).collect())
}

/// `max_i ‖Q d_i‖_g / ‖d_i‖_g` over the leaf directions, `d_i` the central
/// difference of the map at `x`.
pub fn tangency_residual<M: Parametrization + ?Sized>(
    g: &MetricField,
    e: &DistributionSpec,
    map: &M,
    x: &[f64],
) -> Result<f64> {
    check_on_grid(map, x)?;
    let at = map.map(x)?;
    residual_at(g, e, map, x, &at)
}

fn residual_at<M: Parametrization + ?Sized>(
    g: &MetricField,
    e: &DistributionSpec,
    map: &M,
    x: &[f64],
    at: &[f64],
) -> Result<f64> {
    let proj = projector_at(g, e, at)?;
    let gm = metric_at(g, at)?;
    let mut worst = 0.0f64;
    for i in 0..map.leaf_dims() {
        let d = central_column(map, x, i)?;
        let len = linalg::g_norm(&gm, &d);
        if len > 0.0 {
            worst = worst.max(linalg::g_norm(&gm, &proj.normal(&d)) / len);
        }
    }
    Ok(worst)
}

/// `t ↦ exp_p(Σ t_i X_i(p))`.
pub struct LeafMap<'a> {
    pub metric: &'a MetricField,
    pub distribution: &'a DistributionSpec,
    pub base: Vec<f64>,
    pub frame: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub h: f64,
}

impl Parametrization for LeafMap<'_> {
    fn param_dim(&self) -> usize {
        self.frame.len()
    }
    fn leaf_dims(&self) -> usize {
        self.frame.len()
    }
    fn radius(&self) -> f64 {
        self.epsilon
    }
    fn map(&self, t: &[f64]) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.base.len()];
        for (ti, xi) in t.iter().zip(&self.frame) {
            linalg::axpy(*ti, xi, &mut v);
        }
        exp_map(self.metric, self.distribution, &self.base, &v, self.h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafSample {
    pub base: Vec<f64>,
    pub epsilon: f64,
    pub m: usize,
    /// `X_1..X_r` at the base point.
    pub frame: Vec<Vec<f64>>,
    pub params: Vec<Vec<f64>>,
    pub points: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub involutivity_residual: f64,
    pub warnings: Vec<String>,
}

impl LeafSample {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, &r| m.max(r))
    }
}

/// Sample `exp_p(Σ t_i X_i)` on the `m^r` grid over `[−ε, ε]^r`.
pub fn leaf_sample(
    g: &MetricField,
    e: &DistributionSpec,
    p: &[f64],
    epsilon: f64,
    m: usize,
    h: f64,
    mode: IntegrabilityMode,
) -> Result<LeafSample> {
    let (inv, warnings) = integrability_gate(g, e, p, mode)?;
    let frame = adapted_frame_at(g, e, p)?.tangent().to_vec();
    let leaf = LeafMap {
        metric: g,
        distribution: e,
        base: p.to_vec(),
        frame: frame.clone(),
        epsilon,
        h,
    };
    let params = grid(epsilon, m, frame.len());
    let evaluated: Vec<(Vec<f64>, f64)> = params
        .par_iter()
        .map(|t| {
            let at = leaf.map(t)?;
            let res = residual_at(g, e, &leaf, t, &at)?;
            Ok((at, res))
        })
        .collect::<Result<_>>()?;
    let (points, residuals) = evaluated.into_iter().unzip();
    Ok(LeafSample {
        base: p.to_vec(),
        epsilon,
        m,
        frame,
        params,
        points,
        residuals,
        involutivity_residual: inv,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartOptions {
    /// Step for every geodesic the chart shoots.
    pub h: f64,
    pub frame_rule: FrameRule,
    pub mode: IntegrabilityMode,
}

impl Default for ChartOptions {
    fn default() -> Self {
        Self {
            h: 1e-2,
            frame_rule: FrameRule::default(),
            mode: IntegrabilityMode::default(),
        }
    }
}

/// Foot of the transverse geodesic and the E-frame there.
#[derive(Debug, Clone, PartialEq)]
struct Transverse {
    point: Vec<f64>,
    frame: Vec<Vec<f64>>,
}

fn key(b: &[f64]) -> Vec<u64> {
    b.iter().map(|v| v.to_bits()).collect()
}

#[derive(Debug, Clone)]
pub struct FrobeniusChart<'a> {
    metric: &'a MetricField,
    distribution: &'a DistributionSpec,
    pub base: Vec<f64>,
    pub frame: AdaptedFrame,
    pub delta: f64,
    pub m: usize,
    pub options: ChartOptions,
    /// Grid parameters, first coordinate varying slowest.
    pub params: Vec<Vec<f64>>,
    pub points: Vec<Vec<f64>>,
    pub involutivity_residual: f64,
    pub warnings: Vec<String>,
    transverse: HashMap<Vec<u64>, Transverse>,
}

impl<'a> FrobeniusChart<'a> {
    pub fn rank(&self) -> usize {
        self.frame.rank
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    fn transverse_stage(&self, b: &[f64]) -> Result<Transverse> {
        if let Some(t) = self.transverse.get(&key(b)) {
            return Ok(t.clone());
        }
        compute_transverse(self.metric, self.distribution, &self.base, &self.frame, self.options, b)
    }

    /// `Φ(x)`.
    pub fn phi(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (n, r) = (self.dim(), self.rank());
        if x.len() != n {
            return Err(Error::Dimension(format!("chart parameter needs {n} coordinates")));
        }
        let stage = self.transverse_stage(&x[r..])?;
        let mut v = vec![0.0; n];
        for (xi, yi) in x[..r].iter().zip(&stage.frame) {
            linalg::axpy(*xi, yi, &mut v);
        }
        exp_map(self.metric, self.distribution, &stage.point, &v, self.options.h)
    }

    /// Tangency residual at every grid point, in grid order.
    pub fn residuals(&self) -> Result<Vec<f64>> {
        self.params
            .par_iter()
            .zip(&self.points)
            .map(|(x, at)| residual_at(self.metric, self.distribution, self, x, at))
            .collect()
    }
}

impl Parametrization for FrobeniusChart<'_> {
    fn param_dim(&self) -> usize {
        self.dim()
    }
    fn leaf_dims(&self) -> usize {
        self.rank()
    }
    fn radius(&self) -> f64 {
        self.delta
    }
    fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.phi(x)
    }
}

fn compute_transverse(
    g: &MetricField,
    e: &DistributionSpec,
    p: &[f64],
    frame: &AdaptedFrame,
    options: ChartOptions,
    b: &[f64],
) -> Result<Transverse> {
    let n = p.len();
    let mut w = vec![0.0; n];
    for (ba, xi) in b.iter().zip(frame.normal()) {
        linalg::axpy(*ba, xi, &mut w);
    }
    if w.iter().all(|&c| c == 0.0) {
        return Ok(Transverse {
            point: p.to_vec(),
            frame: frame.tangent().to_vec(),
        });
    }
    match options.frame_rule {
        FrameRule::ProjectedTransport => {
            let traj = integrate_geodesic(g, e, p, &w, 1.0, options.h)?;
            let q = traj.end_point().to_vec();
            let proj = projector_at(g, e, &q)?;
            let moved: Vec<Vec<f64>> = frame
                .tangent()
                .iter()
                .map(|x| {
                    let st = parallel_transport(g, e, &traj, x)?;
                    Ok(proj.tangent(st.values.last().expect("transport has samples")))
                })
                .collect::<Result<_>>()?;
            let gm = metric_at(g, &q)?;
            let frame = orthonormal_tangent(&gm, &moved, &q)?;
            Ok(Transverse { point: q, frame })
        }
        FrameRule::AdaptedAtBase => {
            let q = exp_map(g, e, p, &w, options.h)?;
            let frame = adapted_frame_at(g, e, &q)?.tangent().to_vec();
            Ok(Transverse { point: q, frame })
        }
    }
}

/// g-aware 2-norm condition number of the chart Jacobian and the sign of its
/// determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvertibilityReport {
    /// `cond(Lᵀ J)` with `G = L Lᵀ` at `Φ(x)`; infinite when singular.
    pub condition: f64,
    pub det_sign: i8,
    pub singular: bool,
}

fn invertibility_at<M: Parametrization + ?Sized>(g: &MetricField, map: &M, x: &[f64]) -> Result<InvertibilityReport> {
    let n = map.param_dim();
    let cols: Vec<Vec<f64>> = (0..n).map(|i| central_column(map, x, i)).collect::<Result<_>>()?;
    let jac = Mat::from_columns(&cols);
    let at = map.map(x)?;
    let gm = metric_at(g, &at)?;
    let l = linalg::cholesky(&gm).ok_or_else(|| Error::NotPositiveDefinite {
        point: at.clone(),
        min_eigenvalue: linalg::min_eigenvalue(&gm),
    })?;
    let sv = linalg::singular_values(&l.transpose().matmul(&jac));
    let (big, small) = (sv[0], sv[n - 1]);
    let det = jac.to_dmatrix().determinant();
    let condition = if small > 0.0 { big / small } else { f64::INFINITY };
    let singular = !(condition <= SINGULAR_CONDITION) || det == 0.0;
    Ok(InvertibilityReport {
        condition: if singular { f64::INFINITY } else { condition },
        det_sign: if det > 0.0 {
            1
        } else if det < 0.0 {
            -1
        } else {
            0
        },
        singular,
    })
}

pub fn chart_invertibility_report(chart: &FrobeniusChart<'_>, x: &[f64]) -> Result<InvertibilityReport> {
    check_on_grid(chart, x)?;
    invertibility_at(chart.metric, chart, x)
}

/// Build `Φ` around `p` and sample it on the `m^n` grid over `[−δ, δ]^n`.
pub fn build_frobenius_chart<'a>(
    g: &'a MetricField,
    e: &'a DistributionSpec,
    p: &[f64],
    delta: f64,
    m: usize,
    options: ChartOptions,
) -> Result<FrobeniusChart<'a>> {
    if !(delta > 0.0) || m == 0 {
        return Err(Error::Precondition(format!("need δ > 0 and m ≥ 1, got δ = {delta}, m = {m}")));
    }
    let (inv, warnings) = integrability_gate(g, e, p, options.mode)?;
    let frame = adapted_frame_at(g, e, p)?;
    let (n, r) = (p.len(), frame.rank);
    let feet = grid(delta, m, n - r);
    let stages: Vec<(Vec<u64>, Transverse)> = feet
        .par_iter()
        .map(|b| Ok((key(b), compute_transverse(g, e, p, &frame, options, b)?)))
        .collect::<Result<_>>()?;
    let mut chart = FrobeniusChart {
        metric: g,
        distribution: e,
        base: p.to_vec(),
        frame,
        delta,
        m,
        options,
        params: grid(delta, m, n),
        points: Vec::new(),
        involutivity_residual: inv,
        warnings,
        transverse: stages.into_iter().collect(),
    };
    let origin = vec![0.0; n];
    if invertibility_at(g, &chart, &origin)?.singular {
        return Err(Error::SingularJacobian(origin));
    }
    chart.points = chart.params.par_iter().map(|x| chart.phi(x)).collect::<Result<_>>()?;
    Ok(chart)
}
