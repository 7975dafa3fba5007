//! The canonical metric connection adapted to a distribution, together with
//! its torsion and curvature, the Levi-Civita connection, and the classical
//! Schouten–Van Kampen, Vranceanu and Bott comparison derivatives.
//!
//! Production path: `Γ = Γ_LC + K`, where the contorsion `K` is assembled
//! from the torsion `τ`:
//!
//! ```text
//! K^k_ij = ½ g^{kl} ( g(τ(∂l,∂i),∂j) − g(τ(∂j,∂l),∂i) + g(τ(∂i,∂j),∂l) )
//! ```
//!
//! and `τ` vanishes on `E×E` and `E⊥×E⊥` while its mixed components are
//!
//! ```text
//! g(τ(ξ,X),Y) =  ½ (L_ξ g)(X,Y)      X, Y ∈ E,  ξ ∈ E⊥
//! g(τ(ξ,X),η) = −½ (L_X g)(ξ,η)      ξ, η ∈ E⊥
//! ```
//!
//! Both right-hand sides are tensorial in their arguments, so the Lie
//! derivatives may use any smooth extensions of the vectors; the projector
//! fields `x ↦ Q(x)u` and `x ↦ P(x)v` are used, which needs only `P` and its
//! first derivatives. Every pipeline is generic over [`Real`]; evaluating it
//! at a dual point yields exact derivatives of Christoffel symbols and
//! torsion.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::geometry::{
    self, bracket, derivative_of_pairing, field_derivative, DistributionSpec, MetricField, Part,
    ProjectedField, VectorField, INDEPENDENCE_TOL,
};
use crate::linalg::{self, cholesky_solve, Mat};
use crate::real::{Dual, Real};

/// Dense `n×n×n` array indexed `(k, i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<S> {
    n: usize,
    data: Vec<S>,
}

impl<S: Real> Tensor3<S> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![S::zero(); n * n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> S) -> Self {
        let mut t = Self::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    t[(k, i, j)] = f(k, i, j);
                }
            }
        }
        t
    }

    pub fn from_vec(n: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), n * n * n);
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `w^k = T^k_ij u^i v^j`.
    pub fn contract(&self, u: &[S], v: &[S]) -> Vec<S> {
        let n = self.n;
        (0..n)
            .map(|k| {
                let mut acc = S::zero();
                for i in 0..n {
                    let mut row = S::zero();
                    for j in 0..n {
                        row += self[(k, i, j)] * v[j];
                    }
                    acc += u[i] * row;
                }
                acc
            })
            .collect()
    }

    pub fn map<T: Real>(&self, f: impl Fn(S) -> T) -> Tensor3<T> {
        Tensor3 {
            n: self.n,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

impl Tensor3<f64> {
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl<S> Index<(usize, usize, usize)> for Tensor3<S> {
    type Output = S;
    #[inline]
    fn index(&self, (k, i, j): (usize, usize, usize)) -> &S {
        &self.data[(k * self.n + i) * self.n + j]
    }
}

impl<S> IndexMut<(usize, usize, usize)> for Tensor3<S> {
    #[inline]
    fn index_mut(&mut self, (k, i, j): (usize, usize, usize)) -> &mut S {
        &mut self.data[(k * self.n + i) * self.n + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectionKind {
    Canonical,
    LeviCivita,
    SchoutenVanKampen,
    Vranceanu,
    /// Affine combination of two of the above.
    Blend,
}

impl ConnectionKind {
    pub fn name(self) -> &'static str {
        match self {
            ConnectionKind::Canonical => "canonical",
            ConnectionKind::LeviCivita => "levi_civita",
            ConnectionKind::SchoutenVanKampen => "schouten_van_kampen",
            ConnectionKind::Vranceanu => "vranceanu",
            ConnectionKind::Blend => "blend",
        }
    }
}

/// Christoffel symbols at a point: `∇_{∂i} ∂j = Γ^k_ij ∂k`, stored `(k, i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionEval {
    pub point: Vec<f64>,
    pub kind: ConnectionKind,
    pub gamma: Tensor3<f64>,
}

impl ConnectionEval {
    /// Torsion of these coefficients: `T^k_ij = Γ^k_ij − Γ^k_ji`.
    pub fn torsion(&self) -> Tensor3<f64> {
        let g = &self.gamma;
        Tensor3::from_fn(g.dim(), |k, i, j| g[(k, i, j)] - g[(k, j, i)])
    }

    /// `∇_X Y (p) = D_X Y + Γ(X, Y)` at the evaluation point.
    pub fn covariant_derivative<X: VectorField, Y: VectorField>(&self, x: &X, y: &Y) -> Result<Vec<f64>> {
        let p = &self.point;
        let xv = x.eval(p)?;
        let (yv, dy) = field_derivative(y, p, &xv)?;
        Ok(linalg::add(&dy, &self.gamma.contract(&xv, &yv)))
    }
}

/// Torsion components at a point: `τ(∂i, ∂j) = T^k_ij ∂k`, stored `(k, i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorsionEval {
    pub point: Vec<f64>,
    pub t: Tensor3<f64>,
}

impl TorsionEval {
    pub fn apply(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        self.t.contract(u, v)
    }
}

/// `R(∂i, ∂j) ∂k = R^l_kij ∂l`, stored with index `((l*n + k)*n + i)*n + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureEval {
    pub point: Vec<f64>,
    n: usize,
    data: Vec<f64>,
}

impl CurvatureEval {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, l: usize, k: usize, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.data[((l * n + k) * n + i) * n + j]
    }

    /// `R(u, v) w`.
    pub fn apply(&self, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|l| {
                let mut acc = 0.0;
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            acc += self.get(l, k, i, j) * w[k] * u[i] * v[j];
                        }
                    }
                }
                acc
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Metric, its inverse and coordinate derivatives at `x`, row-major;
/// `dg[(k*n + i)*n + j] = ∂_k g_ij`.
struct MetricJet<S> {
    n: usize,
    g: Vec<S>,
    ginv: Vec<S>,
    dg: Vec<S>,
}

/// Tangent projector and its derivatives, `dp[(k*n + i)*n + j] = ∂_k P^i_j`.
struct ProjectorJet<S> {
    p: Vec<S>,
    dp: Vec<S>,
}

/// `P = F (FᵀGF)⁻¹ FᵀG` for the declared frame `F`, generic over the scalar.
pub(crate) fn projector_generic<S: Real>(g: &Mat<S>, frame: &[Vec<S>], x: &[S]) -> Result<Mat<S>> {
    let n = g.rows();
    let r = frame.len();
    let lowered: Vec<Vec<S>> = frame.iter().map(|f| g.mul_vec(f)).collect();
    let gram = Mat::from_fn(r, r, |i, j| linalg::dot(&frame[i], &lowered[j]));
    let chol = linalg::cholesky(&gram)
        .filter(|l| (0..r).all(|i| l[(i, i)].re() > INDEPENDENCE_TOL * gram[(i, i)].re().sqrt()))
        .ok_or_else(|| Error::DegenerateFrame {
            point: x.iter().map(|v| v.re()).collect(),
            detail: "declared frame is linearly dependent".into(),
        })?;
    let mut p = vec![S::zero(); n * n];
    let mut unit = vec![S::zero(); r];
    for i in 0..r {
        unit.fill(S::zero());
        unit[i] = S::cst(1.0);
        let coef = cholesky_solve(&chol, &unit);
        let mut w = vec![S::zero(); n];
        for (c, l) in coef.iter().zip(&lowered) {
            linalg::axpy(*c, l, &mut w);
        }
        for (row, &fa) in p.chunks_exact_mut(n).zip(&frame[i]) {
            for (o, &wb) in row.iter_mut().zip(&w) {
                *o += fa * wb;
            }
        }
    }
    Ok(Mat::from_row_major(n, n, p))
}

fn jets<S: Real>(
    metric: &MetricField,
    dist: Option<&DistributionSpec>,
    x: &[S],
) -> Result<(MetricJet<S>, Option<ProjectorJet<S>>)> {
    let n = metric.dim();
    if n == 0 || x.len() != n {
        return Err(Error::Dimension(format!("point has {} coordinates, metric has {n}", x.len())));
    }
    let dist = dist.filter(|e| e.rank() < n);
    let nn = n * n;
    let mut g = Vec::with_capacity(nn);
    let mut dg = Vec::with_capacity(n * nn);
    let mut p = Vec::new();
    let mut dp = Vec::new();
    for axis in 0..n {
        let xd = Dual::seed_axis(x, axis);
        let gd = metric.eval(&xd)?;
        if let Some(e) = dist {
            let pd = projector_generic(&gd, &e.frame_vectors(&xd)?, &xd)?;
            if axis == 0 {
                p.extend(pd.as_slice().iter().map(|d| d.re));
            }
            dp.extend(pd.as_slice().iter().map(|d| d.eps));
        }
        if axis == 0 {
            g.extend(gd.as_slice().iter().map(|d| d.re));
        }
        dg.extend(gd.as_slice().iter().map(|d| d.eps));
    }
    let gm = Mat::from_row_major(n, n, g);
    let ginv = linalg::spd_inverse(&gm).ok_or_else(|| Error::NotPositiveDefinite {
        point: x.iter().map(|v| v.re()).collect(),
        min_eigenvalue: linalg::min_eigenvalue(&gm.to_f64()),
    })?;
    let pj = dist.map(|_| ProjectorJet { p, dp });
    let mj = MetricJet {
        n,
        g: gm.as_slice().to_vec(),
        ginv: ginv.as_slice().to_vec(),
        dg,
    };
    Ok((mj, pj))
}

/// `out^k_ij = g^{kl} low_{lij}`.
fn raise<S: Real>(n: usize, ginv: &[S], low: &[S]) -> Tensor3<S> {
    let nn = n * n;
    let mut out = vec![S::zero(); n * nn];
    for (orow, grow) in out.chunks_exact_mut(nn).zip(ginv.chunks_exact(n)) {
        for (&gkl, lrow) in grow.iter().zip(low.chunks_exact(nn)) {
            for (o, &v) in orow.iter_mut().zip(lrow) {
                *o += gkl * v;
            }
        }
    }
    Tensor3::from_vec(n, out)
}

fn levi_civita_from_jet<S: Real>(mj: &MetricJet<S>) -> Tensor3<S> {
    let (n, dg) = (mj.n, &mj.dg);
    let nn = n * n;
    let mut low = vec![S::zero(); n * nn];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                low[(l * n + i) * n + j] =
                    (dg[i * nn + j * n + l] + dg[j * nn + i * n + l] - dg[l * nn + i * n + j]).scale(0.5);
            }
        }
    }
    raise(n, &mj.ginv, &low)
}

/// `A_abc = g(τ(∂a, ∂b), ∂c)`, row-major.
///
/// With `τ(u, v) = τ(Qu, Pv) − τ(Qv, Pu)`, the mixed values use the smooth
/// extensions `x ↦ Q(x)u` and `x ↦ P(x)v`:
/// `g(τ(Qu, Pv), z) = ½(L_{Qu} g)(Pv, Pz) − ½(L_{Pv} g)(Qu, Qz)`, where
/// `(L_W g)(U, V) = W^k ∂_k g(U, V) + g(∂_U W, V) + g(U, ∂_V W)`.
/// Expanded, with `hp_k = Pᵀ ∂_k G P`, `hq_k = Qᵀ ∂_k G Q`, `z_k = GP ∂_k P`
/// and `w_k = GQ ∂_k P` (using `PᵀG = GP`):
///
/// ```text
/// 2 g(τ(Q∂a, P∂b), ∂c) = Σ_k  Q_ka hp_k[b,c] − P_kb hq_k[a,c]
///                           − z_k[c,a] P_kb − z_k[b,a] P_kc
///                           − w_k[c,b] Q_ka − w_k[a,b] Q_kc
/// ```
fn lowered_torsion<S: Real>(mj: &MetricJet<S>, pj: &ProjectorJet<S>) -> Vec<S> {
    let n = mj.n;
    let nn = n * n;
    let p = &pj.p;
    let q: Vec<S> = (0..nn)
        .map(|k| S::cst(if k % (n + 1) == 0 { 1.0 } else { 0.0 }) - p[k])
        .collect();
    let mut gp = vec![S::zero(); nn];
    linalg::square_mul(n, &mj.g, p, &mut gp);
    let gq: Vec<S> = mj.g.iter().zip(&gp).map(|(&a, &b)| a - b).collect();
    let mut z = vec![S::zero(); n * nn];
    let mut w = vec![S::zero(); n * nn];
    let mut hp = vec![S::zero(); n * nn];
    let mut hq = vec![S::zero(); n * nn];
    let mut tmp = vec![S::zero(); nn];
    for k in 0..n {
        let block = k * nn..(k + 1) * nn;
        let dpk = &pj.dp[block.clone()];
        let dgk = &mj.dg[block.clone()];
        linalg::square_mul(n, &gp, dpk, &mut z[block.clone()]);
        linalg::square_mul(n, &gq, dpk, &mut w[block.clone()]);
        linalg::square_mul(n, dgk, p, &mut tmp);
        linalg::square_tmul(n, p, &tmp, &mut hp[block.clone()]);
        linalg::square_mul(n, dgk, &q, &mut tmp);
        linalg::square_tmul(n, &q, &tmp, &mut hq[block]);
    }
    let mut mixed = vec![S::zero(); n * nn];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut s = S::zero();
                for k in 0..n {
                    let (o, r) = (k * nn, k * n);
                    s += q[r + a] * hp[o + b * n + c] - p[r + b] * hq[o + a * n + c]
                        - z[o + c * n + a] * p[r + b]
                        - z[o + b * n + a] * p[r + c]
                        - w[o + c * n + b] * q[r + a]
                        - w[o + a * n + b] * q[r + c];
                }
                mixed[(a * n + b) * n + c] = s.scale(0.5);
            }
        }
    }
    let mut out = vec![S::zero(); n * nn];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                out[(a * n + b) * n + c] = mixed[(a * n + b) * n + c] - mixed[(b * n + a) * n + c];
            }
        }
    }
    out
}

/// `K^k_ij = ½ g^{kl} (A_lij − A_jli + A_ijl)`.
fn contorsion<S: Real>(mj: &MetricJet<S>, a: &[S]) -> Tensor3<S> {
    let n = mj.n;
    let at = |i: usize, j: usize, k: usize| a[(i * n + j) * n + k];
    let mut low = vec![S::zero(); n * n * n];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                low[(l * n + i) * n + j] = (at(l, i, j) - at(j, l, i) + at(i, j, l)).scale(0.5);
            }
        }
    }
    raise(n, &mj.ginv, &low)
}

fn canonical_parts<S: Real>(
    metric: &MetricField,
    dist: &DistributionSpec,
    x: &[S],
) -> Result<(MetricJet<S>, Tensor3<S>, Option<Vec<S>>)> {
    let (mj, pj) = jets(metric, Some(dist), x)?;
    let mut gamma = levi_civita_from_jet(&mj);
    let Some(pj) = pj else {
        return Ok((mj, gamma, None));
    };
    let a = lowered_torsion(&mj, &pj);
    let k = contorsion(&mj, &a);
    for (g, &d) in gamma.data.iter_mut().zip(&k.data) {
        *g += d;
    }
    Ok((mj, gamma, Some(a)))
}

/// Canonical Christoffel symbols at `x`, generic over the scalar.
pub(crate) fn canonical_gamma<S: Real>(metric: &MetricField, dist: &DistributionSpec, x: &[S]) -> Result<Tensor3<S>> {
    Ok(canonical_parts(metric, dist, x)?.1)
}

/// Canonical Christoffel symbols and torsion at `x`, generic over the scalar.
pub(crate) fn canonical_generic<S: Real>(
    metric: &MetricField,
    dist: &DistributionSpec,
    x: &[S],
) -> Result<(Tensor3<S>, Tensor3<S>)> {
    let (mj, gamma, a) = canonical_parts(metric, dist, x)?;
    let n = metric.dim();
    let t = match a {
        Some(a) => {
            let mut swapped = vec![S::zero(); n * n * n];
            for c in 0..n {
                for ij in 0..n * n {
                    swapped[c * n * n + ij] = a[ij * n + c];
                }
            }
            raise(n, &mj.ginv, &swapped)
        }
        None => Tensor3::zeros(metric.dim()),
    };
    Ok((gamma, t))
}

pub(crate) fn levi_civita_generic<S: Real>(metric: &MetricField, x: &[S]) -> Result<Tensor3<S>> {
    let (mj, _) = jets(metric, None, x)?;
    Ok(levi_civita_from_jet(&mj))
}

pub fn levi_civita_at(g: &MetricField, p: &[f64]) -> Result<ConnectionEval> {
    Ok(ConnectionEval {
        point: p.to_vec(),
        kind: ConnectionKind::LeviCivita,
        gamma: levi_civita_generic(g, p)?,
    })
}

pub fn torsion_at(g: &MetricField, e: &DistributionSpec, p: &[f64]) -> Result<TorsionEval> {
    let (_, t) = canonical_generic(g, e, p)?;
    Ok(TorsionEval {
        point: p.to_vec(),
        t,
    })
}

pub fn canonical_at(g: &MetricField, e: &DistributionSpec, p: &[f64]) -> Result<ConnectionEval> {
    let (gamma, _) = canonical_generic(g, e, p)?;
    Ok(ConnectionEval {
        point: p.to_vec(),
        kind: ConnectionKind::Canonical,
        gamma,
    })
}

/// Coefficient-wise `(1 − λ) c1 + λ c2`.
pub fn blend(c1: &ConnectionEval, c2: &ConnectionEval, lambda: f64) -> Result<ConnectionEval> {
    if c1.point != c2.point || c1.gamma.dim() != c2.gamma.dim() {
        return Err(Error::MismatchedPoints);
    }
    let (a, b) = (&c1.gamma, &c2.gamma);
    Ok(ConnectionEval {
        point: c1.point.clone(),
        kind: ConnectionKind::Blend,
        gamma: Tensor3::from_fn(a.dim(), |k, i, j| {
            (1.0 - lambda) * a[(k, i, j)] + lambda * b[(k, i, j)]
        }),
    })
}

/// Right-hand side of the generalized Koszul formula, i.e. `2 g(D_X Y, Z)`
/// for the metric connection with torsion `tau`, evaluated term by term.
pub fn koszul_pairing<X: VectorField, Y: VectorField, Z: VectorField>(
    g: &MetricField,
    tau: &TorsionEval,
    x: &X,
    y: &Y,
    z: &Z,
    p: &[f64],
) -> Result<f64> {
    let gm = g.eval(p)?;
    let (xv, yv, zv) = (x.eval(p)?, y.eval(p)?, z.eval(p)?);
    let pair = |a: &[f64], b: &[f64]| gm.bilinear(a, b);
    let metric_terms = derivative_of_pairing(g, x, y, z, p)? - derivative_of_pairing(g, z, x, y, p)?
        + derivative_of_pairing(g, y, z, x, p)?;
    let bracket_terms = pair(&bracket(z, x, p)?, &yv) - pair(&bracket(y, z, p)?, &xv)
        + pair(&bracket(x, y, p)?, &zv);
    let torsion_terms = pair(&tau.apply(&zv, &xv), &yv) - pair(&tau.apply(&yv, &zv), &xv)
        + pair(&tau.apply(&xv, &yv), &zv);
    Ok(metric_terms + bracket_terms + torsion_terms)
}

fn levi_civita_derivative<X: VectorField, Y: VectorField>(
    g: &MetricField,
    x: &X,
    y: &Y,
    p: &[f64],
) -> Result<Vec<f64>> {
    levi_civita_at(g, p)?.covariant_derivative(x, y)
}

/// `∇°_X Y = (∇_X Y^⊤)^⊤ + (∇_X Y^⊥)^⊥` with `∇` the Levi-Civita connection.
pub fn schouten_van_kampen_at<X: VectorField, Y: VectorField>(
    g: &MetricField,
    e: &DistributionSpec,
    x: &X,
    y: &Y,
    p: &[f64],
) -> Result<Vec<f64>> {
    let proj = geometry::projector_at(g, e, p)?;
    let yt = ProjectedField::new(g, e, y, Part::Tangent);
    let yn = ProjectedField::new(g, e, y, Part::Normal);
    let a = proj.tangent(&levi_civita_derivative(g, x, &yt, p)?);
    let b = proj.normal(&levi_civita_derivative(g, x, &yn, p)?);
    Ok(linalg::add(&a, &b))
}

/// `∇*_X Y = (∇_{X^⊤}Y^⊤)^⊤ + (∇_{X^⊥}Y^⊥)^⊥ + [X^⊥,Y^⊤]^⊤ + [X^⊤,Y^⊥]^⊥`.
pub fn vranceanu_at<X: VectorField, Y: VectorField>(
    g: &MetricField,
    e: &DistributionSpec,
    x: &X,
    y: &Y,
    p: &[f64],
) -> Result<Vec<f64>> {
    let proj = geometry::projector_at(g, e, p)?;
    let xt = ProjectedField::new(g, e, x, Part::Tangent);
    let xn = ProjectedField::new(g, e, x, Part::Normal);
    let yt = ProjectedField::new(g, e, y, Part::Tangent);
    let yn = ProjectedField::new(g, e, y, Part::Normal);
    let mut out = proj.tangent(&levi_civita_derivative(g, &xt, &yt, p)?);
    out = linalg::add(&out, &proj.normal(&levi_civita_derivative(g, &xn, &yn, p)?));
    out = linalg::add(&out, &proj.tangent(&bracket(&xn, &yt, p)?));
    out = linalg::add(&out, &proj.normal(&bracket(&xt, &yn, p)?));
    Ok(out)
}

/// Coefficient table of a field-level connection operator on coordinate fields.
fn table_from_operator(
    n: usize,
    p: &[f64],
    kind: ConnectionKind,
    op: impl Fn(&geometry::ConstantField, &geometry::ConstantField) -> Result<Vec<f64>>,
) -> Result<ConnectionEval> {
    let axis = |i: usize| {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        geometry::ConstantField(v)
    };
    let mut gamma = Tensor3::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let col = op(&axis(i), &axis(j))?;
            for k in 0..n {
                gamma[(k, i, j)] = col[k];
            }
        }
    }
    Ok(ConnectionEval {
        point: p.to_vec(),
        kind,
        gamma,
    })
}

pub fn schouten_van_kampen_table(g: &MetricField, e: &DistributionSpec, p: &[f64]) -> Result<ConnectionEval> {
    table_from_operator(g.dim(), p, ConnectionKind::SchoutenVanKampen, |x, y| {
        schouten_van_kampen_at(g, e, x, y, p)
    })
}

pub fn vranceanu_table(g: &MetricField, e: &DistributionSpec, p: &[f64]) -> Result<ConnectionEval> {
    table_from_operator(g.dim(), p, ConnectionKind::Vranceanu, |x, y| vranceanu_at(g, e, x, y, p))
}

/// Bott derivative `D_X ξ = [X, ξ]^⊥` and the compatibility defect
/// `(L_X g)(ξ, ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BottEval {
    pub derivative: Vec<f64>,
    pub defect: f64,
}

/// Tolerance on the membership preconditions of [`bott_at`].
pub const MEMBERSHIP_TOL: f64 = 1e-8;

fn check_membership(
    g: &Mat<f64>,
    residual: &[f64],
    full: &[f64],
    what: &str,
) -> Result<()> {
    let scale = linalg::g_norm(g, full).max(1.0);
    if linalg::g_norm(g, residual) > MEMBERSHIP_TOL * scale {
        return Err(Error::Precondition(what.to_string()));
    }
    Ok(())
}

pub fn bott_at<X: VectorField, Xi: VectorField>(
    g: &MetricField,
    e: &DistributionSpec,
    x: &X,
    xi: &Xi,
    p: &[f64],
) -> Result<BottEval> {
    let gm = geometry::metric_at(g, p)?;
    let proj = geometry::projector_at(g, e, p)?;
    let (xv, xiv) = (x.eval(p)?, xi.eval(p)?);
    check_membership(&gm, &proj.normal(&xv), &xv, "X(p) must lie in E_p")?;
    check_membership(&gm, &proj.tangent(&xiv), &xiv, "ξ(p) must lie in the complement of E_p")?;
    Ok(BottEval {
        derivative: proj.normal(&bracket(x, xi, p)?),
        defect: geometry::lie_derivative_metric(g, x, xi, xi, p)?,
    })
}

/// Both sides of `X(g(ξ,η)) − g(D_X ξ, η) − g(ξ, D_X η) = (L_X g)(ξ, η)`.
/// The left side differentiates `g(ξ,η)` by dual propagation.
pub fn bott_defect_identity<X: VectorField, Xi: VectorField, Eta: VectorField>(
    g: &MetricField,
    e: &DistributionSpec,
    x: &X,
    xi: &Xi,
    eta: &Eta,
    p: &[f64],
) -> Result<(f64, f64)> {
    let gm = geometry::metric_at(g, p)?;
    let d_xi = bott_at(g, e, x, xi, p)?.derivative;
    let d_eta = bott_at(g, e, x, eta, p)?.derivative;
    let lhs = derivative_of_pairing(g, x, xi, eta, p)?
        - gm.bilinear(&d_xi, &eta.eval(p)?)
        - gm.bilinear(&xi.eval(p)?, &d_eta);
    let rhs = geometry::lie_derivative_metric(g, x, xi, eta, p)?;
    Ok((lhs, rhs))
}

/// Curvature of the canonical connection, with `∂Γ` obtained by evaluating
/// the whole canonical pipeline at dual points.
pub fn curvature_at(g: &MetricField, e: &DistributionSpec, p: &[f64]) -> Result<CurvatureEval> {
    let n = g.dim();
    let (gamma, _) = canonical_generic(g, e, p)?;
    let dgamma: Vec<Tensor3<f64>> = (0..n)
        .map(|i| {
            let (gd, _) = canonical_generic(g, e, &Dual::seed_axis(p, i))?;
            Ok(gd.map(|d| d.eps))
        })
        .collect::<Result<_>>()?;
    let mut data = vec![0.0; n * n * n * n];
    for l in 0..n {
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut v = dgamma[i][(l, j, k)] - dgamma[j][(l, i, k)];
                    for m in 0..n {
                        v += gamma[(l, i, m)] * gamma[(m, j, k)] - gamma[(l, j, m)] * gamma[(m, i, k)];
                    }
                    data[((l * n + k) * n + i) * n + j] = v;
                }
            }
        }
    }
    Ok(CurvatureEval {
        point: p.to_vec(),
        n,
        data,
    })
}
