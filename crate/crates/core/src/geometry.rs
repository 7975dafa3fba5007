//! Pointwise metric algebra on an open box of ℝⁿ: metric evaluation,
//! g-orthogonal projection onto the distribution, adapted frames, Lie
//! brackets and Lie derivatives of the metric.
//!
//! The orthogonal complement of the distribution is never stored; it is
//! derived from the metric wherever it is needed.

use crate::error::{Error, Result};
use crate::expr::{parse_expression, Expression};
use crate::linalg::{self, g_orthonormalize, Mat};
use crate::real::{Dual, Real};

/// Relative threshold below which a spanning set counts as degenerate.
pub const INDEPENDENCE_TOL: f64 = 1e-10;

/// Open axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Validation(
                "domain bounds have different lengths".into(),
            ));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(Error::Validation("domain box is empty".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (a, b))| a < x && x < b)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// The box shrunk toward its center by `frac` of its width per axis.
    pub fn shrunk(&self, frac: f64) -> Self {
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| {
                let pad = 0.5 * frac * (b - a);
                (a + pad, b - pad)
            })
            .unzip();
        Self { lower, upper }
    }
}

/// A vector field on (a neighborhood in) ℝⁿ, evaluable over any [`Real`].
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval<S: Real>(&self, x: &[S]) -> Result<Vec<S>>;
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval<S: Real>(&self, x: &[S]) -> Result<Vec<S>> {
        (**self).eval(x)
    }
}

/// Vector field with expression components.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprField {
    comps: Vec<Expression>,
}

impl ExprField {
    pub fn new(comps: Vec<Expression>) -> Result<Self> {
        let n = comps.len();
        if comps.iter().any(|c| c.dim() != n) {
            return Err(Error::Dimension(
                "field components must be expressions over n coordinates".into(),
            ));
        }
        Ok(Self { comps })
    }

    pub fn parse<T: AsRef<str>>(comps: &[T]) -> Result<Self> {
        let n = comps.len();
        Self::new(
            comps
                .iter()
                .map(|c| parse_expression(c.as_ref(), n))
                .collect::<Result<_>>()?,
        )
    }

    pub fn components(&self) -> &[Expression] {
        &self.comps
    }
}

impl VectorField for ExprField {
    fn dim(&self) -> usize {
        self.comps.len()
    }
    fn eval<S: Real>(&self, x: &[S]) -> Result<Vec<S>> {
        self.comps.iter().map(|c| c.eval(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantField(pub Vec<f64>);

impl VectorField for ConstantField {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn eval<S: Real>(&self, _x: &[S]) -> Result<Vec<S>> {
        Ok(self.0.iter().map(|&c| S::cst(c)).collect())
    }
}

/// `f · F` for a scalar expression `f`.
#[derive(Debug, Clone)]
pub struct ScaledField<F> {
    pub factor: Expression,
    pub field: F,
}

impl<F: VectorField> VectorField for ScaledField<F> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn eval<S: Real>(&self, x: &[S]) -> Result<Vec<S>> {
        let f = self.factor.eval(x)?;
        Ok(self.field.eval(x)?.into_iter().map(|c| f * c).collect())
    }
}

/// Riemannian metric with expression entries; only `i ≤ j` is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    n: usize,
    upper: Vec<Expression>,
    domain: Domain,
}

fn tri_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

impl MetricField {
    /// `upper` lists `g_ij` for `i ≤ j`, row by row.
    pub fn new(n: usize, upper: Vec<Expression>, domain: Domain) -> Result<Self> {
        if upper.len() != n * (n + 1) / 2 {
            return Err(Error::Dimension(format!(
                "metric of dimension {n} needs {} upper-triangular entries, got {}",
                n * (n + 1) / 2,
                upper.len()
            )));
        }
        if domain.dim() != n || upper.iter().any(|e| e.dim() != n) {
            return Err(Error::Dimension("metric entries and domain must have dimension n".into()));
        }
        Ok(Self { n, upper, domain })
    }

    pub fn parse<T: AsRef<str>>(n: usize, upper: &[T], domain: Domain) -> Result<Self> {
        Self::new(
            n,
            upper
                .iter()
                .map(|c| parse_expression(c.as_ref(), n))
                .collect::<Result<_>>()?,
            domain,
        )
    }

    pub fn euclidean(n: usize, domain: Domain) -> Self {
        let upper = (0..n)
            .flat_map(|i| (i..n).map(move |j| Expression::constant(if i == j { 1.0 } else { 0.0 }, n)))
            .collect();
        Self { n, upper, domain }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn entry(&self, i: usize, j: usize) -> &Expression {
        &self.upper[tri_index(self.n, i, j)]
    }

    /// Symmetric matrix `g(x)` without a definiteness check.
    pub fn eval<S: Real>(&self, x: &[S]) -> Result<Mat<S>> {
        let n = self.n;
        let mut g = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let e = &self.upper[tri_index(n, i, j)];
                let v = if e.is_zero() { S::zero() } else { e.eval(x)? };
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    /// `g(x)` together with its Cholesky factor; fails unless SPD.
    pub fn eval_spd<S: Real>(&self, x: &[S]) -> Result<(Mat<S>, Mat<S>)> {
        let g = self.eval(x)?;
        match linalg::cholesky(&g) {
            Some(l) => Ok((g, l)),
            None => {
                let gf = g.to_f64();
                Err(Error::NotPositiveDefinite {
                    point: x.iter().map(|v| v.re()).collect(),
                    min_eigenvalue: linalg::min_eigenvalue(&gf),
                })
            }
        }
    }
}

/// Evaluate the metric at `p`, verifying positive definiteness.
pub fn metric_at(g: &MetricField, p: &[f64]) -> Result<Mat<f64>> {
    Ok(g.eval_spd(p)?.0)
}

/// A rank-r distribution given by r spanning vector fields.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    n: usize,
    fields: Vec<ExprField>,
}

impl DistributionSpec {
    pub fn new(n: usize, fields: Vec<ExprField>) -> Result<Self> {
        if fields.is_empty() || fields.len() > n {
            return Err(Error::Validation(format!(
                "rank must satisfy 1 <= r <= n = {n}, got {}",
                fields.len()
            )));
        }
        if fields.iter().any(|f| f.dim() != n) {
            return Err(Error::Dimension("frame fields must have n components".into()));
        }
        Ok(Self { n, fields })
    }

    pub fn parse<T: AsRef<str>>(n: usize, frame: &[Vec<T>]) -> Result<Self> {
        Self::new(
            n,
            frame
                .iter()
                .map(|f| ExprField::parse(f))
                .collect::<Result<_>>()?,
        )
    }

    pub fn rank(&self) -> usize {
        self.fields.len()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn fields(&self) -> &[ExprField] {
        &self.fields
    }

    /// The declared spanning vectors at `x`.
    pub fn frame_vectors<S: Real>(&self, x: &[S]) -> Result<Vec<Vec<S>>> {
        self.fields.iter().map(|f| f.eval(x)).collect()
    }

    /// The same distribution spanned by `Σ_j m[i][j] X_j`.
    pub fn recombined(&self, m: &[Vec<f64>]) -> Result<Self> {
        let r = self.rank();
        let fields = (0..r)
            .map(|i| {
                let comps = (0..self.n)
                    .map(|c| {
                        let terms: Vec<String> = (0..r)
                            .filter(|&j| m[i][j] != 0.0)
                            .map(|j| format!("({:?})*({})", m[i][j], self.fields[j].comps[c]))
                            .collect();
                        let text = if terms.is_empty() { "0".to_string() } else { terms.join(" + ") };
                        parse_expression(&text, self.n)
                    })
                    .collect::<Result<Vec<_>>>()?;
                ExprField::new(comps)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.n, fields)
    }
}

fn degenerate(x: &[impl Real], detail: impl Into<String>) -> Error {
    Error::DegenerateFrame {
        point: x.iter().map(|v| v.re()).collect(),
        detail: detail.into(),
    }
}

/// Declared frame values at `p`, with the relative singular-value test.
fn checked_frame(e: &DistributionSpec, p: &[f64]) -> Result<Vec<Vec<f64>>> {
    let f = e.frame_vectors(p)?;
    let sv = linalg::singular_values(&Mat::from_columns(&f));
    let (largest, smallest) = (sv[0], *sv.last().unwrap_or(&0.0));
    if !(smallest > INDEPENDENCE_TOL * largest) {
        return Err(degenerate(
            p,
            format!("frame singular values {largest:e} .. {smallest:e}"),
        ));
    }
    Ok(f)
}

/// g-orthonormal basis of `E_x` by Gram–Schmidt on the declared frame in
/// declaration order.
pub fn orthonormal_tangent<S: Real>(g: &Mat<S>, frame: &[Vec<S>], x: &[S]) -> Result<Vec<Vec<S>>> {
    let mut basis: Vec<Vec<S>> = Vec::with_capacity(frame.len());
    for f in frame {
        let scale = g.bilinear(f, f).re().sqrt();
        let (v, nrm) = g_orthonormalize(g, &basis, f);
        if !(nrm.re() > INDEPENDENCE_TOL * scale) {
            return Err(degenerate(x, "declared frame is linearly dependent"));
        }
        basis.push(v);
    }
    Ok(basis)
}

/// `P v = Σ X_i g(X_i, v)` for a g-orthonormal basis `X_i` of `E`.
pub fn project_onto<S: Real>(g: &Mat<S>, tangent: &[Vec<S>], v: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); v.len()];
    for b in tangent {
        linalg::axpy(g.bilinear(b, v), b, &mut out);
    }
    out
}

/// `Q v = v − P v`.
pub fn project_normal<S: Real>(g: &Mat<S>, tangent: &[Vec<S>], v: &[S]) -> Vec<S> {
    linalg::sub(v, &project_onto(g, tangent, v))
}

/// Greedy choice of coordinate axes whose normal projections complete the
/// frame: largest residual g-norm first, lowest index on ties.
pub fn greedy_pivots(g: &Mat<f64>, tangent: &[Vec<f64>]) -> Vec<usize> {
    let n = g.rows();
    let mut normal: Vec<Vec<f64>> = Vec::new();
    let mut pivots = Vec::new();
    let mut used = vec![false; n];
    for _ in tangent.len()..n {
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for k in (0..n).filter(|&k| !used[k]) {
            let mut ek = vec![0.0; n];
            ek[k] = 1.0;
            let q = project_normal(g, tangent, &ek);
            let (v, nrm) = g_orthonormalize(g, &normal, &q);
            if best.as_ref().map_or(true, |(_, b, _)| nrm > *b) {
                best = Some((k, nrm, v));
            }
        }
        let (k, _, v) = best.expect("a free axis remains while the frame is incomplete");
        used[k] = true;
        pivots.push(k);
        normal.push(v);
    }
    pivots
}

/// Adapted frame at `x` with the normal block built from frozen pivot axes.
/// Smooth in `x` on any neighborhood where it stays nondegenerate.
pub fn adapted_frame_with_pivots<S: Real>(
    g: &Mat<S>,
    frame: &[Vec<S>],
    pivots: &[usize],
    x: &[S],
) -> Result<Vec<Vec<S>>> {
    let n = g.rows();
    let mut out = orthonormal_tangent(g, frame, x)?;
    let r = out.len();
    for &k in pivots {
        let mut ek = vec![S::zero(); n];
        ek[k] = S::cst(1.0);
        let q = project_normal(g, &out[..r], &ek);
        let (v, nrm) = g_orthonormalize(g, &out[r..], &q);
        if !(nrm.re() > INDEPENDENCE_TOL) {
            return Err(degenerate(x, "pivot axis has no normal component"));
        }
        out.push(v);
    }
    Ok(out)
}

/// g-orthogonal projection onto `E_p` and its complement.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorPair {
    pub p: Mat<f64>,
    pub q: Mat<f64>,
}

impl ProjectorPair {
    pub fn tangent(&self, v: &[f64]) -> Vec<f64> {
        self.p.mul_vec(v)
    }

    pub fn normal(&self, v: &[f64]) -> Vec<f64> {
        self.q.mul_vec(v)
    }
}

/// `P = F (FᵀGF)⁻¹ FᵀG`, `Q = I − P`.
pub fn projector_at(g: &MetricField, e: &DistributionSpec, p: &[f64]) -> Result<ProjectorPair> {
    let gm = metric_at(g, p)?;
    let f = Mat::from_columns(&checked_frame(e, p)?);
    let ftg = f.transpose().matmul(&gm);
    let gram = ftg.matmul(&f);
    let inv = linalg::spd_inverse(&gram).ok_or_else(|| degenerate(p, "frame Gram matrix is singular"))?;
    let pm = f.matmul(&inv).matmul(&ftg);
    let n = g.dim();
    let qm = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - pm[(i, j)]);
    Ok(ProjectorPair { p: pm, q: qm })
}

/// g-orthonormal frame at a point: first `r` vectors span `E_p`, the rest
/// span its complement.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedFrame {
    pub rank: usize,
    pub vectors: Vec<Vec<f64>>,
    /// Coordinate axes whose normal projections built the complement block.
    pub pivots: Vec<usize>,
}

impl AdaptedFrame {
    pub fn tangent(&self) -> &[Vec<f64>] {
        &self.vectors[..self.rank]
    }

    pub fn normal(&self) -> &[Vec<f64>] {
        &self.vectors[self.rank..]
    }
}

pub fn adapted_frame_at(g: &MetricField, e: &DistributionSpec, p: &[f64]) -> Result<AdaptedFrame> {
    let gm = metric_at(g, p)?;
    let frame = checked_frame(e, p)?;
    let tangent = orthonormal_tangent(&gm, &frame, p)?;
    let pivots = greedy_pivots(&gm, &tangent);
    let vectors = adapted_frame_with_pivots(&gm, &frame, &pivots, p)?;
    Ok(AdaptedFrame {
        rank: e.rank(),
        vectors,
        pivots,
    })
}

/// Frame field built from pivots frozen at some base point; component
/// `index` of the adapted frame.
#[derive(Debug, Clone)]
pub struct AdaptedFrameField<'a> {
    pub metric: &'a MetricField,
    pub distribution: &'a DistributionSpec,
    pub pivots: Vec<usize>,
    pub index: usize,
}

impl VectorField for AdaptedFrameField<'_> {
    fn dim(&self) -> usize {
        self.metric.dim()
    }
    fn eval<S: Real>(&self, x: &[S]) -> Result<Vec<S>> {
        let g = self.metric.eval(x)?;
        let frame = self.distribution.frame_vectors(x)?;
        let mut v = adapted_frame_with_pivots(&g, &frame, &self.pivots, x)?;
        Ok(v.swap_remove(self.index))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Tangent,
    Normal,
}

/// `x ↦ P(x) F(x)` or `x ↦ Q(x) F(x)`: the tangent or normal part of a field,
/// itself a smooth section of `E` or of its complement.
#[derive(Debug, Clone)]
pub struct ProjectedField<'a, F> {
    pub metric: &'a MetricField,
    pub distribution: &'a DistributionSpec,
    pub field: F,
    pub part: Part,
}

impl<'a, F: VectorField> ProjectedField<'a, F> {
    pub fn new(metric: &'a MetricField, distribution: &'a DistributionSpec, field: F, part: Part) -> Self {
        Self {
            metric,
            distribution,
            field,
            part,
        }
    }
}

impl<F: VectorField> VectorField for ProjectedField<'_, F> {
    fn dim(&self) -> usize {
        self.metric.dim()
    }
    fn eval<S: Real>(&self, x: &[S]) -> Result<Vec<S>> {
        let g = self.metric.eval(x)?;
        let frame = self.distribution.frame_vectors(x)?;
        let tangent = orthonormal_tangent(&g, &frame, x)?;
        let w = self.field.eval(x)?;
        Ok(match self.part {
            Part::Tangent => project_onto(&g, &tangent, &w),
            Part::Normal => project_normal(&g, &tangent, &w),
        })
    }
}

/// Directional derivative of a field: `(F(x), D_v F(x))`.
pub fn field_derivative<S: Real, F: VectorField>(f: &F, x: &[S], v: &[S]) -> Result<(Vec<S>, Vec<S>)> {
    let out = f.eval(&Dual::seed(x, v))?;
    Ok(out.into_iter().map(|d| (d.re, d.eps)).unzip())
}

/// `[U, V](x) = D_U V − D_V U`.
pub fn bracket<S: Real, U: VectorField, V: VectorField>(u: &U, v: &V, x: &[S]) -> Result<Vec<S>> {
    let uval = u.eval(x)?;
    let vval = v.eval(x)?;
    let (_, dv_u) = field_derivative(v, x, &uval)?;
    let (_, du_v) = field_derivative(u, x, &vval)?;
    Ok(linalg::sub(&dv_u, &du_v))
}

pub fn lie_bracket<U: VectorField, V: VectorField>(u: &U, v: &V, p: &[f64]) -> Result<Vec<f64>> {
    bracket(u, v, p)
}

/// `W(g(U,V))` at `x`: directional derivative of the pairing along `W(x)`.
pub fn derivative_of_pairing<S: Real, W: VectorField, U: VectorField, V: VectorField>(
    g: &MetricField,
    w: &W,
    u: &U,
    v: &V,
    x: &[S],
) -> Result<S> {
    let wv = w.eval(x)?;
    let xd = Dual::seed(x, &wv);
    let gd = g.eval(&xd)?;
    Ok(gd.bilinear(&u.eval(&xd)?, &v.eval(&xd)?).eps)
}

/// `(L_W g)(U, V) = W(g(U,V)) − g([W,U],V) − g(U,[W,V])`.
pub fn lie_derivative_metric<W: VectorField, U: VectorField, V: VectorField>(
    g: &MetricField,
    w: &W,
    u: &U,
    v: &V,
    p: &[f64],
) -> Result<f64> {
    let gm = g.eval(p)?;
    let wguv = derivative_of_pairing(g, w, u, v, p)?;
    let wu = bracket(w, u, p)?;
    let wv = bracket(w, v, p)?;
    Ok(wguv - gm.bilinear(&wu, &v.eval(p)?) - gm.bilinear(&u.eval(p)?, &wv))
}

/// Largest g-norm of the normal part of `[X_i, X_j]` over the declared frame.
pub fn involutivity_residual(g: &MetricField, e: &DistributionSpec, p: &[f64]) -> Result<f64> {
    let proj = projector_at(g, e, p)?;
    let gm = metric_at(g, p)?;
    let fields = e.fields();
    let mut worst = 0.0f64;
    for i in 0..fields.len() {
        for j in i + 1..fields.len() {
            let b = lie_bracket(&fields[i], &fields[j], p)?;
            worst = worst.max(linalg::g_norm(&gm, &proj.normal(&b)));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(n: usize, h: f64) -> Domain {
        Domain::new(vec![-h; n], vec![h; n]).unwrap()
    }

    fn warped() -> (MetricField, DistributionSpec) {
        let g = MetricField::parse(
            3,
            &["exp(2*x3)", "0", "0", "exp(2*x3)", "0", "1"],
            cube(3, 1.0),
        )
        .unwrap();
        let e = DistributionSpec::parse(3, &[vec!["1", "0", "0"], vec!["0", "1", "0"]]).unwrap();
        (g, e)
    }

    fn contact() -> (MetricField, DistributionSpec) {
        let g = MetricField::euclidean(3, cube(3, 2.0));
        let e = DistributionSpec::parse(3, &[vec!["0", "1", "0"], vec!["1", "0", "x2"]]).unwrap();
        (g, e)
    }

    fn sphere() -> (MetricField, DistributionSpec) {
        let g = MetricField::euclidean(3, Domain::new(vec![-1.5, -1.5, 1.0], vec![1.5, 1.5, 3.0]).unwrap());
        let e = DistributionSpec::parse(3, &[vec!["x3", "0", "-x1"], vec!["0", "x3", "-x2"]]).unwrap();
        (g, e)
    }

    #[test]
    fn euclidean_metric_is_identity() {
        let g = MetricField::euclidean(3, cube(3, 1.0));
        let m = metric_at(&g, &[0.2, -0.4, 0.9]).unwrap();
        assert_eq!(m, Mat::identity(3));
    }

    #[test]
    fn warped_metric_values() {
        let (g, _) = warped();
        assert_eq!(metric_at(&g, &[0.3, 0.1, 0.0]).unwrap(), Mat::identity(3));
        let m = metric_at(&g, &[0.0, 0.0, 1.0]).unwrap();
        let e2 = 1f64.exp().powi(2);
        assert!((m[(0, 0)] - e2).abs() < 1e-12);
        assert!((m[(1, 1)] - e2).abs() < 1e-12);
        assert_eq!(m[(2, 2)], 1.0);
        assert_eq!(m[(0, 1)], 0.0);
    }

    #[test]
    fn indefinite_metric_reports_eigenvalue() {
        let g = MetricField::parse(2, &["1", "2", "1"], cube(2, 1.0)).unwrap();
        match metric_at(&g, &[0.0, 0.0]) {
            Err(Error::NotPositiveDefinite { min_eigenvalue, .. }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coordinate_plane_projector() {
        let g = MetricField::euclidean(3, cube(3, 1.0));
        let e = DistributionSpec::parse(3, &[vec!["1", "0", "0"], vec!["0", "1", "0"]]).unwrap();
        let pq = projector_at(&g, &e, &[0.1, 0.2, 0.3]).unwrap();
        let expect = Mat::from_fn(3, 3, |i, j| if i == j && i < 2 { 1.0 } else { 0.0 });
        assert!(pq.p.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn contact_projector() {
        let (g, e) = contact();
        let pq = projector_at(&g, &e, &[0.0, 0.0, 0.0]).unwrap();
        let expect = Mat::from_fn(3, 3, |i, j| if i == j && i < 2 { 1.0 } else { 0.0 });
        assert!(pq.p.max_abs_diff(&expect) < 1e-15);
        // at y = 1, E = span{e2, e1 + e3}; Q e3 = (-1/2, 0, 1/2)
        let pq = projector_at(&g, &e, &[0.0, 1.0, 0.0]).unwrap();
        let qe3 = pq.normal(&[0.0, 0.0, 1.0]);
        let gm = Mat::identity(3);
        assert!((gm.bilinear(&qe3, &qe3) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn degenerate_frame_is_an_error() {
        let g = MetricField::euclidean(3, cube(3, 1.0));
        let e = DistributionSpec::parse(3, &[vec!["1", "0", "0"], vec!["x1", "0", "0"]]).unwrap();
        assert!(matches!(
            projector_at(&g, &e, &[0.5, 0.0, 0.0]),
            Err(Error::DegenerateFrame { .. })
        ));
        assert!(matches!(
            adapted_frame_at(&g, &e, &[0.5, 0.0, 0.0]),
            Err(Error::DegenerateFrame { .. })
        ));
    }

    #[test]
    fn adapted_frame_examples() {
        let g = MetricField::euclidean(3, cube(3, 1.0));
        let e = DistributionSpec::parse(3, &[vec!["1", "0", "0"], vec!["0", "1", "0"]]).unwrap();
        let f = adapted_frame_at(&g, &e, &[0.0; 3]).unwrap();
        assert_eq!(f.vectors, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let e = DistributionSpec::parse(3, &[vec!["2", "0", "0"], vec!["0", "3", "0"]]).unwrap();
        let f = adapted_frame_at(&g, &e, &[0.0; 3]).unwrap();
        assert_eq!(f.vectors, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert_eq!(f.pivots, vec![2]);
    }

    #[test]
    fn sphere_adapted_frame() {
        let (g, e) = sphere();
        let p = [0.0, 0.0, 2.0];
        let f = adapted_frame_at(&g, &e, &p).unwrap();
        let pq = projector_at(&g, &e, &p).unwrap();
        let gm = metric_at(&g, &p).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((gm.bilinear(&f.vectors[a], &f.vectors[b]) - want).abs() < 1e-12);
            }
        }
        for v in f.tangent() {
            // tangent to the sphere through p: orthogonal to the radius
            assert!(linalg::dot(v, &p).abs() < 1e-12);
            assert!(linalg::norm2(&linalg::sub(&pq.tangent(v), v)) < 1e-12);
        }
        let radial = &f.vectors[2];
        assert!((radial[2].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bracket_examples() {
        let p = [0.3, -0.2, 0.5];
        let c1 = ConstantField(vec![1.0, 2.0, 0.0]);
        let c2 = ConstantField(vec![0.0, -1.0, 4.0]);
        assert_eq!(lie_bracket(&c1, &c2, &p).unwrap(), vec![0.0; 3]);

        let u = ExprField::parse(&["0", "1", "0"]).unwrap();
        let v = ExprField::parse(&["1", "0", "x2"]).unwrap();
        let b = lie_bracket(&u, &v, &p).unwrap();
        // oracle: central difference of V along U minus U along V (U constant)
        let h = 1e-6;
        let vp = v.eval(&[p[0], p[1] + h, p[2]]).unwrap();
        let vm = v.eval(&[p[0], p[1] - h, p[2]]).unwrap();
        let fd: Vec<f64> = vp.iter().zip(&vm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        for k in 0..3 {
            assert!((b[k] - fd[k]).abs() < 1e-8);
        }
        assert_eq!(b, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn warped_lie_derivative() {
        let (g, _) = warped();
        let dz = ConstantField(vec![0.0, 0.0, 1.0]);
        let dx = ConstantField(vec![1.0, 0.0, 0.0]);
        for z in [-0.5, 0.0, 0.4] {
            let p = [0.1, 0.2, z];
            let l = lie_derivative_metric(&g, &dz, &dx, &dx, &p).unwrap();
            // oracle: central difference of g_xx along the flow of ∂z
            let h = 1e-5;
            let fd = (metric_at(&g, &[0.1, 0.2, z + h]).unwrap()[(0, 0)]
                - metric_at(&g, &[0.1, 0.2, z - h]).unwrap()[(0, 0)])
                / (2.0 * h);
            assert!((l - fd).abs() < 1e-8 * (1.0 + fd.abs()));
            // closed form 2 f f' with f = e^z
            assert!((l - 2.0 * (2.0 * z).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_lie_derivative_vanishes() {
        let g = MetricField::euclidean(3, cube(3, 1.0));
        let w = ConstantField(vec![0.3, -1.0, 2.0]);
        let u = ConstantField(vec![1.0, 0.0, 0.0]);
        let v = ConstantField(vec![0.0, 1.0, 1.0]);
        assert_eq!(lie_derivative_metric(&g, &w, &u, &v, &[0.1, 0.2, 0.3]).unwrap(), 0.0);
    }

    #[test]
    fn involutivity_examples() {
        let g = MetricField::euclidean(3, cube(3, 1.0));
        let planes = DistributionSpec::parse(3, &[vec!["1", "0", "0"], vec!["0", "1", "0"]]).unwrap();
        assert!(involutivity_residual(&g, &planes, &[0.3, 0.1, -0.2]).unwrap() <= 1e-12);
        let (g, e) = contact();
        assert!((involutivity_residual(&g, &e, &[0.0; 3]).unwrap() - 1.0).abs() < 1e-12);
        let (g, e) = sphere();
        for p in [[0.0, 0.0, 2.0], [0.5, -0.3, 1.7], [1.1, 0.9, 2.6]] {
            assert!(involutivity_residual(&g, &e, &p).unwrap() <= 1e-10);
        }
    }
}
