//! Scenario configuration: the triple (domain, metric, distribution) plus
//! numerics, loaded from TOML. Built-in scenarios are embedded in the
//! binary.
//!
//! ```toml
//! name = "warped_product"
//! n = 3
//! r = 2
//! metric = ["exp(2*x3)", "0", "0", "exp(2*x3)", "0", "1"]   # g11 g12 g13 g22 g23 g33
//! frame = [["1", "0", "0"], ["0", "1", "0"]]                 # r rows of n components
//! base_point = [0.0, 0.0, 0.0]                              # default: box center
//! initial_velocity = [0.4, -0.3, 0.5]                       # reference geodesic
//!
//! [domain]
//! lower = [-1.0, -1.0, -1.0]
//! upper = [1.0, 1.0, 1.0]
//!
//! [numerics]          # every key optional
//! h = 1e-3            # integrator step
//! chart_step = 1e-2   # step for geodesics shot by leaf and chart sampling
//! delta = 0.3
//! epsilon = 0.5
//! m = 9
//! seed = 42
//! frame_rule = "projected_transport"
//!
//! [numerics.tolerances]
//! tangency = 1e-5
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frobenius::FrameRule;
use crate::geometry::{adapted_frame_at, metric_at, DistributionSpec, Domain, MetricField};

pub const BUILTIN: &[(&str, &str)] = &[
    ("euclidean_planes", include_str!("../scenarios/euclidean_planes.toml")),
    ("contact3d", include_str!("../scenarios/contact3d.toml")),
    ("sphere_foliation", include_str!("../scenarios/sphere_foliation.toml")),
    ("warped_product", include_str!("../scenarios/warped_product.toml")),
    ("full_tm", include_str!("../scenarios/full_tm.toml")),
    ("normal_line", include_str!("../scenarios/normal_line.toml")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(name, _)| *name)
}

/// Thresholds used by the invariant checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub reduction: f64,
    pub projector: f64,
    pub torsion_vanishing: f64,
    pub torsion_conditions: f64,
    pub compatibility: f64,
    pub torsion_recovery: f64,
    pub koszul: f64,
    pub frame_independence: f64,
    pub total_geodesy: f64,
    pub curvature_closure: f64,
    pub blend: f64,
    pub bott: f64,
    pub comparison_gap: f64,
    pub energy: f64,
    pub confinement: f64,
    pub jacobi_confinement: f64,
    pub jacobi_oracle: f64,
    pub tangency: f64,
    pub leaf_radius: f64,
    pub leaf_consistency: f64,
    pub involutivity: f64,
    pub contact_residual: f64,
    pub negative_control: f64,
    pub convergence_order: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            reduction: 1e-10,
            projector: 1e-10,
            torsion_vanishing: 1e-9,
            torsion_conditions: 1e-8,
            compatibility: 1e-8,
            torsion_recovery: 1e-9,
            koszul: 1e-8,
            frame_independence: 1e-8,
            total_geodesy: 1e-8,
            curvature_closure: 1e-7,
            blend: 1e-10,
            bott: 1e-8,
            comparison_gap: 1e-4,
            energy: 1e-7,
            confinement: 1e-6,
            jacobi_confinement: 1e-5,
            jacobi_oracle: 1e-4,
            tangency: 1e-5,
            leaf_radius: 1e-6,
            leaf_consistency: 1e-9,
            involutivity: 1e-6,
            contact_residual: 1e-9,
            negative_control: 1e-2,
            convergence_order: 3.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub h: f64,
    pub chart_step: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub m: usize,
    pub seed: u64,
    pub frame_rule: FrameRule,
    pub tolerances: Tolerances,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            h: 1e-3,
            chart_step: 1e-2,
            delta: 0.3,
            epsilon: 0.5,
            m: 9,
            seed: 42,
            frame_rule: FrameRule::default(),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    description: Option<String>,
    n: Option<usize>,
    r: Option<usize>,
    metric: Option<Vec<String>>,
    frame: Option<Vec<Vec<String>>>,
    domain: Option<RawDomain>,
    base_point: Option<Vec<f64>>,
    initial_velocity: Option<Vec<f64>>,
    numerics: Option<Numerics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub description: String,
    pub n: usize,
    pub r: usize,
    pub metric_text: Vec<String>,
    pub frame_text: Vec<Vec<String>>,
    pub domain: Domain,
    pub base_point: Vec<f64>,
    pub initial_velocity: Vec<f64>,
    pub numerics: Numerics,
    metric: MetricField,
    distribution: DistributionSpec,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

impl ScenarioConfig {
    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn distribution(&self) -> &DistributionSpec {
        &self.distribution
    }

    /// Parse and validate a TOML document; `origin` names it in errors.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    format!("{origin}:{line}:{col}")
                }
                None => origin.to_string(),
            };
            Error::ConfigParse {
                location,
                message: e.message().to_string(),
            }
        })?;
        Self::validate(raw, origin)
    }

    fn validate(raw: RawConfig, origin: &str) -> Result<Self> {
        let n = raw.n.ok_or_else(|| invalid("n required"))?;
        let r = raw.r.ok_or_else(|| invalid("r required"))?;
        if !(1 <= r && r <= n) {
            return Err(invalid(format!("r must satisfy 1 ≤ r ≤ n, got r = {r}, n = {n}")));
        }
        let metric_text = raw.metric.ok_or_else(|| invalid("metric required"))?;
        if metric_text.len() != n * (n + 1) / 2 {
            return Err(invalid(format!(
                "metric needs {} upper-triangular entries, got {}",
                n * (n + 1) / 2,
                metric_text.len()
            )));
        }
        let frame_text = raw.frame.ok_or_else(|| invalid("frame required"))?;
        if frame_text.len() != r || frame_text.iter().any(|row| row.len() != n) {
            return Err(invalid(format!("frame needs {r} rows of {n} components")));
        }
        let rd = raw.domain.ok_or_else(|| invalid("domain required"))?;
        let lower = rd.lower.ok_or_else(|| invalid("domain.lower required"))?;
        let upper = rd.upper.ok_or_else(|| invalid("domain.upper required"))?;
        if lower.len() != n || upper.len() != n {
            return Err(invalid(format!("domain bounds need {n} entries")));
        }
        let domain = Domain::new(lower, upper).map_err(|e| invalid(format!("domain: {e}")))?;
        let metric = MetricField::parse(n, &metric_text, domain.clone()).map_err(|e| invalid(format!("metric: {e}")))?;
        let distribution = DistributionSpec::parse(n, &frame_text).map_err(|e| invalid(format!("frame: {e}")))?;

        let center = domain.center();
        let gc = metric_at(&metric, &center).map_err(|e| invalid(format!("metric at box center: {e}")))?;
        if crate::linalg::cholesky(&gc).is_none() {
            return Err(invalid(format!("metric is not positive definite at box center {center:?}")));
        }
        let base_point = raw.base_point.unwrap_or(center);
        if !domain.contains(&base_point) {
            return Err(invalid(format!("base_point {base_point:?} is outside the domain")));
        }
        adapted_frame_at(&metric, &distribution, &base_point).map_err(|e| invalid(format!("frame at base_point: {e}")))?;
        let initial_velocity = match raw.initial_velocity {
            Some(v) if v.len() == n => v,
            Some(_) => return Err(invalid(format!("initial_velocity needs {n} entries"))),
            None => {
                let half = domain
                    .lower
                    .iter()
                    .zip(&domain.upper)
                    .map(|(a, b)| 0.5 * (b - a))
                    .fold(f64::INFINITY, f64::min);
                vec![0.25 * half; n]
            }
        };
        let numerics = raw.numerics.unwrap_or_default();
        for (field, v) in [
            ("numerics.h", numerics.h),
            ("numerics.chart_step", numerics.chart_step),
            ("numerics.delta", numerics.delta),
            ("numerics.epsilon", numerics.epsilon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{field} must be positive, got {v}")));
            }
        }
        if numerics.m == 0 {
            return Err(invalid("numerics.m must be at least 1"));
        }
        Ok(Self {
            name: raw.name.unwrap_or_else(|| origin.to_string()),
            description: raw.description.unwrap_or_default(),
            n,
            r,
            metric_text,
            frame_text,
            domain,
            base_point,
            initial_velocity,
            numerics,
            metric,
            distribution,
        })
    }

    /// `count` probe points drawn uniformly from the domain shrunk by 10%
    /// per axis, from a generator seeded with `numerics.seed`.
    pub fn probes(&self, count: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.numerics.seed);
        let inner = self.domain.shrunk(0.1);
        (0..count)
            .map(|_| {
                inner
                    .lower
                    .iter()
                    .zip(&inner.upper)
                    .map(|(&a, &b)| rng.gen_range(a..b))
                    .collect()
            })
            .collect()
    }

    /// Seeded generator for anything else a check needs to draw, separated
    /// from the probe stream by `stream`.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.numerics.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Built-in scenario by name, otherwise a TOML file at that path.
pub fn load_config(name_or_path: &str) -> Result<ScenarioConfig> {
    if let Some((name, text)) = BUILTIN.iter().find(|(name, _)| *name == name_or_path) {
        return ScenarioConfig::from_toml(text, name);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::UnknownScenario(name_or_path.to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_toml(&text, &path.display().to_string())
}
