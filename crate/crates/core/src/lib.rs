//! Canonical connections on foliated Riemannian manifolds given by symbolic
//! metric and frame expressions: connection coefficients, geodesics,
//! transport, Jacobi fields and local Frobenius charts.

pub mod connection;
pub mod error;
pub mod expr;
pub mod frobenius;
pub mod geometry;
pub mod linalg;
pub mod real;
pub mod scenario;
pub mod transport;
pub mod verify;

pub use connection::{canonical_at, levi_civita_at, torsion_at, ConnectionEval, ConnectionKind};
pub use error::{Error, Result};
pub use expr::Expression;
pub use frobenius::{build_frobenius_chart, leaf_sample, ChartOptions, FrobeniusChart, IntegrabilityMode};
pub use geometry::{DistributionSpec, Domain, MetricField};
pub use scenario::{load_config, ScenarioConfig};
pub use transport::{exp_map, integrate_geodesic, jacobi_field_ode, parallel_transport, Trajectory};
