//! Finsler geometry on truncated Taylor jets.
//!
//! The engine evaluates a metric `F(x, y)` as a multivariate Taylor jet in the
//! `2n` phase-space variables and derives the full curvature tower from it:
//! fundamental and Cartan tensors, spray and connections, Berwald, Landsberg,
//! E- and S-curvature, spray and flag curvature, and hh-curvatures. The
//! [`verify`] module turns identities among these quantities into residual
//! checks and classifies isotropy of the S- and Berwald scalar curvature.
//!
//! Everything numeric is generic over [`Real`] (`f32`, `f64`); the jet type
//! itself only needs field operations, so exact rationals work for polynomial
//! arithmetic.

pub mod curvature;
pub mod error;
pub mod fundamentals;
pub mod jets;
mod linalg;
pub mod metricdef;
pub mod sampling;
pub mod scalar;
pub mod spray;
pub mod tower;
pub mod verify;

pub use curvature::{Conventions, CurvatureBundle, SRoute};
pub use error::{Error, Result};
pub use fundamentals::{Frame, Fundamentals, PointDir, ScalarTag};
pub use jets::{Jet, JetError, JetSpec, DEFAULT_ORDER};
pub use metricdef::expr::{parse_metric, ExprAst};
pub use metricdef::{Domain, Family, MetricSpec, VolumeDensity, VolumeKind};
pub use scalar::Real;
pub use spray::SprayData;
pub use tower::Tower;

pub type Jet64 = Jet<f64>;
pub type Jet32 = Jet<f32>;
pub type PointDir64 = PointDir<f64>;
pub type Fundamentals64 = Fundamentals<f64>;
pub type SprayData64 = SprayData<f64>;
pub type CurvatureBundle64 = CurvatureBundle<f64>;
pub type Tower64<'a> = Tower<'a, f64>;
