//! Finsler metric definitions: built-in families, parsed expressions, the
//! built-in zoo, and config-file loading.

pub mod convexity;
pub mod expr;
pub mod volume;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{Jet, JetSpec};
use crate::scalar::Real;
use expr::{parse_metric, EvalError, ExprAst, ExprScalar};
pub use convexity::{check_strong_convexity, ConvexityReport, ConvexitySample};
pub use volume::{default_quadrature, VolumeDensity, VolumeKind};

/// How `F(x, y)` is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Family {
    /// `F = sqrt(g_ij(x) y^i y^j)`.
    Riemannian { g: Vec<Vec<ExprAst>> },
    /// `F = sqrt(a_ij(x) y^i y^j) + b_i(x) y^i`.
    Randers {
        a: Vec<Vec<ExprAst>>,
        b: Vec<ExprAst>,
    },
    /// x-independent norm given by an expression in `y` only.
    MinkowskiNorm { expr: ExprAst },
    /// Funk metric of the Euclidean unit ball.
    Funk,
    /// Arbitrary expression in `x` and `y`.
    Expression { expr: ExprAst },
}

/// Region of x-space where the metric is meant to be evaluated and sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Unbounded,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Unbounded => true,
            Domain::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (a, b))| *a <= *v && *v <= *b),
            Domain::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                d2 <= radius * radius
            }
        }
    }

    /// Maps a point of the unit cube `[0,1]^n` into the domain (for sampling).
    /// Unbounded domains sample `[-1, 1]^n`.
    pub fn from_unit_cube(&self, u: &[f64]) -> Vec<f64> {
        match self {
            Domain::Unbounded => u.iter().map(|t| 2.0 * t - 1.0).collect(),
            Domain::Box { lo, hi } => u
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(t, (a, b))| a + t * (b - a))
                .collect(),
            Domain::Ball { center, radius } => {
                // Radius by the first coordinate (volume-uniform), direction from the rest.
                let n = u.len();
                let r = radius * u[0].powf(1.0 / n as f64);
                let dir = match n {
                    1 => vec![1.0],
                    2 => {
                        let t = 2.0 * std::f64::consts::PI * u[1];
                        vec![t.cos(), t.sin()]
                    }
                    _ => {
                        let z = 2.0 * u[1] - 1.0;
                        let t = 2.0 * std::f64::consts::PI * u[2];
                        let s = (1.0 - z * z).max(0.0).sqrt();
                        let mut d = vec![s * t.cos(), s * t.sin(), z];
                        d.resize(n, 0.0);
                        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                        d.iter().map(|v| v / norm).collect()
                    }
                };
                center.iter().zip(dir).map(|(c, d)| c + r * d).collect()
            }
        }
    }
}

/// A Finsler metric on a single coordinate chart of `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    pub dim: usize,
    pub family: Family,
    pub domain: Domain,
}

fn const_matrix(m: &[&[f64]]) -> Vec<Vec<ExprAst>> {
    m.iter()
        .map(|row| row.iter().map(|v| ExprAst::Const(*v)).collect())
        .collect()
}

fn parse_all(src: &[&str]) -> Result<Vec<ExprAst>> {
    src.iter().map(|s| parse_metric(s).map_err(Error::from)).collect()
}

/// Names accepted by [`MetricSpec::builtin`].
pub const BUILTIN_NAMES: [&str; 7] = [
    "euclidean",
    "sphere",
    "quartic-minkowski",
    "randers-berwald",
    "randers-generic",
    "funk2",
    "funk3",
];

impl MetricSpec {
    pub fn new(name: impl Into<String>, dim: usize, family: Family, domain: Domain) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            dim,
            family,
            domain,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Metric given by a single expression `F(x, y)`.
    pub fn from_expression(name: impl Into<String>, dim: usize, source: &str) -> Result<Self> {
        let expr = parse_metric(source)?;
        let family = if expr.uses_x() {
            Family::Expression { expr }
        } else {
            Family::MinkowskiNorm { expr }
        };
        Self::new(name, dim, family, Domain::Unbounded)
    }

    /// Funk metric of the unit ball in `R^dim`, sampled on the ball of radius `radius`.
    pub fn funk(dim: usize, radius: f64) -> Result<Self> {
        Self::new(
            format!("funk{dim}"),
            dim,
            Family::Funk,
            Domain::Ball {
                center: vec![0.0; dim],
                radius,
            },
        )
    }

    /// One of the built-in test metrics; see [`BUILTIN_NAMES`].
    pub fn builtin(name: &str) -> Result<Self> {
        let unit_box = |n: usize| Domain::Box {
            lo: vec![-1.0; n],
            hi: vec![1.0; n],
        };
        match name {
            "euclidean" => Self::new(
                name,
                2,
                Family::Riemannian {
                    g: const_matrix(&[&[1.0, 0.0], &[0.0, 1.0]]),
                },
                unit_box(2),
            ),
            "sphere" => {
                let c = parse_metric("4/(1 + x1^2 + x2^2)^2")?;
                let z = ExprAst::Const(0.0);
                Self::new(
                    name,
                    2,
                    Family::Riemannian {
                        g: vec![vec![c.clone(), z.clone()], vec![z, c]],
                    },
                    unit_box(2),
                )
            }
            "quartic-minkowski" => Self::new(
                name,
                2,
                Family::MinkowskiNorm {
                    expr: parse_metric("(y1^4 + y2^4)^0.25")?,
                },
                unit_box(2),
            ),
            "randers-berwald" => Self::new(
                name,
                2,
                Family::Randers {
                    a: const_matrix(&[&[1.0, 0.0], &[0.0, 1.0]]),
                    b: parse_all(&["0.3", "0.2"])?,
                },
                unit_box(2),
            ),
            "randers-generic" => Self::new(
                name,
                2,
                Family::Randers {
                    a: const_matrix(&[&[1.0, 0.0], &[0.0, 1.0]]),
                    b: parse_all(&["0.3*x2", "0"])?,
                },
                unit_box(2),
            ),
            "funk2" => Self::funk(2, 0.5),
            "funk3" => Self::funk(3, 0.5),
            _ => Err(Error::UnknownTag {
                tag: name.to_string(),
                valid: BUILTIN_NAMES.join(", "),
            }),
        }
    }

    /// All built-in metrics.
    pub fn zoo() -> Vec<Self> {
        BUILTIN_NAMES
            .iter()
            .map(|n| Self::builtin(n).expect("built-in metric"))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim;
        if n < 2 {
            return Err(Error::InvalidMetric(format!("dimension must be at least 2, got {n}")));
        }
        let check = |e: &ExprAst, allow_y: bool, what: &str| -> Result<()> {
            let (mx, my) = e.max_indices();
            if mx.is_some_and(|i| i >= n) || my.is_some_and(|i| i >= n) {
                return Err(Error::InvalidMetric(format!(
                    "{what} references a variable beyond dimension {n}"
                )));
            }
            if !allow_y && my.is_some() {
                return Err(Error::InvalidMetric(format!("{what} must not depend on y")));
            }
            Ok(())
        };
        let square = |m: &[Vec<ExprAst>], what: &str| -> Result<()> {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidMetric(format!("{what} must be {n}x{n}")));
            }
            m.iter().flatten().try_for_each(|e| check(e, false, what))
        };
        match &self.family {
            Family::Riemannian { g } => square(g, "g")?,
            Family::Randers { a, b } => {
                square(a, "alpha")?;
                if b.len() != n {
                    return Err(Error::InvalidMetric(format!("beta must have {n} components")));
                }
                b.iter().try_for_each(|e| check(e, false, "beta"))?;
            }
            Family::MinkowskiNorm { expr } => {
                check(expr, true, "norm")?;
                if expr.uses_x() {
                    return Err(Error::InvalidMetric("a Minkowski norm must not depend on x".into()));
                }
            }
            Family::Funk => {}
            Family::Expression { expr } => check(expr, true, "expression")?,
        }
        match &self.domain {
            Domain::Box { lo, hi } if lo.len() != n || hi.len() != n => {
                Err(Error::InvalidMetric("domain box has the wrong dimension".into()))
            }
            Domain::Ball { center, .. } if center.len() != n => {
                Err(Error::InvalidMetric("domain ball has the wrong dimension".into()))
            }
            _ => Ok(()),
        }
    }

    /// True when the metric does not depend on `x`.
    pub fn is_minkowski(&self) -> bool {
        match &self.family {
            Family::MinkowskiNorm { .. } => true,
            Family::Expression { expr } => !expr.uses_x(),
            Family::Riemannian { g } => g.iter().flatten().all(|e| !e.uses_x()),
            Family::Randers { a, b } => a.iter().flatten().chain(b).all(|e| !e.uses_x()),
            Family::Funk => false,
        }
    }

    pub fn is_riemannian(&self) -> bool {
        matches!(self.family, Family::Riemannian { .. })
    }

    /// Checks `x` against the domain hint (and the unit ball for Funk).
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        let funk_ok = !matches!(self.family, Family::Funk) || x.iter().map(|v| v * v).sum::<f64>() < 1.0;
        if x.len() != self.dim || !funk_ok || !self.domain.contains(x) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfDomain(x.to_vec()));
        }
        if let Some(b) = self.randers_norm(x) {
            let b = b?;
            if !(b < 1.0) {
                return Err(Error::InvalidMetric(format!("Randers condition fails at {x:?}: |β|_α = {b}")));
            }
        }
        Ok(())
    }

    /// `‖β‖_α = sqrt(b_i a^{ij} b_j)` at `x` for Randers metrics.
    pub fn randers_norm(&self, x: &[f64]) -> Option<Result<f64>> {
        let Family::Randers { a, b } = &self.family else {
            return None;
        };
        let eval = || -> Result<f64> {
            let am: Vec<Vec<f64>> = a
                .iter()
                .map(|row| row.iter().map(|e| e.eval(x, &[], &1.0)).collect())
                .collect::<std::result::Result<_, _>>()?;
            let bv: Vec<f64> = b.iter().map(|e| e.eval(x, &[], &1.0)).collect::<std::result::Result<_, _>>()?;
            let sol = crate::linalg::lstsq(&am, &bv)?.0;
            Ok(bv.iter().zip(&sol).map(|(p, q)| p * q).sum::<f64>().max(0.0).sqrt())
        };
        Some(eval())
    }

    /// Evaluates the base matrix `g_ij(x)` (Riemannian) or `a_ij(x)` (Randers).
    pub fn base_matrix<S: ExprScalar>(&self, x: &[S], unit: &S) -> Option<Result<Vec<Vec<S>>, EvalError>> {
        let m = match &self.family {
            Family::Riemannian { g } => g,
            Family::Randers { a, .. } => a,
            _ => return None,
        };
        Some(
            m.iter()
                .map(|row| row.iter().map(|e| e.eval(x, &[], unit)).collect())
                .collect(),
        )
    }

    /// `F(x, y)` over any scalar type the expression language supports.
    pub fn eval_f<S: ExprScalar>(&self, x: &[S], y: &[S]) -> Result<S, EvalError> {
        let unit = y[0].lift(1.0);
        let zero = y[0].lift(0.0);
        let quad = |m: &[Vec<ExprAst>]| -> Result<S, EvalError> {
            let mut acc = zero.clone();
            for (i, row) in m.iter().enumerate() {
                for (j, e) in row.iter().enumerate() {
                    if matches!(e, ExprAst::Const(c) if *c == 0.0) {
                        continue;
                    }
                    acc = acc + e.eval(x, y, &unit)? * y[i].clone() * y[j].clone();
                }
            }
            Ok(acc)
        };
        let dot = |a: &[S], b: &[S]| {
            a.iter()
                .zip(b)
                .fold(zero.clone(), |acc, (p, q)| acc + p.clone() * q.clone())
        };
        match &self.family {
            Family::Riemannian { g } => quad(g)?.sqrt_checked(),
            Family::Randers { a, b } => {
                let alpha = quad(a)?.sqrt_checked()?;
                let mut beta = zero.clone();
                for (i, e) in b.iter().enumerate() {
                    beta = beta + e.eval(x, y, &unit)? * y[i].clone();
                }
                Ok(alpha + beta)
            }
            Family::MinkowskiNorm { expr } | Family::Expression { expr } => expr.eval(x, y, &unit),
            Family::Funk => {
                let xx = dot(x, x);
                let yy = dot(y, y);
                let xy = dot(x, y);
                let one_minus = unit.clone() - xx.clone();
                if one_minus.value_f64() <= 0.0 {
                    return Err(EvalError::Domain {
                        func: "funk",
                        value: xx.value_f64(),
                    });
                }
                let disc = yy.clone() - (xx * yy - xy.clone() * xy.clone());
                Ok((disc.sqrt_checked()? + xy) / one_minus)
            }
        }
    }

    /// Jet of `F` at `(x, y)`, seeded in all `2n` variables (x first).
    pub fn eval_f_jet<T: Real>(&self, x: &[T], y: &[T], spec: JetSpec) -> Result<Jet<T>> {
        let n = self.dim;
        if spec.num_vars() != 2 * n || x.len() != n || y.len() != n {
            return Err(Error::InvalidMetric(format!(
                "point/jet dimension mismatch for a {n}-dimensional metric"
            )));
        }
        if y.iter().all(|v| v.is_zero()) {
            return Err(Error::ZeroDirection);
        }
        let xs: Vec<Jet<T>> = (0..n)
            .map(|i| Jet::seed_variable(i, x[i], spec))
            .collect::<std::result::Result<_, _>>()?;
        let ys: Vec<Jet<T>> = (0..n)
            .map(|i| Jet::seed_variable(n + i, y[i], spec))
            .collect::<std::result::Result<_, _>>()?;
        Ok(self.eval_f(&xs, &ys)?)
    }

    /// Loads a metric (and its volume density) from a TOML or JSON file.
    pub fn load(path: &Path) -> Result<(Self, Option<VolumeDensity>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        Self::from_config_str(&text, is_json)
    }

    /// Parses a metric config document.
    pub fn from_config_str(text: &str, json: bool) -> Result<(Self, Option<VolumeDensity>)> {
        let cfg: MetricConfig = if json {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.build()
    }
}

/// On-disk metric description.
///
/// ```toml
/// name = "tilted"
/// dimension = 2
/// family = "randers"          # riemannian | randers | minkowski | funk | expression | builtin
/// alpha = [["1", "0"], ["0", "1"]]
/// beta = ["0.3*x2", "0"]
///
/// [volume]
/// kind = "bh"                 # bh | riemannian | user
/// quadrature_points = 128
///
/// [domain]
/// box = [[-1.0, 1.0], [-1.0, 1.0]]
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricConfig {
    name: Option<String>,
    dimension: Option<usize>,
    family: String,
    expression: Option<String>,
    g: Option<Vec<Vec<String>>>,
    alpha: Option<Vec<Vec<String>>>,
    beta: Option<Vec<String>>,
    volume: Option<VolumeConfig>,
    domain: Option<DomainConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct VolumeConfig {
    kind: String,
    sigma: Option<String>,
    quadrature_points: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainConfig {
    #[serde(rename = "box")]
    bounds: Option<Vec<[f64; 2]>>,
    center: Option<Vec<f64>>,
    radius: Option<f64>,
}

impl MetricConfig {
    fn build(self) -> Result<(MetricSpec, Option<VolumeDensity>)> {
        let missing = |what: &str| Error::Config(format!("family `{}` needs `{what}`", self.family));
        let matrix = |m: &Vec<Vec<String>>| -> Result<Vec<Vec<ExprAst>>> {
            m.iter()
                .map(|row| row.iter().map(|s| parse_metric(s).map_err(Error::from)).collect())
                .collect()
        };
        let mut spec = match self.family.as_str() {
            "builtin" => MetricSpec::builtin(self.name.as_deref().ok_or_else(|| missing("name"))?)?,
            "funk" => MetricSpec::funk(self.dimension.ok_or_else(|| missing("dimension"))?, 0.5)?,
            family => {
                let dim = self.dimension.ok_or_else(|| missing("dimension"))?;
                let fam = match family {
                    "riemannian" => Family::Riemannian {
                        g: matrix(self.g.as_ref().ok_or_else(|| missing("g"))?)?,
                    },
                    "randers" => Family::Randers {
                        a: matrix(self.alpha.as_ref().ok_or_else(|| missing("alpha"))?)?,
                        b: self
                            .beta
                            .as_ref()
                            .ok_or_else(|| missing("beta"))?
                            .iter()
                            .map(|s| parse_metric(s).map_err(Error::from))
                            .collect::<Result<_>>()?,
                    },
                    "minkowski" | "minkowski_norm" => Family::MinkowskiNorm {
                        expr: parse_metric(self.expression.as_deref().ok_or_else(|| missing("expression"))?)?,
                    },
                    "expression" => Family::Expression {
                        expr: parse_metric(self.expression.as_deref().ok_or_else(|| missing("expression"))?)?,
                    },
                    other => {
                        return Err(Error::UnknownTag {
                            tag: other.to_string(),
                            valid: "riemannian, randers, minkowski, funk, expression, builtin".into(),
                        })
                    }
                };
                MetricSpec::new(self.name.clone().unwrap_or_else(|| family.to_string()), dim, fam, Domain::Unbounded)?
            }
        };
        if let Some(name) = &self.name {
            spec.name = name.clone();
        }
        if let Some(d) = &self.domain {
            spec.domain = match (&d.bounds, &d.center, d.radius) {
                (Some(b), None, None) => Domain::Box {
                    lo: b.iter().map(|p| p[0]).collect(),
                    hi: b.iter().map(|p| p[1]).collect(),
                },
                (None, center, Some(radius)) => Domain::Ball {
                    center: center.clone().unwrap_or_else(|| vec![0.0; spec.dim]),
                    radius,
                },
                _ => return Err(Error::Config("domain needs either `box` or `radius` (with optional `center`)".into())),
            };
            spec.validate()?;
        }
        let volume = self
            .volume
            .map(|v| {
                let mut vol = VolumeDensity::parse_kind(&v.kind, v.sigma.as_deref())?;
                if let Some(q) = v.quadrature_points {
                    vol.quadrature_points = Some(q);
                }
                Ok::<_, Error>(vol)
            })
            .transpose()?;
        Ok((spec, volume))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_value() {
        let m = MetricSpec::builtin("euclidean").unwrap();
        let f = m.eval_f::<f64>(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((f - 5.0).abs() < 1e-15);
    }

    #[test]
    fn funk_at_origin_is_euclidean() {
        let m = MetricSpec::builtin("funk2").unwrap();
        assert!((m.eval_f::<f64>(&[0.0, 0.0], &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quartic_value() {
        let m = MetricSpec::builtin("quartic-minkowski").unwrap();
        let f = m.eval_f::<f64>(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((f - 2f64.powf(0.25)).abs() < 1e-15);
    }

    #[test]
    fn funk_rejects_outside_ball() {
        let m = MetricSpec::builtin("funk2").unwrap();
        assert!(m.check_point(&[0.9, 0.5]).is_err());
        assert!(m.eval_f::<f64>(&[0.9, 0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn config_round_trip() {
        let toml = r#"
            name = "tilted"
            dimension = 2
            family = "randers"
            alpha = [["1", "0"], ["0", "1"]]
            beta = ["0.3*x2", "0"]
            [volume]
            kind = "bh"
            quadrature_points = 64
            [domain]
            box = [[-1.0, 1.0], [-1.0, 1.0]]
        "#;
        let (m, vol) = MetricSpec::from_config_str(toml, false).unwrap();
        assert_eq!(m, MetricSpec { name: "tilted".into(), ..MetricSpec::builtin("randers-generic").unwrap() });
        assert_eq!(vol.unwrap().quadrature_points, Some(64));
        let json = r#"{"family": "builtin", "name": "funk3"}"#;
        let (m, vol) = MetricSpec::from_config_str(json, true).unwrap();
        assert_eq!(m.dim, 3);
        assert!(vol.is_none());
    }

    #[test]
    fn validation() {
        assert!(MetricSpec::from_expression("bad", 2, "sqrt(y1^2 + y3^2)").is_err());
        assert!(MetricSpec::from_expression("ok", 2, "sqrt(y1^2 + y2^2)").unwrap().is_minkowski());
        assert!(MetricSpec::builtin("nope").is_err());
    }
}
