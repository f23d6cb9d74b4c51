//! Volume densities `σ(x)` and their x-jets.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use super::expr::{parse_metric, ExprAst, ExprScalar};
use super::MetricSpec;
use crate::error::{Error, Result};
use crate::jets::{Jet, JetSpec};
use crate::linalg::invert_jets;
use crate::scalar::{lit, to_f64, Real};

/// Highest x-order carried by density jets. Nothing downstream needs more
/// than two x-derivatives of `ln σ`.
pub const DENSITY_ORDER_CAP: usize = 4;

/// Default points per angular dimension: 128 on the circle, 32 on `S²`
/// (a 16 × 32 Gauss–Legendre × trapezoid grid). Both rules converge
/// spectrally for smooth strongly convex norms.
pub fn default_quadrature(n: usize) -> usize {
    if n <= 2 {
        128
    } else {
        32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VolumeKind {
    BusemannHausdorff,
    /// `sqrt(det g(x))` for Riemannian metrics, `sqrt(det a(x))` for Randers metrics.
    Riemannian,
    User { sigma: ExprAst },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeDensity {
    pub kind: VolumeKind,
    /// Points per angular dimension (azimuthal count; the polar rule uses half
    /// as many). `None` picks [`default_quadrature`] for the dimension.
    pub quadrature_points: Option<usize>,
    /// Fractional shift of the azimuthal grid, in units of one grid step.
    pub grid_offset: f64,
}

impl Default for VolumeDensity {
    fn default() -> Self {
        Self::busemann_hausdorff()
    }
}

impl VolumeDensity {
    pub fn busemann_hausdorff() -> Self {
        Self {
            kind: VolumeKind::BusemannHausdorff,
            quadrature_points: None,
            grid_offset: 0.0,
        }
    }

    pub fn riemannian() -> Self {
        Self {
            kind: VolumeKind::Riemannian,
            ..Self::busemann_hausdorff()
        }
    }

    /// User density given as an expression in `x1..xn`.
    pub fn user(source: &str) -> Result<Self> {
        let sigma = parse_metric(source)?;
        if sigma.uses_y() {
            return Err(Error::Density("a user density must depend on x only".into()));
        }
        Ok(Self {
            kind: VolumeKind::User { sigma },
            ..Self::busemann_hausdorff()
        })
    }

    pub fn with_quadrature(mut self, points: usize) -> Self {
        self.quadrature_points = Some(points);
        self
    }

    pub fn with_grid_offset(mut self, offset: f64) -> Self {
        self.grid_offset = offset;
        self
    }

    /// Parses `bh`, `riemannian`, or `user:EXPR`.
    pub fn parse_cli(text: &str) -> Result<Self> {
        match text.split_once(':') {
            Some(("user", expr)) => Self::user(expr),
            _ => Self::parse_kind(text, None),
        }
    }

    pub(crate) fn parse_kind(kind: &str, sigma: Option<&str>) -> Result<Self> {
        match kind {
            "bh" | "busemann_hausdorff" | "busemann-hausdorff" => Ok(Self::busemann_hausdorff()),
            "riemannian" => Ok(Self::riemannian()),
            "user" => Self::user(sigma.ok_or_else(|| Error::Config("user volume needs `sigma`".into()))?),
            other => Err(Error::UnknownTag {
                tag: other.to_string(),
                valid: "bh, riemannian, user".into(),
            }),
        }
    }

    /// Quadrature resolution used in dimension `n`.
    pub fn quadrature_for(&self, n: usize) -> usize {
        self.quadrature_points.unwrap_or_else(|| default_quadrature(n))
    }

    pub fn label(&self) -> String {
        match &self.kind {
            VolumeKind::BusemannHausdorff => match self.quadrature_points {
                Some(q) => format!("bh(q={q})"),
                None => "bh".into(),
            },
            VolumeKind::Riemannian => "riemannian".into(),
            VolumeKind::User { sigma } => format!("user({sigma})"),
        }
    }

    /// Jet of `σ` in the `n` x-variables at `x`, of order `min(order, DENSITY_ORDER_CAP)`.
    pub fn density<T: Real>(&self, metric: &MetricSpec, x: &[T], order: usize) -> Result<Jet<T>> {
        let n = metric.dim;
        let xf: Vec<f64> = x.iter().map(|v| to_f64(*v)).collect();
        metric.check_point(&xf)?;
        let spec = JetSpec::auxiliary(n, order.min(DENSITY_ORDER_CAP));
        let xs: Vec<Jet<T>> = (0..n)
            .map(|i| Jet::seed_variable(i, x[i], spec))
            .collect::<std::result::Result<_, _>>()?;
        let unit = Jet::constant(spec, T::one());
        let sigma = match &self.kind {
            VolumeKind::BusemannHausdorff => self.busemann_hausdorff_jet(metric, &xs)?,
            VolumeKind::Riemannian => {
                let m = metric
                    .base_matrix(&xs, &unit)
                    .ok_or_else(|| Error::Density("riemannian volume needs a riemannian or randers metric".into()))??;
                let (_, det) = invert_jets(&m)?;
                if det.value() <= T::zero() {
                    return Err(Error::Density(format!("det g = {} is not positive", det.value())));
                }
                det.sqrt()?
            }
            VolumeKind::User { sigma } => sigma.eval(&xs, &[], &unit)?,
        };
        let v = to_f64(sigma.value());
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Density(format!("σ(x) = {v} is not positive")));
        }
        Ok(sigma)
    }

    /// Value of `σ(x)`.
    pub fn sigma<T: Real>(&self, metric: &MetricSpec, x: &[T]) -> Result<T> {
        Ok(self.density(metric, x, 0)?.value())
    }

    /// Plain value of `σ(x)` in any expression scalar. Shares the quadrature
    /// nodes with [`density`](Self::density) but carries no derivatives.
    pub fn sigma_value<S: ExprScalar>(&self, metric: &MetricSpec, x: &[S]) -> Result<S> {
        let n = metric.dim;
        let xf: Vec<f64> = x.iter().map(|v| v.value_f64()).collect();
        metric.check_point(&xf)?;
        let unit = x[0].lift(1.0);
        let sigma = match &self.kind {
            VolumeKind::BusemannHausdorff => {
                let mut total = unit.lift(0.0);
                for (dir, w) in sphere_rule(n, self.quadrature_for(n), self.grid_offset)?.iter() {
                    let ys: Vec<S> = dir.iter().map(|c| unit.lift(*c)).collect();
                    let f = metric.eval_f(x, &ys)?;
                    total = total + f.powi_checked(-(n as i32))? * unit.lift(*w);
                }
                unit.lift(unit_ball_volume(n) * n as f64) / total
            }
            VolumeKind::Riemannian => {
                let m = metric
                    .base_matrix(x, &unit)
                    .ok_or_else(|| Error::Density("riemannian volume needs a riemannian or randers metric".into()))??;
                small_det(&m).sqrt_checked()?
            }
            VolumeKind::User { sigma } => sigma.eval(x, &[], &unit)?,
        };
        let v = sigma.value_f64();
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Density(format!("σ(x) = {v} is not positive")));
        }
        Ok(sigma)
    }

    fn busemann_hausdorff_jet<T: Real>(&self, metric: &MetricSpec, xs: &[Jet<T>]) -> Result<Jet<T>> {
        let n = metric.dim;
        let spec = xs[0].spec();
        let q = self.quadrature_for(n);
        if q < 4 {
            return Err(Error::Density(format!("quadrature needs at least 4 points, got {q}")));
        }
        let mut total = Jet::zero(spec);
        for (dir, w) in sphere_rule(n, q, self.grid_offset)?.iter() {
            let ys: Vec<Jet<T>> = dir.iter().map(|c| Jet::constant(spec, lit::<T>(*c))).collect();
            let f = metric.eval_f(xs, &ys)?;
            let fv = to_f64(f.value());
            if !(fv > 0.0 && fv.is_finite()) {
                return Err(Error::Density(format!(
                    "non-positive or non-finite radius 1/F = {} in direction {dir:?}",
                    1.0 / fv
                )));
            }
            total = total + f.powi(-(n as i32))?.scale(lit(*w));
        }
        // vol{F < 1} = (1/n) ∮ F^{-n};  σ = vol(B^n) / vol{F < 1}.
        let ball = unit_ball_volume(n);
        Ok(total.recip()?.scale(lit(ball * n as f64)))
    }
}

/// Cofactor determinant for n ≤ 3.
fn small_det<S: ExprScalar>(m: &[Vec<S>]) -> S {
    match m.len() {
        1 => m[0][0].clone(),
        2 => m[0][0].clone() * m[1][1].clone() - m[0][1].clone() * m[1][0].clone(),
        _ => {
            let minor = |a: usize, b: usize, c: usize, d: usize| {
                m[1][a].clone() * m[2][b].clone() - m[1][c].clone() * m[2][d].clone()
            };
            m[0][0].clone() * minor(1, 2, 2, 1) - m[0][1].clone() * minor(0, 2, 2, 0) + m[0][2].clone() * minor(0, 1, 1, 0)
        }
    }
}

fn unit_ball_volume(n: usize) -> f64 {
    match n {
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => unreachable!("guarded by sphere_rule"),
    }
}

type Rule = Arc<Vec<(Vec<f64>, f64)>>;

/// Quadrature nodes and weights on the unit sphere `S^{n-1}`.
fn sphere_rule(n: usize, q: usize, offset: f64) -> Result<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize, u64), Rule>>> = OnceLock::new();
    let key = (n, q, offset.to_bits());
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().unwrap().get(&key) {
        return Ok(r.clone());
    }
    let step = 2.0 * PI / q as f64;
    let azimuth = (0..q).map(|k| (k as f64 + offset) * step);
    let rule: Vec<(Vec<f64>, f64)> = match n {
        2 => azimuth.map(|t| (vec![t.cos(), t.sin()], step)).collect(),
        3 => {
            let polar = GaussLegendre::new(NonZeroUsize::new((q / 2).max(2)).unwrap());
            let mut out = Vec::with_capacity(q * q / 2);
            for &(z, wz) in polar.as_node_weight_pairs() {
                let s = (1.0 - z * z).sqrt();
                for t in azimuth.clone() {
                    out.push((vec![s * t.cos(), s * t.sin(), z], wz * step));
                }
            }
            out
        }
        _ => {
            return Err(Error::Density(format!(
                "Busemann-Hausdorff density is implemented for n = 2 and 3, got n = {n}"
            )))
        }
    };
    let rule = Arc::new(rule);
    cache.lock().unwrap().insert(key, rule.clone());
    Ok(rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_bh_is_one() {
        let m = MetricSpec::builtin("euclidean").unwrap();
        let s = VolumeDensity::busemann_hausdorff().density(&m, &[0.2f64, -0.3], 3).unwrap();
        assert!((s.value() - 1.0).abs() < 1e-13);
        assert!(s.coeffs()[1..].iter().all(|c| c.abs() < 1e-13));
    }

    #[test]
    fn riemannian_diagonal() {
        let m = MetricSpec::new(
            "diag",
            2,
            super::super::Family::Riemannian {
                g: vec![
                    vec![ExprAst::Const(4.0), ExprAst::Const(0.0)],
                    vec![ExprAst::Const(0.0), ExprAst::Const(1.0)],
                ],
            },
            super::super::Domain::Unbounded,
        )
        .unwrap();
        let s = VolumeDensity::riemannian().sigma(&m, &[0.0, 0.0]).unwrap();
        assert!((s - 2.0f64).abs() < 1e-15);
    }

    #[test]
    fn plain_sigma_matches_jet_value() {
        for name in ["quartic-minkowski", "randers-generic", "funk3"] {
            let m = MetricSpec::builtin(name).unwrap();
            let x = vec![0.1; m.dim];
            let vol = VolumeDensity::busemann_hausdorff();
            let a: f64 = vol.sigma(&m, &x).unwrap();
            let b = vol.sigma_value(&m, &x).unwrap();
            assert!((a - b).abs() < 1e-14, "{name}: {a} vs {b}");
        }
    }

    #[test]
    fn higher_dimensions_rejected() {
        assert!(sphere_rule(4, 16, 0.0).is_err());
    }

    #[test]
    fn sphere_rule_integrates_area() {
        let area: f64 = sphere_rule(3, 32, 0.0).unwrap().iter().map(|(_, w)| w).sum();
        assert!((area - 4.0 * PI).abs() < 1e-12);
    }
}
