//! Isotropy classifiers for the Berwald scalar curvature `𝖾` and the
//! S-curvature.
//!
//! Everything here is measured on a finite set of quasi-uniform directions
//! at each `x`, plus a 5-point stencil per axis for the x-derivatives of the
//! fitted fields. All verdicts are chart-local.

use serde::Serialize;

use crate::curvature::{flag_spread, Conventions, FlagSpread};
use crate::error::{Error, Result};
use crate::fundamentals::ScalarTag;
use crate::jets::DEFAULT_ORDER;
use crate::linalg::lstsq;
use crate::metricdef::{MetricSpec, VolumeDensity};
use crate::sampling::directions;
use crate::tower::{values, values2, Tower};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifierConfig {
    /// Directions sampled on the unit sphere at each x.
    pub directions: usize,
    /// Spread and fit threshold, relative to `1 + scale`.
    pub threshold: f64,
    /// Step of the 5-point x-stencil.
    pub stencil_step: f64,
    /// Tolerance on `dξ` and `dc`, relative to `1 + ‖ξ‖` (resp. `1 + |c|`).
    pub closed_tol: f64,
    /// Flags per direction when testing for scalar flag curvature.
    pub flags: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            directions: 24,
            threshold: 1e-5,
            stencil_step: 1e-3,
            closed_tol: 1e-4,
            flags: 64,
        }
    }
}

impl ClassifierConfig {
    pub fn check(&self, n: usize) -> Result<()> {
        let needed = 2 * (n - 1) + 2;
        if self.directions < needed {
            return Err(Error::Config(format!(
                "isotropy classification in dimension {n} needs at least {needed} directions, got {}",
                self.directions
            )));
        }
        Ok(())
    }
}

/// Curvature data along one direction, beyond what the fits need.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionDetail {
    pub flags: FlagSpread,
    /// `max_α |(tr R)_{αn} + J_{α|n} + (n+1)/3 K_{,α}|`, when K is scalar here.
    pub flag_gradient_residual: Option<f64>,
    pub max_j: f64,
    pub max_sigma_bar: f64,
    pub max_tr_r: f64,
    pub max_tr_r_berwald: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionSample {
    /// Direction on the indicatrix, `F(x, y) = 1`.
    pub y: Vec<f64>,
    pub e: f64,
    pub s_big: f64,
    /// `S_{,α}` in the adapted frame.
    pub s_comma: Vec<f64>,
    /// `ξ(b_α)` is compared against `−S_{,α}`; these are the `b_α`.
    #[serde(skip)]
    pub basis: Vec<Vec<f64>>,
    /// `2F E(b_α, b_β)`.
    pub frame_e: Vec<Vec<f64>>,
    pub detail: Option<DirectionDetail>,
}

/// Everything the classifiers measure at one x.
#[derive(Debug, Clone, Serialize)]
pub struct PointScan {
    pub x: Vec<f64>,
    pub samples: Vec<DirectionSample>,
    pub e_mean: f64,
    pub e_spread: f64,
    /// Fit of `𝐒 = c F/(n−1) + ξ_i y^i`.
    pub c_s: f64,
    pub xi: Vec<f64>,
    pub s_fit_residual: f64,
    pub s_scale: f64,
    /// `max_α |ξ(b_α) + S_{,α}|` over directions.
    pub xi_cross: f64,
    /// `max |2F E(b_α, b_β) − 𝖾/(n−1) δ_αβ|` over directions.
    pub frame_e_residual: f64,
}

impl PointScan {
    pub fn xi_norm(&self) -> f64 {
        self.xi.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn e_isotropic(&self, cfg: &ClassifierConfig) -> bool {
        self.e_spread <= cfg.threshold * (1.0 + self.e_mean.abs())
    }

    pub fn s_weakly(&self, cfg: &ClassifierConfig) -> bool {
        self.s_fit_residual <= cfg.threshold * (1.0 + self.s_scale)
    }

    pub fn details(&self) -> impl Iterator<Item = &DirectionDetail> {
        self.samples.iter().filter_map(|s| s.detail.as_ref())
    }
}

/// Scans `cfg.directions` directions at `x`. With `detail`, also the flag
/// curvature, mean Landsberg curvature and hh-traces along each direction.
pub fn scan_point(
    metric: &MetricSpec,
    vol: &VolumeDensity,
    x: &[f64],
    cfg: &ClassifierConfig,
    detail: bool,
) -> Result<PointScan> {
    let n = metric.dim;
    cfg.check(n)?;
    metric.check_point(x)?;
    let conv = Conventions::frozen()?;
    let density = vol.density(metric, x, DEFAULT_ORDER)?;
    let mut samples = Vec::with_capacity(cfg.directions);
    for d in directions(n, cfg.directions)? {
        let f = metric.eval_f(x, &d)?;
        let y: Vec<f64> = d.iter().map(|v| v / f).collect();
        let t = Tower::with_density(metric, vol, x, &y, DEFAULT_ORDER, Some(density.clone()))?;
        let frame = t.frame();
        let s_comma = (0..n - 1)
            .map(|a| t.vertical_derivative(&frame, ScalarTag::S, a, conv.s))
            .collect::<Result<Vec<_>>>()?;
        let e = values2(t.e_tensor()?);
        let fv = t.f().value();
        let frame_e = frame
            .basis
            .iter()
            .map(|u| {
                frame
                    .basis
                    .iter()
                    .map(|w| 2.0 * fv * (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| u[i] * e[i][j] * w[j]).sum::<f64>())
                    .collect()
            })
            .collect();
        let detail = if detail { Some(direction_detail(&t, conv, cfg.flags)?) } else { None };
        samples.push(DirectionSample {
            e: t.e_scalar()?.value(),
            s_big: t.s_big()?.value(),
            s_comma,
            basis: frame.basis.clone(),
            frame_e,
            detail,
            y,
        });
    }

    let es: Vec<f64> = samples.iter().map(|s| s.e).collect();
    let e_mean = es.iter().sum::<f64>() / es.len() as f64;
    let e_spread = es.iter().copied().fold(f64::NEG_INFINITY, f64::max) - es.iter().copied().fold(f64::INFINITY, f64::min);

    // Rows [F/(n−1), y] with F = 1 on the indicatrix.
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| std::iter::once(1.0 / (n as f64 - 1.0)).chain(s.y.iter().copied()).collect())
        .collect();
    let rhs: Vec<f64> = samples.iter().map(|s| s.s_big).collect();
    let (sol, resid) = lstsq(&rows, &rhs)?;
    let s_fit_residual = resid.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let s_scale = rhs.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let xi = sol[1..].to_vec();

    let mut xi_cross = 0.0f64;
    let mut frame_e_residual = 0.0f64;
    for s in &samples {
        for (a, u) in s.basis.iter().enumerate() {
            let xi_a: f64 = u.iter().zip(&xi).map(|(p, q)| p * q).sum();
            xi_cross = xi_cross.max((xi_a + s.s_comma[a]).abs());
            for b in 0..n - 1 {
                let target = if a == b { e_mean / (n as f64 - 1.0) } else { 0.0 };
                frame_e_residual = frame_e_residual.max((s.frame_e[a][b] - target).abs());
            }
        }
    }

    Ok(PointScan {
        x: x.to_vec(),
        samples,
        e_mean,
        e_spread,
        c_s: sol[0],
        xi,
        s_fit_residual,
        s_scale,
        xi_cross,
        frame_e_residual,
    })
}

fn direction_detail(t: &Tower<'_, f64>, conv: Conventions, flags: usize) -> Result<DirectionDetail> {
    let n = t.n;
    let max_abs = |m: &[Vec<f64>]| m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let hh = t.hh(conv)?;
    let terms = t.frame_terms(&t.frame(), conv)?;
    let flag_gradient_residual = terms.k_comma.as_ref().map(|kc| {
        (0..n - 1)
            .map(|a| (terms.tr_r[a] + terms.j_bar_n[a] + (n as f64 + 1.0) / 3.0 * kc[a]).abs())
            .fold(0.0f64, f64::max)
    });
    Ok(DirectionDetail {
        flags: flag_spread(t, flags)?,
        flag_gradient_residual,
        max_j: values(t.mean_landsberg()?).iter().fold(0.0f64, |a, v| a.max(v.abs())),
        max_sigma_bar: max_abs(&hh.sigma_bar),
        max_tr_r: max_abs(&hh.tr_r),
        max_tr_r_berwald: max_abs(&hh.tr_r_berwald),
    })
}

/// A scan at `x` together with 5-point stencils along every axis.
#[derive(Debug, Clone, Serialize)]
pub struct StencilScan {
    pub center: PointScan,
    /// `∂c/∂x^a` with `c` from the `𝖾` classifier.
    pub dc_e: Vec<f64>,
    /// `∂c/∂x^a` with `c` from the S fit.
    pub dc_s: Vec<f64>,
    /// `∂ξ_b/∂x^a`.
    pub dxi: Vec<Vec<f64>>,
    /// `max_{a<b} |∂_a ξ_b − ∂_b ξ_a|`.
    pub curl: f64,
    /// Every stencil point is weakly isotropic.
    pub stencil_weakly: bool,
    /// Every stencil point is `𝖾`-isotropic.
    pub stencil_e_isotropic: bool,
}

impl StencilScan {
    pub fn xi_closed(&self, cfg: &ClassifierConfig) -> bool {
        self.curl <= cfg.closed_tol * (1.0 + self.center.xi_norm())
    }

    pub fn e_locally_constant(&self, cfg: &ClassifierConfig) -> bool {
        let c = self.center.e_mean.abs();
        self.stencil_e_isotropic && self.dc_e.iter().all(|d| d.abs() <= cfg.closed_tol * (1.0 + c))
    }

    pub fn s_c_locally_constant(&self, cfg: &ClassifierConfig) -> bool {
        let c = self.center.c_s.abs();
        self.dc_s.iter().all(|d| d.abs() <= cfg.closed_tol * (1.0 + c))
    }
}

pub fn scan_stencil(
    metric: &MetricSpec,
    vol: &VolumeDensity,
    x: &[f64],
    cfg: &ClassifierConfig,
    detail: bool,
) -> Result<StencilScan> {
    let n = metric.dim;
    let center = scan_point(metric, vol, x, cfg, detail)?;
    let h = cfg.stencil_step;
    let mut dc_e = vec![0.0; n];
    let mut dc_s = vec![0.0; n];
    let mut dxi = vec![vec![0.0; n]; n];
    let mut stencil_weakly = center.s_weakly(cfg);
    let mut stencil_e_isotropic = center.e_isotropic(cfg);
    // f'(x) ≈ (f(x−2h) − 8f(x−h) + 8f(x+h) − f(x+2h)) / 12h
    let weights = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
    for a in 0..n {
        for (k, w) in weights {
            let mut xs = x.to_vec();
            xs[a] += k * h;
            let scan = scan_point(metric, vol, &xs, cfg, false)?;
            stencil_weakly &= scan.s_weakly(cfg);
            stencil_e_isotropic &= scan.e_isotropic(cfg);
            let scale = w / (12.0 * h);
            dc_e[a] += scale * scan.e_mean;
            dc_s[a] += scale * scan.c_s;
            for b in 0..n {
                dxi[a][b] += scale * scan.xi[b];
            }
        }
    }
    let mut curl = 0.0f64;
    for a in 0..n {
        for b in a + 1..n {
            curl = curl.max((dxi[a][b] - dxi[b][a]).abs());
        }
    }
    Ok(StencilScan {
        center,
        dc_e,
        dc_s,
        dxi,
        curl,
        stencil_weakly,
        stencil_e_isotropic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VerdictKind {
    #[serde(rename = "e_isotropic")]
    EIsotropic,
    #[serde(rename = "S_weakly_isotropic")]
    SWeaklyIsotropic,
    #[serde(rename = "S_almost_isotropic")]
    SAlmostIsotropic,
    #[serde(rename = "S_isotropic")]
    SIsotropic,
    #[serde(rename = "scalar_flag")]
    ScalarFlag,
    #[serde(rename = "K_weakly_isotropic")]
    KWeaklyIsotropic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Fitted {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    /// Spread or fit residual behind the decision.
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curl_xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_cross_check: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub metric: String,
    pub x: Vec<f64>,
    pub fitted: Fitted,
    pub threshold: f64,
    pub decision: bool,
}

pub fn e_verdict(metric: &MetricSpec, scan: &PointScan, cfg: &ClassifierConfig) -> Verdict {
    Verdict {
        kind: VerdictKind::EIsotropic,
        metric: metric.name.clone(),
        x: scan.x.clone(),
        fitted: Fitted {
            c: Some(scan.e_mean),
            residual: scan.e_spread,
            ..Fitted::default()
        },
        threshold: cfg.threshold,
        decision: scan.e_isotropic(cfg),
    }
}

/// The three nested S verdicts at one x.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SVerdicts {
    pub weakly: Verdict,
    pub almost: Verdict,
    pub isotropic: Verdict,
}

impl SVerdicts {
    pub fn monotone(&self) -> bool {
        (!self.isotropic.decision || self.almost.decision) && (!self.almost.decision || self.weakly.decision)
    }

    pub fn into_vec(self) -> Vec<Verdict> {
        vec![self.weakly, self.almost, self.isotropic]
    }
}

pub fn s_verdicts(metric: &MetricSpec, st: &StencilScan, cfg: &ClassifierConfig) -> SVerdicts {
    let p = &st.center;
    let weakly = p.s_weakly(cfg);
    let almost = weakly && st.stencil_weakly && st.xi_closed(cfg);
    let isotropic = almost && p.xi_norm() <= cfg.threshold * (1.0 + p.s_scale);
    let fitted = Fitted {
        c: Some(p.c_s),
        xi: Some(p.xi.clone()),
        residual: p.s_fit_residual,
        curl_xi: Some(st.curl),
        xi_cross_check: Some(p.xi_cross),
        ..Fitted::default()
    };
    let make = |kind, decision, residual| Verdict {
        kind,
        metric: metric.name.clone(),
        x: p.x.clone(),
        fitted: Fitted {
            residual,
            ..fitted.clone()
        },
        threshold: cfg.threshold,
        decision,
    };
    SVerdicts {
        weakly: make(VerdictKind::SWeaklyIsotropic, weakly, p.s_fit_residual),
        almost: make(VerdictKind::SAlmostIsotropic, almost, st.curl),
        isotropic: make(VerdictKind::SIsotropic, isotropic, p.xi_norm()),
    }
}

/// Is `𝖾` constant over the directions at `x`? Reports `c(x)` as the mean.
pub fn classify_e_isotropy(metric: &MetricSpec, vol: &VolumeDensity, x: &[f64], num_dirs: usize) -> Result<Verdict> {
    let cfg = ClassifierConfig {
        directions: num_dirs,
        ..ClassifierConfig::default()
    };
    Ok(e_verdict(metric, &scan_point(metric, vol, x, &cfg, false)?, &cfg))
}

/// Weakly / almost / isotropic S-curvature verdicts at `x`.
pub fn classify_s(metric: &MetricSpec, vol: &VolumeDensity, x: &[f64], num_dirs: usize) -> Result<SVerdicts> {
    let cfg = ClassifierConfig {
        directions: num_dirs,
        ..ClassifierConfig::default()
    };
    Ok(s_verdicts(metric, &scan_stencil(metric, vol, x, &cfg, false)?, &cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_directions_is_a_config_error() {
        let m = MetricSpec::builtin("funk3").unwrap();
        let vol = VolumeDensity::busemann_hausdorff();
        let err = classify_e_isotropy(&m, &vol, &[0.1, 0.0, 0.0], 5).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn euclidean_is_isotropic_with_zero_constant() {
        let m = MetricSpec::builtin("euclidean").unwrap();
        let vol = VolumeDensity::riemannian();
        let e = classify_e_isotropy(&m, &vol, &[0.2, -0.1], 12).unwrap();
        assert!(e.decision && e.fitted.c.unwrap().abs() < 1e-14);
        let s = classify_s(&m, &vol, &[0.2, -0.1], 12).unwrap();
        assert!(s.isotropic.decision && s.monotone());
    }

    #[test]
    fn funk2_constants() {
        let m = MetricSpec::builtin("funk2").unwrap();
        let vol = VolumeDensity::busemann_hausdorff();
        let cfg = ClassifierConfig::default();
        let st = scan_stencil(&m, &vol, &[0.3, 0.0], &cfg, false).unwrap();
        let v = s_verdicts(&m, &st, &cfg);
        assert!(v.isotropic.decision, "{v:?}");
        assert!((st.center.e_mean - 1.5).abs() < 1e-8);
        assert!((st.center.c_s - 1.5).abs() < 1e-8);
        assert!(st.center.xi_cross < 1e-8);
        assert!(st.center.frame_e_residual < 1e-8);
    }

    #[test]
    fn generic_randers_is_not_isotropic() {
        let m = MetricSpec::builtin("randers-generic").unwrap();
        let vol = VolumeDensity::busemann_hausdorff();
        let cfg = ClassifierConfig::default();
        let p = scan_point(&m, &vol, &[0.3, 0.4], &cfg, false).unwrap();
        assert!(!p.e_isotropic(&cfg));
        assert!(!p.s_weakly(&cfg));
    }
}
