//! Executable consequences of the isotropy classifiers: the `𝖾` / S
//! equivalence, the almost-constant S scenarios under certified hypotheses,
//! the flag curvature fit, the Berwald trace equation and the volume gauge.
//!
//! Hypotheses are certified numerically first. A scenario whose hypotheses
//! are not certified is reported as not applicable, never as passing. All
//! claims are local to the single convex chart of the metric, where closed
//! 1-forms are exact.

use serde::Serialize;

use super::classify::{e_verdict, s_verdicts, scan_point, scan_stencil, ClassifierConfig, StencilScan, Verdict, VerdictKind};
use super::Status;
use crate::curvature::SCALAR_FLAG_TOL;
use crate::error::{Error, Result};
use crate::metricdef::{MetricSpec, VolumeDensity};

/// Agreement between `c` from `𝖾` and from the S fit.
pub const C_AGREEMENT_TOL: f64 = 1e-4;
/// Frame isotropy of `2F E` and the `ξ_α = −S_{,α}` cross-check.
pub const FRAME_TOL: f64 = 1e-5;
pub const SIGMA_BAR_ZERO_TOL: f64 = 1e-6;
pub const LANDSBERG_ZERO_TOL: f64 = 1e-8;
pub const TRACE_ZERO_TOL: f64 = 1e-6;
pub const BERWALD_TRACE_TOL: f64 = 1e-5;
pub const FLAG_GRADIENT_TOL: f64 = 1e-5;
/// `S` vanishing up to the gauge.
pub const VANISHING_S_TOL: f64 = 1e-8;

fn require_samples(xs: &[Vec<f64>], needed: usize) -> Result<()> {
    if xs.len() < needed {
        return Err(Error::Config(format!("need at least {needed} x-samples, got {}", xs.len())));
    }
    Ok(())
}

/// Stencil scans with direction details at every x.
pub fn scan_all(metric: &MetricSpec, vol: &VolumeDensity, xs: &[Vec<f64>], cfg: &ClassifierConfig) -> Result<Vec<StencilScan>> {
    xs.iter().map(|x| scan_stencil(metric, vol, x, cfg, true)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalencePoint {
    pub x: Vec<f64>,
    pub e_isotropic: bool,
    pub s_weakly: bool,
    pub c_from_e: f64,
    pub c_from_s: f64,
    /// Set where both classifiers hold.
    pub c_gap: Option<f64>,
    pub frame_e_residual: Option<f64>,
    pub xi_cross_check: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub metric: String,
    pub points: Vec<EquivalencePoint>,
    pub passed: bool,
}

/// `𝖾` isotropic at x ⟺ S weakly isotropic at x, with `c` and the frame
/// form of E matching where both hold.
pub fn isotropy_equivalence(metric: &MetricSpec, scans: &[StencilScan], cfg: &ClassifierConfig) -> EquivalenceReport {
    let points: Vec<EquivalencePoint> = scans
        .iter()
        .map(|st| {
            let p = &st.center;
            let e_iso = p.e_isotropic(cfg);
            let s_weak = p.s_weakly(cfg);
            let both = e_iso && s_weak;
            let c_gap = both.then(|| (p.e_mean - p.c_s).abs());
            let passed = e_iso == s_weak
                && (!both
                    || (c_gap.unwrap() <= C_AGREEMENT_TOL * (1.0 + p.e_mean.abs())
                        && p.frame_e_residual <= FRAME_TOL
                        && p.xi_cross <= FRAME_TOL));
            EquivalencePoint {
                x: p.x.clone(),
                e_isotropic: e_iso,
                s_weakly: s_weak,
                c_from_e: p.e_mean,
                c_from_s: p.c_s,
                c_gap,
                frame_e_residual: both.then_some(p.frame_e_residual),
                xi_cross_check: both.then_some(p.xi_cross),
                passed,
            }
        })
        .collect();
    EquivalenceReport {
        metric: metric.name.clone(),
        passed: points.iter().all(|p| p.passed),
        points,
    }
}

pub fn check_isotropy_equivalence(
    metric: &MetricSpec,
    vol: &VolumeDensity,
    xs: &[Vec<f64>],
    cfg: &ClassifierConfig,
) -> Result<EquivalenceReport> {
    require_samples(xs, 3)?;
    let scans = xs.iter().map(|x| scan_stencil(metric, vol, x, cfg, false)).collect::<Result<Vec<_>>>()?;
    Ok(isotropy_equivalence(metric, &scans, cfg))
}

/// Numerically certified hypotheses over a set of x-samples.
#[derive(Debug, Clone, Serialize)]
pub struct Hypotheses {
    /// `𝖾` isotropic everywhere with `dc = 0` on every stencil and the same
    /// `c` at every sample.
    pub e_constant: bool,
    pub e_value: f64,
    pub e_zero: bool,
    pub max_sigma_bar: f64,
    pub sigma_bar_zero: bool,
    pub max_j: f64,
    pub landsberg_zero: bool,
}

pub fn certify(scans: &[StencilScan], cfg: &ClassifierConfig) -> Hypotheses {
    let e_value = scans.first().map_or(0.0, |s| s.center.e_mean);
    let e_constant = !scans.is_empty()
        && scans.iter().all(|s| {
            s.center.e_isotropic(cfg)
                && s.e_locally_constant(cfg)
                && (s.center.e_mean - e_value).abs() <= cfg.closed_tol * (1.0 + e_value.abs())
        });
    let details = || scans.iter().flat_map(|s| s.center.details());
    let max_sigma_bar = details().map(|d| d.max_sigma_bar).fold(0.0, f64::max);
    let max_j = details().map(|d| d.max_j).fold(0.0, f64::max);
    let has_details = details().next().is_some();
    Hypotheses {
        e_constant,
        e_value,
        e_zero: e_constant && e_value.abs() <= SIGMA_BAR_ZERO_TOL,
        max_sigma_bar,
        sigma_bar_zero: has_details && max_sigma_bar <= SIGMA_BAR_ZERO_TOL,
        max_j,
        landsberg_zero: has_details && max_j <= LANDSBERG_ZERO_TOL,
    }
}

/// Result of one scenario. A structural failure (a required verdict that
/// does not hold) has an infinite residual.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub status: Status,
    pub residual: f64,
    pub tol: f64,
    pub scale: f64,
    pub note: String,
}

impl Outcome {
    fn not_applicable(note: &str) -> Self {
        Self {
            status: Status::NotApplicable,
            residual: 0.0,
            tol: 0.0,
            scale: 0.0,
            note: note.into(),
        }
    }

    fn measured(residual: f64, tol: f64, scale: f64, note: String) -> Self {
        Self {
            status: Status::from_pass(residual <= tol * (1.0 + scale)),
            residual,
            tol,
            scale,
            note,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub metric: String,
    pub hypotheses: Hypotheses,
    /// Constant `𝖾` and `Σ̄ = 0` give almost isotropic S with `c = 𝖾`.
    pub almost_constant_s: Outcome,
    /// `J = 0` and `𝖾 = 0` give S = 0 up to the volume gauge.
    pub vanishing_s: Outcome,
    /// Potential `f(x_k) − f(x_0)` of the fitted `ξ`, by line integrals.
    pub potential: Vec<(Vec<f64>, f64)>,
    /// `max |𝐒|` over all scanned directions.
    pub max_s: f64,
    /// Under `J = 0`: constant `𝖾` ⟺ almost constant S ⟺ (`tr R = 0` and
    /// frame-isotropic E).
    pub landsberg_equivalence: Outcome,
    pub chart: &'static str,
}

pub const CHART_NOTE: &str = "single convex chart: closed 1-forms are exact";

pub fn almost_constant_scenarios(
    metric: &MetricSpec,
    vol: &VolumeDensity,
    scans: &[StencilScan],
    cfg: &ClassifierConfig,
) -> Result<ScenarioReport> {
    let h = certify(scans, cfg);
    let verdicts: Vec<_> = scans.iter().map(|s| s_verdicts(metric, s, cfg)).collect();
    let all_almost = verdicts.iter().all(|v| v.almost.decision);
    let c_gap = scans.iter().map(|s| (s.center.c_s - h.e_value).abs()).fold(0.0, f64::max);

    let almost_constant_s = if h.e_constant && h.sigma_bar_zero {
        Outcome::measured(
            if all_almost { c_gap } else { f64::INFINITY },
            C_AGREEMENT_TOL,
            h.e_value.abs(),
            format!("almost isotropic at every sample: {all_almost}"),
        )
    } else {
        Outcome::not_applicable("hypotheses not certified: constant e and vanishing Sigma_bar")
    };

    let max_s = scans
        .iter()
        .flat_map(|s| s.center.samples.iter().map(|d| d.s_big.abs()))
        .fold(0.0, f64::max);
    let mut potential = Vec::new();
    let vanishing_s = if h.landsberg_zero && h.e_zero {
        // 𝐒 − ξ(y) is what remains after removing the gauge.
        let gauge_free = scans
            .iter()
            .flat_map(|s| {
                s.center
                    .samples
                    .iter()
                    .map(move |d| (d.s_big - d.y.iter().zip(&s.center.xi).map(|(a, b)| a * b).sum::<f64>()).abs())
            })
            .fold(0.0, f64::max);
        if let Some(first) = scans.first() {
            let x0 = &first.center.x;
            for s in scans {
                potential.push((s.center.x.clone(), line_integral(metric, vol, x0, &s.center.x, cfg)?));
            }
        }
        Outcome::measured(
            if all_almost { gauge_free } else { f64::INFINITY },
            VANISHING_S_TOL,
            0.0,
            "fitted xi is closed, hence exact on the chart".into(),
        )
    } else {
        Outcome::not_applicable("hypotheses not certified: vanishing J and e")
    };

    let landsberg_equivalence = if h.landsberg_zero {
        let c0 = scans.first().map_or(0.0, |s| s.center.c_s);
        let a = h.e_constant;
        let b = all_almost
            && scans
                .iter()
                .all(|s| s.s_c_locally_constant(cfg) && (s.center.c_s - c0).abs() <= cfg.closed_tol * (1.0 + c0.abs()));
        let max_tr = scans
            .iter()
            .flat_map(|s| s.center.details())
            .map(|d| d.max_tr_r)
            .fold(0.0, f64::max);
        let frame_e = scans.iter().map(|s| s.center.frame_e_residual).fold(0.0, f64::max);
        let c = max_tr <= TRACE_ZERO_TOL && frame_e <= FRAME_TOL && scans.iter().all(|s| s.center.e_isotropic(cfg));
        Outcome::measured(
            if a == b && b == c { 0.0 } else { f64::INFINITY },
            0.0,
            0.0,
            format!("constant e: {a}, almost constant S: {b}, trace {max_tr:e} and frame-E {frame_e:e}: {c}"),
        )
    } else {
        Outcome::not_applicable("hypothesis not certified: vanishing J")
    };

    Ok(ScenarioReport {
        metric: metric.name.clone(),
        hypotheses: h,
        almost_constant_s,
        vanishing_s,
        potential,
        max_s,
        landsberg_equivalence,
        chart: CHART_NOTE,
    })
}

pub fn check_almost_constant_scenarios(
    metric: &MetricSpec,
    vol: &VolumeDensity,
    xs: &[Vec<f64>],
    cfg: &ClassifierConfig,
) -> Result<ScenarioReport> {
    require_samples(xs, 1)?;
    almost_constant_scenarios(metric, vol, &scan_all(metric, vol, xs, cfg)?, cfg)
}

/// `∫ ξ` along the segment from `a` to `b` (3-point Gauss–Legendre).
fn line_integral(metric: &MetricSpec, vol: &VolumeDensity, a: &[f64], b: &[f64], cfg: &ClassifierConfig) -> Result<f64> {
    let r = (0.6f64).sqrt() / 2.0;
    let nodes = [(0.5 - r, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + r, 5.0 / 18.0)];
    let d: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
    if d.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (t, w) in nodes {
        let x: Vec<f64> = a.iter().zip(&d).map(|(p, v)| p + t * v).collect();
        let xi = scan_point(metric, vol, &x, cfg, false)?.xi;
        acc += w * xi.iter().zip(&d).map(|(p, q)| p * q).sum::<f64>();
    }
    Ok(acc)
}

#[derive(Debug, Clone, Serialize)]
pub struct FlagFitPoint {
    pub x: Vec<f64>,
    pub status: Status,
    /// `c` from the `𝖾` classifier and its gradient.
    pub c: f64,
    pub dc: Vec<f64>,
    pub sigma: f64,
    pub fit_residual: f64,
    pub fit_small: bool,
    pub s_almost: bool,
    /// `max |(tr R)_{αn} + J_{α|n} + (n+1)/3 K_{,α}|`.
    pub flag_gradient_residual: Option<f64>,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlagFitReport {
    pub metric: String,
    pub points: Vec<FlagFitPoint>,
    pub status: Status,
}

/// Fits `K = 3/(n²−1) dc(y)/F + σ(x)` where the flag curvature is scalar and
/// S weakly isotropic. The fit must be tight exactly when S is almost
/// isotropic, and the flag-gradient identity must hold.
pub fn flag_curvature_fit(metric: &MetricSpec, scans: &[StencilScan], cfg: &ClassifierConfig) -> FlagFitReport {
    let n = metric.dim as f64;
    let points: Vec<FlagFitPoint> = scans
        .iter()
        .map(|st| {
            let p = &st.center;
            let sv = s_verdicts(metric, st, cfg);
            let details: Vec<_> = p.samples.iter().filter_map(|d| d.detail.as_ref().map(|dt| (d, dt))).collect();
            let flag_spread = details.iter().map(|(_, dt)| dt.flags.spread / (1.0 + dt.flags.mean.abs())).fold(0.0, f64::max);
            let scalar = !details.is_empty() && flag_spread <= SCALAR_FLAG_TOL;
            let weakly = sv.weakly.decision;
            let dc = st.dc_e.clone();
            let shifted: Vec<f64> = details
                .iter()
                .map(|(d, dt)| dt.flags.mean - 3.0 / (n * n - 1.0) * d.y.iter().zip(&dc).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let sigma = if shifted.is_empty() { 0.0 } else { shifted.iter().sum::<f64>() / shifted.len() as f64 };
            let fit_residual = shifted.iter().map(|v| (v - sigma).abs()).fold(0.0, f64::max);
            let fit_small = fit_residual <= cfg.threshold * (1.0 + sigma.abs());
            let flag_gradient_residual = details
                .iter()
                .map(|(_, dt)| dt.flag_gradient_residual)
                .try_fold(0.0f64, |m, r| r.map(|r| m.max(r)));
            let status = if !(scalar && weakly) {
                Status::NotApplicable
            } else if fit_small == sv.almost.decision && flag_gradient_residual.is_some_and(|r| r <= FLAG_GRADIENT_TOL) {
                Status::Pass
            } else {
                Status::Fail
            };
            let verdicts = vec![
                Verdict {
                    kind: VerdictKind::ScalarFlag,
                    metric: metric.name.clone(),
                    x: p.x.clone(),
                    fitted: super::classify::Fitted {
                        residual: flag_spread,
                        ..Default::default()
                    },
                    threshold: SCALAR_FLAG_TOL,
                    decision: scalar,
                },
                Verdict {
                    kind: VerdictKind::KWeaklyIsotropic,
                    metric: metric.name.clone(),
                    x: p.x.clone(),
                    fitted: super::classify::Fitted {
                        c: Some(p.e_mean),
                        sigma: Some(sigma),
                        residual: fit_residual,
                        ..Default::default()
                    },
                    threshold: cfg.threshold,
                    decision: scalar && fit_small,
                },
            ];
            FlagFitPoint {
                x: p.x.clone(),
                status,
                c: p.e_mean,
                dc,
                sigma,
                fit_residual,
                fit_small,
                s_almost: sv.almost.decision,
                flag_gradient_residual,
                verdicts,
            }
        })
        .collect();
    FlagFitReport {
        metric: metric.name.clone(),
        status: Status::combine(points.iter().map(|p| p.status)),
        points,
    }
}

pub fn check_flag_curvature_fit(
    metric: &MetricSpec,
    vol: &VolumeDensity,
    xs: &[Vec<f64>],
    cfg: &ClassifierConfig,
) -> Result<FlagFitReport> {
    require_samples(xs, 1)?;
    Ok(flag_curvature_fit(metric, &scan_all(metric, vol, xs, cfg)?, cfg))
}

/// `tr R̃ = 0` on the branch where S is isotropic and `𝖾` is locally
/// constant. Returns `None` when no sample is on that branch.
pub fn berwald_trace(scans: &[StencilScan], cfg: &ClassifierConfig) -> Option<f64> {
    scans
        .iter()
        .filter(|st| {
            let p = &st.center;
            p.s_weakly(cfg) && st.xi_closed(cfg) && p.xi_norm() <= cfg.threshold * (1.0 + p.s_scale) && st.e_locally_constant(cfg)
        })
        .flat_map(|st| st.center.details().map(|d| d.max_tr_r_berwald))
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
}

/// Every verdict the scans support: `𝖾`, the three S levels, and the flag
/// curvature verdicts.
pub fn all_verdicts(metric: &MetricSpec, scans: &[StencilScan], cfg: &ClassifierConfig) -> Vec<Verdict> {
    let fit = flag_curvature_fit(metric, scans, cfg);
    scans
        .iter()
        .zip(fit.points)
        .flat_map(|(st, fp)| {
            let mut v = vec![e_verdict(metric, &st.center, cfg)];
            v.extend(s_verdicts(metric, st, cfg).into_vec());
            v.extend(fp.verdicts);
            v
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GaugeReport {
    pub x: Vec<f64>,
    pub xi_base: Vec<f64>,
    pub xi_gauged: Vec<f64>,
    /// Difference gradient of `ln(σ_base / σ_gauged)`.
    pub df: Vec<f64>,
    /// `max |ξ_gauged − ξ_base − df|`.
    pub residual: f64,
    pub c_shift: f64,
}

/// Changing the volume density from `base` to `gauged = e^{−f} base` must
/// shift the fitted `ξ` by `df` and leave `c` alone.
pub fn check_gauge(
    metric: &MetricSpec,
    base: &VolumeDensity,
    gauged: &VolumeDensity,
    x: &[f64],
    cfg: &ClassifierConfig,
) -> Result<GaugeReport> {
    let a = scan_point(metric, base, x, cfg, false)?;
    let b = scan_point(metric, gauged, x, cfg, false)?;
    let h = cfg.stencil_step;
    let f = |xs: &[f64]| -> Result<f64> {
        Ok((base.sigma_value(metric, xs)? / gauged.sigma_value(metric, xs)?).ln())
    };
    let n = metric.dim;
    let mut df = vec![0.0; n];
    for (k, d) in df.iter_mut().enumerate() {
        for (s, w) in [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)] {
            let mut xs = x.to_vec();
            xs[k] += s * h;
            *d += w * f(&xs)? / (12.0 * h);
        }
    }
    let residual = (0..n).map(|k| (b.xi[k] - a.xi[k] - df[k]).abs()).fold(0.0, f64::max);
    Ok(GaugeReport {
        x: x.to_vec(),
        c_shift: (b.c_s - a.c_s).abs(),
        xi_base: a.xi,
        xi_gauged: b.xi,
        df,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_gauge_shift_is_df() {
        let m = MetricSpec::builtin("sphere").unwrap();
        let base = VolumeDensity::riemannian();
        let gauged = VolumeDensity::user("4/(1+x1^2+x2^2)^2*exp(-x1)").unwrap();
        let r = check_gauge(&m, &base, &gauged, &[0.2, -0.3], &ClassifierConfig::default()).unwrap();
        assert!(r.residual < 1e-8, "{r:?}");
        assert!((r.df[0] - 1.0).abs() < 1e-9 && r.df[1].abs() < 1e-9);
        assert!(r.c_shift < 1e-10);
    }

    #[test]
    fn too_few_samples_is_a_config_error() {
        let m = MetricSpec::builtin("euclidean").unwrap();
        let vol = VolumeDensity::riemannian();
        let xs = vec![vec![0.0, 0.0]];
        assert!(matches!(
            check_isotropy_equivalence(&m, &vol, &xs, &ClassifierConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn berwald_randers_scenarios_hold() {
        let m = MetricSpec::builtin("randers-berwald").unwrap();
        let vol = VolumeDensity::busemann_hausdorff();
        let xs = vec![vec![0.1, 0.2], vec![-0.3, 0.4]];
        let r = check_almost_constant_scenarios(&m, &vol, &xs, &ClassifierConfig::default()).unwrap();
        assert!(r.hypotheses.landsberg_zero && r.hypotheses.e_zero, "{:?}", r.hypotheses);
        assert_eq!(r.almost_constant_s.status, Status::Pass, "{r:?}");
        assert_eq!(r.vanishing_s.status, Status::Pass, "{r:?}");
        assert_eq!(r.landsberg_equivalence.status, Status::Pass, "{r:?}");
        assert!(r.max_s < 1e-8);
    }

    #[test]
    fn generic_randers_scenarios_do_not_apply() {
        let m = MetricSpec::builtin("randers-generic").unwrap();
        let vol = VolumeDensity::busemann_hausdorff();
        let xs = vec![vec![0.3, 0.4]];
        let r = check_almost_constant_scenarios(&m, &vol, &xs, &ClassifierConfig::default()).unwrap();
        assert_eq!(r.vanishing_s.status, Status::NotApplicable);
        assert_eq!(r.landsberg_equivalence.status, Status::NotApplicable);
    }
}
