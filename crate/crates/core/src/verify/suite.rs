//! The identity suite: seeded samples per metric, one residual per identity
//! and sample, classifier scenarios at a few x, aggregated into a report.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::classify::{ClassifierConfig, StencilScan, Verdict};
use super::oracle::classical_sectional_curvature;
use super::scenarios::{
    almost_constant_scenarios, berwald_trace, flag_curvature_fit, isotropy_equivalence, scan_all, EquivalenceReport, FlagFitReport,
    Outcome, ScenarioReport, BERWALD_TRACE_TOL, C_AGREEMENT_TOL, FLAG_GRADIENT_TOL, FRAME_TOL,
};
use super::{within, Status};
use crate::curvature::{contract_y, flag_spread, Conventions};
use crate::error::{Error, Result};
use crate::fundamentals::PointDir;
use crate::jets::DEFAULT_ORDER;
use crate::metricdef::{check_strong_convexity, Family, MetricSpec, VolumeDensity, VolumeKind};
use crate::sampling::Sampler;
use crate::tower::{values, values2, values3, values4, Tower};

/// Identity ids with their default tolerances, in report order.
pub const IDENTITIES: &[(&str, f64)] = &[
    ("convexity", 0.0),
    ("homogeneity.fundamental_tensor", 1e-8),
    ("homogeneity.cartan", 1e-8),
    ("homogeneity.berwald_curvature", 1e-8),
    ("homogeneity.e_curvature", 1e-8),
    ("homogeneity.landsberg", 1e-8),
    ("homogeneity.s_scaling", 1e-8),
    ("dtau_vertical", 1e-9),
    ("hessian_s", 1e-7),
    ("s_routes", 1e-6),
    ("spray_curvature.chern", 1e-8),
    ("spray_curvature.berwald", 1e-8),
    ("frame.s_tau_landsberg", 1e-7),
    ("frame.s_transport", 1e-6),
    ("frame.s_transport_berwald", 1e-6),
    ("frame.k_gradient", 1e-5),
    ("riemannian.cartan", 1e-9),
    ("riemannian.landsberg", 1e-9),
    ("riemannian.mean_landsberg", 1e-9),
    ("riemannian.e_curvature", 1e-9),
    ("riemannian.s_curvature", 1e-8),
    ("riemannian.sigma_bar", 1e-6),
    ("riemannian.sectional_curvature", 1e-8),
    ("funk.s_constant", 1e-4),
    ("funk.e_constant", 1e-5),
    ("funk.flag_curvature", 1e-6),
    ("isotropy.e_vs_s", C_AGREEMENT_TOL),
    ("isotropy.frame_e", FRAME_TOL),
    ("isotropy.xi_cross_check", FRAME_TOL),
    ("isotropy.verdict_lattice", 0.0),
    ("berwald_trace", BERWALD_TRACE_TOL),
    ("scenario.almost_constant_s", C_AGREEMENT_TOL),
    ("scenario.vanishing_s", 1e-8),
    ("scenario.landsberg_equivalence", 0.0),
    ("scenario.flag_curvature_fit", FLAG_GRADIENT_TOL),
];

pub fn default_tol(id: &str) -> Option<f64> {
    IDENTITIES.iter().find(|(i, _)| *i == id).map(|(_, t)| *t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteMetric {
    pub metric: MetricSpec,
    pub volume: VolumeDensity,
}

impl SuiteMetric {
    /// Riemannian volume for Riemannian metrics, Busemann–Hausdorff otherwise.
    pub fn with_default_volume(metric: MetricSpec) -> Self {
        let volume = if metric.is_riemannian() {
            VolumeDensity::riemannian()
        } else {
            VolumeDensity::busemann_hausdorff()
        };
        Self { metric, volume }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub metrics: Vec<SuiteMetric>,
    /// `(x, y)` samples per metric.
    pub samples: usize,
    /// How many of the sampled x also get the classifier scenarios.
    pub classifier_points: usize,
    pub classifier: ClassifierConfig,
    pub seed: u64,
    /// Replaces every identity tolerance.
    pub tol_override: Option<f64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            metrics: MetricSpec::zoo().into_iter().map(SuiteMetric::with_default_volume).collect(),
            samples: 200,
            classifier_points: 3,
            classifier: ClassifierConfig::default(),
            seed: 42,
            tol_override: None,
        }
    }
}

impl SuiteConfig {
    pub fn with_metrics(metrics: Vec<SuiteMetric>) -> Self {
        Self {
            metrics,
            ..Self::default()
        }
    }

    fn tol(&self, id: &str) -> f64 {
        self.tol_override.unwrap_or_else(|| default_tol(id).unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityResult {
    pub identity_id: String,
    pub metric: String,
    pub sample_index: usize,
    pub sample: PointDir<f64>,
    pub residual: f64,
    pub scale: f64,
    pub tol: f64,
    pub passed: bool,
    pub convention_constants: Conventions,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentitySummary {
    pub id: String,
    pub metric: String,
    /// Largest `residual / (1 + scale)`.
    pub max_residual: f64,
    pub tol: f64,
    /// `None` when no sample was applicable.
    pub passed: Option<bool>,
    pub status: Status,
    pub samples: usize,
    pub errors: usize,
}

/// Per-metric classifier and scenario reports.
#[derive(Debug, Clone, Serialize)]
pub struct MetricDetails {
    pub metric: String,
    pub volume: String,
    pub isotropy: Option<EquivalenceReport>,
    pub scenarios: Option<ScenarioReport>,
    pub flag_fit: Option<FlagFitReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    /// Seconds since the Unix epoch.
    pub generated_at: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub engine_version: &'static str,
    pub conventions: Conventions,
    pub seed: u64,
    pub samples: usize,
    pub chart: &'static str,
    pub per_identity: Vec<IdentitySummary>,
    pub verdicts: Vec<Verdict>,
    pub details: Vec<MetricDetails>,
    pub metadata: Metadata,
    #[serde(skip)]
    pub results: Vec<IdentityResult>,
}

impl SuiteReport {
    /// No identity failed.
    pub fn passed(&self) -> bool {
        self.per_identity.iter().all(|s| s.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &IdentitySummary> {
        self.per_identity.iter().filter(|s| s.status == Status::Fail)
    }

    /// The report without `metadata`, for run-to-run comparison.
    pub fn comparable(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("metadata");
        }
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per (identity, metric, sample).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["identity", "metric", "sample", "x", "y", "residual", "scale", "tol", "passed", "error"])
            .map_err(io)?;
        let join = |v: &[f64]| v.iter().map(|c| format!("{c:e}")).collect::<Vec<_>>().join(" ");
        for r in &self.results {
            w.write_record([
                r.identity_id.clone(),
                r.metric.clone(),
                r.sample_index.to_string(),
                join(&r.sample.x),
                join(&r.sample.y),
                format!("{:e}", r.residual),
                format!("{:e}", r.scale),
                format!("{:e}", r.tol),
                r.passed.to_string(),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }

    /// Fixed-width table of the per-identity summaries.
    pub fn table(&self) -> String {
        let mut s = format!("{:<34} {:<18} {:>8} {:>12} {:>9} {:>8}\n", "identity", "metric", "status", "max_resid", "tol", "samples");
        for r in &self.per_identity {
            let status = match r.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::NotApplicable => "n/a",
            };
            s.push_str(&format!(
                "{:<34} {:<18} {:>8} {:>12.3e} {:>9.1e} {:>8}\n",
                r.id, r.metric, status, r.max_residual, r.tol, r.samples
            ));
        }
        s
    }
}

/// One measured residual: `None` when the identity does not apply.
type Measure = Result<Option<(f64, f64)>>;

fn max_abs<'a>(v: impl IntoIterator<Item = &'a f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn metric_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a, so that metric order does not change a metric's samples.
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3)) ^ seed
}

/// `v` with its Euclidean component along `y` removed, or a coordinate axis
/// treated the same way when `v` is too close to `y`.
fn transverse(y: &[f64], v: &[f64]) -> Vec<f64> {
    let reject = |v: &[f64]| -> Vec<f64> {
        let t = v.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / y.iter().map(|b| b * b).sum::<f64>();
        v.iter().zip(y).map(|(a, b)| a - t * b).collect()
    };
    let w = reject(v);
    if norm(&w) >= 0.1 * norm(v) {
        return w;
    }
    let k = (0..y.len()).min_by(|&a, &b| y[a].abs().total_cmp(&y[b].abs())).unwrap_or(0);
    let mut e = vec![0.0; y.len()];
    e[k] = 1.0;
    reject(&e)
}

struct Sample {
    x: Vec<f64>,
    y: Vec<f64>,
    lambda: f64,
    /// Second direction for flag and sectional curvature.
    v: Vec<f64>,
}

fn draw_samples(metric: &MetricSpec, count: usize, seed: u64) -> Vec<Sample> {
    let mut rng = Sampler::new(metric_seed(seed, &metric.name));
    (0..count)
        .map(|_| Sample {
            x: rng.point(metric),
            y: rng.direction(metric.dim),
            lambda: rng.uniform(0.5, 2.0),
            v: rng.direction(metric.dim),
        })
        .collect()
}

fn sample_checks(metric: &MetricSpec, vol: &VolumeDensity, conv: Conventions, s: &Sample) -> Vec<(&'static str, Measure)> {
    match sample_checks_inner(metric, vol, conv, s) {
        Ok(v) => v,
        Err(e) => IDENTITIES[1..26].iter().map(|(id, _)| (*id, Err(e.clone()))).collect(),
    }
}

fn sample_checks_inner(
    metric: &MetricSpec,
    vol: &VolumeDensity,
    conv: Conventions,
    s: &Sample,
) -> Result<Vec<(&'static str, Measure)>> {
    let n = metric.dim;
    let density = vol.density(metric, &s.x, DEFAULT_ORDER)?;
    let t = Tower::with_density(metric, vol, &s.x, &s.y, DEFAULT_ORDER, Some(density.clone()))?;
    let y = &s.y;
    let ynorm = norm(y);
    let mut out: Vec<(&'static str, Measure)> = Vec::new();

    let f2 = t.f2().value();
    let g = values2(t.g());
    let gyy: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| g[i][j] * y[i] * y[j]).sum();
    out.push(("homogeneity.fundamental_tensor", Ok(Some(((gyy - f2).abs(), f2)))));

    let contract_last3 = |a: &Vec<Vec<Vec<f64>>>| -> (f64, f64) {
        let r = max_abs(&(0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (0..n).map(|k| a[i][j][k] * y[k]).sum::<f64>()).collect::<Vec<_>>());
        (r, max_abs(a.iter().flatten().flatten()) * ynorm)
    };
    out.push(("homogeneity.cartan", (|| {
        let f = t.f().value();
        let a: Vec<Vec<Vec<f64>>> = values3(t.cartan()?).into_iter().map(|m| m.into_iter().map(|r| r.into_iter().map(|v| v * f).collect()).collect()).collect();
        Ok(Some(contract_last3(&a)))
    })()));
    out.push(("homogeneity.berwald_curvature", (|| {
        let b = values4(t.berwald_curvature()?);
        let r = max_abs(&b.iter().flat_map(|bi| bi.iter().flat_map(|bj| bj.iter().map(|bk| bk.iter().zip(y).map(|(p, q)| p * q).sum::<f64>()))).collect::<Vec<_>>());
        Ok(Some((r, max_abs(b.iter().flatten().flatten().flatten()) * ynorm)))
    })()));
    out.push(("homogeneity.e_curvature", (|| {
        let e = values2(t.e_tensor()?);
        let r = max_abs(&e.iter().map(|row| row.iter().zip(y).map(|(p, q)| p * q).sum::<f64>()).collect::<Vec<_>>());
        Ok(Some((r, max_abs(e.iter().flatten()) * ynorm)))
    })()));
    out.push(("homogeneity.landsberg", (|| Ok(Some(contract_last3(&values3(t.landsberg()?)))))()));
    out.push(("homogeneity.s_scaling", (|| {
        let ly: Vec<f64> = y.iter().map(|v| v * s.lambda).collect();
        let t2 = Tower::with_density(metric, vol, &s.x, &ly, DEFAULT_ORDER, Some(density.clone()))?;
        let a = s.lambda * t.s_big()?.value();
        Ok(Some(((t2.s_big()?.value() - a).abs(), a.abs())))
    })()));

    out.push(("dtau_vertical", (|| {
        let tau = t.tau()?;
        let i = values(&t.mean_cartan()?);
        let r = max_abs(&(0..n).map(|k| t.dy(tau, k).value() - i[k]).collect::<Vec<_>>());
        Ok(Some((r, max_abs(&i))))
    })()));
    out.push(("hessian_s", (|| {
        let e = values2(t.e_tensor()?);
        let sb = t.s_big()?;
        let mut r = 0.0f64;
        for j in 0..n {
            for k in 0..n {
                let h = 0.5 * t.dy(&t.dy(sb, j), k).value();
                r = r.max((e[j][k] - h).abs());
            }
        }
        Ok(Some((r, max_abs(e.iter().flatten()))))
    })()));
    out.push(("s_routes", (|| {
        let a = t.s_big()?.value();
        Ok(Some(((t.s_big_divergence()?.value() - a).abs(), a.abs())))
    })()));
    let hh = t.hh(conv);
    let rmat = t.riemann().map(values2);
    for (id, chern) in [("spray_curvature.chern", true), ("spray_curvature.berwald", false)] {
        out.push((id, (|| {
            let hh = hh.as_ref().map_err(Clone::clone)?;
            let r = rmat.as_ref().map_err(Clone::clone)?;
            let x = contract_y(if chern { &hh.r_chern } else { &hh.r_berwald }, y);
            let d = max_abs(&x.iter().flatten().zip(r.iter().flatten()).map(|(a, b)| a - b).collect::<Vec<_>>());
            Ok(Some((d, max_abs(r.iter().flatten()))))
        })()));
    }

    // Frame identities live on the indicatrix.
    let f = t.f().value();
    let yn: Vec<f64> = y.iter().map(|v| v / f).collect();
    let tn = Tower::with_density(metric, vol, &s.x, &yn, DEFAULT_ORDER, Some(density))?;
    let terms = tn.frame_terms(&tn.frame(), conv);
    let frame = |id: &'static str, pick: &dyn Fn(&crate::curvature::FrameTerms<f64>, usize) -> Option<(f64, Vec<f64>)>| -> (&'static str, Measure) {
        let m = terms.as_ref().map_err(Clone::clone).map(|ft| {
            let mut r = 0.0f64;
            let mut scale = 0.0f64;
            for a in 0..n - 1 {
                let (res, parts) = pick(ft, a)?;
                r = r.max(res.abs());
                scale = scale.max(max_abs(&parts));
            }
            Some((r, scale))
        });
        (id, m)
    };
    out.push(frame("frame.s_tau_landsberg", &|ft, a| {
        Some((ft.s_comma[a] + ft.tau_bar[a] - ft.j[a], vec![ft.s_comma[a], ft.tau_bar[a], ft.j[a]]))
    }));
    out.push(frame("frame.s_transport", &|ft, a| {
        let p = [ft.s_bar[a], ft.s_comma_bar_n[a], ft.j_bar_n[a], ft.tr_r[a]];
        Some((p[0] + p[1] - p[2] - p[3], p.to_vec()))
    }));
    out.push(frame("frame.s_transport_berwald", &|ft, a| {
        let p = [ft.s_bar[a], ft.s_comma_bar_n_berwald[a], ft.j_bar_n[a], ft.tr_r[a]];
        Some((p[0] + p[1] - p[2] - p[3], p.to_vec()))
    }));
    let c = (n as f64 + 1.0) / 3.0;
    out.push(frame("frame.k_gradient", &|ft, a| {
        let kc = ft.k_comma.as_ref()?[a];
        Some((ft.tr_r[a] + ft.j_bar_n[a] + c * kc, vec![ft.tr_r[a], ft.j_bar_n[a], c * kc]))
    }));

    let riem = metric.is_riemannian();
    let gate = |on: bool, m: Measure| if on { m } else { Ok(None) };
    out.push(("riemannian.cartan", gate(riem, (|| Ok(Some((max_abs(values3(t.cartan()?).iter().flatten().flatten()), 0.0))))())));
    out.push(("riemannian.landsberg", gate(riem, (|| Ok(Some((max_abs(values3(t.landsberg()?).iter().flatten().flatten()), 0.0))))())));
    out.push(("riemannian.mean_landsberg", gate(riem, (|| Ok(Some((max_abs(&values(t.mean_landsberg()?)), 0.0))))())));
    out.push(("riemannian.e_curvature", gate(riem, (|| Ok(Some((max_abs(values2(t.e_tensor()?).iter().flatten()), 0.0))))())));
    out.push((
        "riemannian.s_curvature",
        gate(riem && vol.kind == VolumeKind::Riemannian, (|| Ok(Some((t.s_big()?.value().abs(), 0.0))))()),
    ));
    out.push((
        "riemannian.sigma_bar",
        gate(riem, hh.as_ref().map_err(Clone::clone).map(|h| Some((max_abs(h.sigma_bar.iter().flatten()), 0.0)))),
    ));
    out.push(("riemannian.sectional_curvature", gate(riem, (|| {
        let r = rmat.as_ref().map_err(Clone::clone)?;
        let v = transverse(y, &s.v);
        let k = crate::curvature::flag_curvature(&t, &crate::curvature::lower(&g, r), &v)?;
        let classical = classical_sectional_curvature(metric, &s.x, y, &v)?;
        Ok(Some(((k - classical).abs(), classical.abs())))
    })())));

    let funk = matches!(metric.family, Family::Funk);
    let nf = n as f64;
    out.push(("funk.s_constant", gate(funk, (|| Ok(Some(((t.s_big()?.value() / f - (nf + 1.0) / 2.0).abs(), 0.0))))())));
    out.push((
        "funk.e_constant",
        gate(funk, (|| Ok(Some(((t.e_scalar()?.value() - (nf - 1.0) * (nf + 1.0) / 2.0).abs(), 0.0))))()),
    ));
    out.push(("funk.flag_curvature", gate(funk, (|| {
        let fs = flag_spread(&t, 64)?;
        if fs.flags < 64 {
            return Err(Error::DegenerateFlag);
        }
        Ok(Some(((fs.min + 0.25).abs().max((fs.max + 0.25).abs()), 0.0)))
    })())));
    Ok(out)
}

struct MetricRun {
    results: Vec<IdentityResult>,
    verdicts: Vec<Verdict>,
    details: MetricDetails,
}

fn result(
    cfg: &SuiteConfig,
    conv: Conventions,
    id: &str,
    metric: &str,
    index: usize,
    x: &[f64],
    y: &[f64],
    measure: Measure,
) -> Option<IdentityResult> {
    let tol = cfg.tol(id);
    let (residual, scale, error) = match measure {
        Ok(None) => return None,
        Ok(Some((r, s))) => (r, s, None),
        Err(e) => (f64::INFINITY, 0.0, Some(e.to_string())),
    };
    Some(IdentityResult {
        identity_id: id.to_string(),
        metric: metric.to_string(),
        sample_index: index,
        sample: PointDir {
            x: x.to_vec(),
            y: y.to_vec(),
        },
        residual,
        scale,
        tol,
        passed: error.is_none() && within(residual, tol, scale),
        convention_constants: conv,
        error,
    })
}

fn run_metric(sm: &SuiteMetric, cfg: &SuiteConfig, conv: Conventions) -> MetricRun {
    let metric = &sm.metric;
    let vol = &sm.volume;
    let name = metric.name.as_str();
    let samples = draw_samples(metric, cfg.samples, cfg.seed);
    let convexity = check_strong_convexity(metric, &samples.iter().map(|s| (s.x.clone(), s.y.clone())).collect::<Vec<_>>());

    let per_sample: Vec<Vec<IdentityResult>> = samples
        .par_iter()
        .zip(convexity.samples.par_iter())
        .enumerate()
        .map(|(k, (s, cs))| {
            let guard: Measure = match &cs.error {
                Some(e) => Err(Error::InvalidMetric(e.clone())),
                None => Ok(Some(((-cs.min_eigenvalue).max(0.0), 0.0))),
            };
            let mut out: Vec<IdentityResult> = result(cfg, conv, "convexity", name, k, &s.x, &s.y, guard).into_iter().collect();
            if !cs.flagged && cs.error.is_none() {
                out.extend(
                    sample_checks(metric, vol, conv, s)
                        .into_iter()
                        .filter_map(|(id, m)| result(cfg, conv, id, name, k, &s.x, &s.y, m)),
                );
            }
            out
        })
        .collect();
    let mut results: Vec<IdentityResult> = per_sample.into_iter().flatten().collect();

    let xs: Vec<Vec<f64>> = samples.iter().take(cfg.classifier_points).map(|s| s.x.clone()).collect();
    let ccfg = &cfg.classifier;
    let scans: Vec<Result<StencilScan>> = xs
        .par_iter()
        .map(|x| scan_all(metric, vol, std::slice::from_ref(x), ccfg).map(|mut v| v.remove(0)))
        .collect();
    let mut details = MetricDetails {
        metric: metric.name.clone(),
        volume: vol.label(),
        isotropy: None,
        scenarios: None,
        flag_fit: None,
    };
    let mut verdicts = Vec::new();
    let failed_scan = scans.iter().position(|s| s.is_err());
    if let Some(k) = failed_scan {
        let err = scans[k].as_ref().err().cloned();
        for id in IDENTITIES.iter().map(|(i, _)| *i).filter(|i| i.starts_with("isotropy.") || i.starts_with("scenario.")) {
            results.extend(result(cfg, conv, id, name, k, &xs[k], &[], Err(err.clone().unwrap())));
        }
    } else if !scans.is_empty() {
        let scans: Vec<StencilScan> = scans.into_iter().map(|s| s.unwrap()).collect();
        let iso = isotropy_equivalence(metric, &scans, ccfg);
        for (k, (p, st)) in iso.points.iter().zip(&scans).enumerate() {
            let x = &p.x;
            let gap = if p.e_isotropic != p.s_weakly { f64::INFINITY } else { p.c_gap.unwrap_or(0.0) };
            results.extend(result(cfg, conv, "isotropy.e_vs_s", name, k, x, &[], Ok(Some((gap, p.c_from_e.abs())))));
            results.extend(result(cfg, conv, "isotropy.frame_e", name, k, x, &[], Ok(p.frame_e_residual.map(|r| (r, 0.0)))));
            results.extend(result(cfg, conv, "isotropy.xi_cross_check", name, k, x, &[], Ok(p.xi_cross_check.map(|r| (r, 0.0)))));
            let sv = super::classify::s_verdicts(metric, st, ccfg);
            let lattice = if sv.monotone() { 0.0 } else { f64::INFINITY };
            results.extend(result(cfg, conv, "isotropy.verdict_lattice", name, k, x, &[], Ok(Some((lattice, 0.0)))));
            let trace = berwald_trace(std::slice::from_ref(st), ccfg);
            results.extend(result(cfg, conv, "berwald_trace", name, k, x, &[], Ok(trace.map(|r| (r, 0.0)))));
        }
        let x0 = xs[0].clone();
        match almost_constant_scenarios(metric, vol, &scans, ccfg) {
            Ok(sc) => {
                let mut add = |id: &str, o: &Outcome| {
                    let m = (o.status != Status::NotApplicable).then_some((o.residual, o.scale));
                    results.extend(result(cfg, conv, id, name, 0, &x0, &[], Ok(m)));
                };
                add("scenario.almost_constant_s", &sc.almost_constant_s);
                add("scenario.vanishing_s", &sc.vanishing_s);
                add("scenario.landsberg_equivalence", &sc.landsberg_equivalence);
                details.scenarios = Some(sc);
            }
            Err(e) => results.extend(result(cfg, conv, "scenario.almost_constant_s", name, 0, &x0, &[], Err(e))),
        }
        let fit = flag_curvature_fit(metric, &scans, ccfg);
        for (k, p) in fit.points.iter().enumerate() {
            let m = match p.status {
                Status::NotApplicable => None,
                Status::Pass => Some((p.flag_gradient_residual.unwrap_or(0.0), 0.0)),
                Status::Fail => Some((f64::INFINITY, 0.0)),
            };
            results.extend(result(cfg, conv, "scenario.flag_curvature_fit", name, k, &p.x, &[], Ok(m)));
        }
        verdicts = super::scenarios::all_verdicts(metric, &scans, ccfg);
        details.isotropy = Some(iso);
        details.flag_fit = Some(fit);
    }
    MetricRun { results, verdicts, details }
}

fn summarize(results: &[IdentityResult], metrics: &[SuiteMetric], cfg: &SuiteConfig) -> Vec<IdentitySummary> {
    let mut out = Vec::new();
    for sm in metrics {
        for (id, _) in IDENTITIES {
            let rs: Vec<&IdentityResult> = results.iter().filter(|r| r.metric == sm.metric.name && r.identity_id == *id).collect();
            let status = if rs.is_empty() {
                Status::NotApplicable
            } else {
                Status::from_pass(rs.iter().all(|r| r.passed))
            };
            out.push(IdentitySummary {
                id: id.to_string(),
                metric: sm.metric.name.clone(),
                max_residual: rs.iter().map(|r| r.residual / (1.0 + r.scale)).fold(0.0, f64::max),
                tol: cfg.tol(id),
                passed: (!rs.is_empty()).then(|| status == Status::Pass),
                status,
                samples: rs.len(),
                errors: rs.iter().filter(|r| r.error.is_some()).count(),
            });
        }
    }
    out
}

/// Runs every identity on every configured metric. Failures are report
/// entries; see [`SuiteReport::passed`].
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let conv = Conventions::frozen()?;
    let runs: Vec<MetricRun> = cfg.metrics.par_iter().map(|sm| run_metric(sm, cfg, conv)).collect();
    let mut results = Vec::new();
    let mut verdicts = Vec::new();
    let mut details = Vec::new();
    for r in runs {
        results.extend(r.results);
        verdicts.extend(r.verdicts);
        details.push(r.details);
    }
    Ok(SuiteReport {
        engine_version: env!("CARGO_PKG_VERSION"),
        conventions: conv,
        seed: cfg.seed,
        samples: cfg.samples,
        chart: super::scenarios::CHART_NOTE,
        per_identity: summarize(&results, &cfg.metrics, cfg),
        verdicts,
        details,
        metadata: Metadata {
            generated_at: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        },
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_suite_passes() {
        let r = run_suite(&SuiteConfig::with_metrics(Vec::new())).unwrap();
        assert!(r.passed() && r.per_identity.is_empty() && r.verdicts.is_empty());
    }

    #[test]
    fn identity_table_tolerances_are_known() {
        assert_eq!(default_tol("hessian_s"), Some(1e-7));
        assert_eq!(default_tol("nope"), None);
        assert_eq!(IDENTITIES[1].0, "homogeneity.fundamental_tensor");
        assert_eq!(IDENTITIES[25].0, "funk.flag_curvature");
    }
}
