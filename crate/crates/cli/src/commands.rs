use std::fs::File;
use std::io::{self, Write};

use anyhow::{bail, Context, Result};
use finsler::curvature::flag_spread;
use finsler::verify::classify::{e_verdict, s_verdicts, scan_stencil, StencilScan};
use finsler::verify::{run_suite, ClassifierConfig, SuiteConfig, SuiteMetric};
use finsler::{Conventions, CurvatureBundle, Domain, Error, MetricSpec, PointDir, Tower, DEFAULT_ORDER};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::args::{ClassifierArgs, ClassifyArgs, EvalArgs, Format, GeodesicArgs, OutputArgs, ScanArgs, VerifyArgs};
use crate::load::{check_dim, metric_by_name, parse_vec};

pub const QUANTITY_TAGS: [&str; 20] = [
    "F", "g", "A", "I", "tau", "G", "N", "Gamma", "B", "E", "e", "S", "L", "J", "R", "K", "Ricci", "Sigma_bar", "trR",
    "trR_berwald",
];

const FLAGS_PER_DIRECTION: usize = 64;

fn sink(out: &OutputArgs) -> Result<Box<dyn Write>> {
    Ok(match &out.out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json(out: &OutputArgs, v: &Value) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    Ok(())
}

fn write_csv(out: &OutputArgs, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink(out)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn selected_tags(spec: &str) -> Result<Vec<&'static str>> {
    if spec.trim() == "all" {
        return Ok(QUANTITY_TAGS.to_vec());
    }
    spec.split(',')
        .map(|t| {
            let t = t.trim();
            QUANTITY_TAGS.iter().copied().find(|q| *q == t).ok_or_else(|| {
                Error::UnknownTag {
                    tag: t.to_string(),
                    valid: QUANTITY_TAGS.join(", "),
                }
                .into()
            })
        })
        .collect()
}

/// Flattens nested arrays into `(index, value)` rows with 1-based indices.
fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    match v {
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                let p = if prefix.is_empty() {
                    (i + 1).to_string()
                } else {
                    format!("{prefix}.{}", i + 1)
                };
                flatten(&p, item, rows);
            }
        }
        Value::Object(map) => {
            for (k, item) in map {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&p, item, rows);
            }
        }
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

pub fn eval(a: &EvalArgs) -> Result<bool> {
    let SuiteMetric { metric, volume } = a.metric.load()?;
    let x = parse_vec(&a.x, "--x")?;
    let y = parse_vec(&a.y, "--y")?;
    check_dim(&x, &metric, "--x")?;
    check_dim(&y, &metric, "--y")?;
    metric.check_point(&x)?;
    let p = PointDir::new(x, y)?;
    let tags = selected_tags(&a.quantities)?;
    let order = a.order.unwrap_or(DEFAULT_ORDER);
    let conv = Conventions::frozen()?;
    let t = Tower::new(&metric, &volume, &p.x, &p.y, order)?;

    let needs = |set: &[&str]| tags.iter().any(|q| set.contains(q));
    let fund = if needs(&["F", "g", "A", "I", "tau"]) { Some(t.fundamentals()?) } else { None };
    let spray = if needs(&["G", "N", "Gamma", "B"]) { Some(t.spray_data()?) } else { None };
    let bundle: Option<CurvatureBundle<f64>> =
        if needs(&["E", "e", "S", "L", "J", "R", "Ricci", "Sigma_bar", "trR", "trR_berwald"]) {
            Some(t.bundle(conv)?)
        } else {
            None
        };

    let mut q = Map::new();
    for tag in &tags {
        let v = match *tag {
            "F" => json!(fund.as_ref().unwrap().f),
            "g" => json!(fund.as_ref().unwrap().g),
            "A" => json!(fund.as_ref().unwrap().a),
            "I" => json!(fund.as_ref().unwrap().i),
            "tau" => json!(fund.as_ref().unwrap().tau),
            "G" => json!(spray.as_ref().unwrap().g),
            "N" => json!(spray.as_ref().unwrap().n),
            "Gamma" => json!(spray.as_ref().unwrap().chern),
            "B" => json!(spray.as_ref().unwrap().b),
            "E" => json!(bundle.as_ref().unwrap().e),
            "e" => json!(bundle.as_ref().unwrap().e_scalar),
            "S" => json!(bundle.as_ref().unwrap().s),
            "L" => json!(bundle.as_ref().unwrap().l),
            "J" => json!(bundle.as_ref().unwrap().j),
            "R" => json!(bundle.as_ref().unwrap().r),
            "Ricci" => json!(bundle.as_ref().unwrap().ricci),
            "Sigma_bar" => json!(bundle.as_ref().unwrap().hh.sigma_bar),
            "trR" => json!(bundle.as_ref().unwrap().hh.tr_r),
            "trR_berwald" => json!(bundle.as_ref().unwrap().hh.tr_r_berwald),
            "K" => serde_json::to_value(flag_spread(&t, FLAGS_PER_DIRECTION)?)?,
            other => unreachable!("tag {other} validated above"),
        };
        q.insert(tag.to_string(), v);
    }

    match a.output.format {
        Format::Json => write_json(
            &a.output,
            &json!({
                "metric": metric.name,
                "dim": metric.dim,
                "volume": volume.label(),
                "order": order,
                "x": p.x,
                "y": p.y,
                "conventions": conv,
                "quantities": q,
            }),
        )?,
        Format::Csv => {
            let mut rows = Vec::new();
            for (tag, v) in &q {
                let mut flat = Vec::new();
                flatten("", v, &mut flat);
                rows.extend(flat.into_iter().map(|(i, val)| vec![tag.clone(), i, val]));
            }
            write_csv(&a.output, &["quantity".into(), "index".into(), "value".into()], &rows)?;
        }
    }
    Ok(true)
}

fn suite_metrics(a: &VerifyArgs) -> Result<Vec<SuiteMetric>> {
    if a.suite != "core" {
        bail!("unknown suite `{}`; valid: core", a.suite);
    }
    let list = match (&a.metrics, a.metric.is_set()) {
        (Some(_), true) => bail!("--metrics cannot be combined with --metric or --expr"),
        (None, true) => return Ok(vec![a.metric.load()?]),
        (Some(s), false) => s.as_str(),
        (None, false) => "builtin-zoo",
    };
    let base: Vec<SuiteMetric> = match list {
        "none" => Vec::new(),
        "builtin-zoo" => MetricSpec::zoo().into_iter().map(SuiteMetric::with_default_volume).collect(),
        names => names
            .split(',')
            .map(|n| {
                let (metric, vol) = metric_by_name(n.trim())?;
                Ok(match vol {
                    Some(volume) => SuiteMetric { metric, volume },
                    None => SuiteMetric::with_default_volume(metric),
                })
            })
            .collect::<Result<_>>()?,
    };
    base.into_iter().map(|m| a.metric.adjust(m)).collect()
}

pub fn verify(a: &VerifyArgs) -> Result<bool> {
    if let Some(t) = a.tol {
        if !(t >= 0.0) {
            bail!("--tol must be non-negative");
        }
    }
    let cfg = SuiteConfig {
        metrics: suite_metrics(a)?,
        samples: a.samples,
        classifier_points: a.classifier_points,
        seed: a.seed,
        tol_override: a.tol,
        ..SuiteConfig::default()
    };
    let report = run_suite(&cfg)?;
    match a.output.format {
        Format::Json => {
            let mut w = sink(&a.output)?;
            writeln!(w, "{}", report.to_json())?;
        }
        Format::Csv => report.write_csv(sink(&a.output)?)?,
    }
    let ok = report.passed();
    if !ok || a.output.out.is_some() {
        eprint!("{}", report.table());
    }
    if !ok {
        eprintln!("{} identities failed", report.failures().count());
    }
    Ok(ok)
}

fn classifier_config(a: &ClassifierArgs) -> ClassifierConfig {
    ClassifierConfig {
        directions: a.dirs,
        threshold: a.threshold,
        ..ClassifierConfig::default()
    }
}

fn s_level(st: &StencilScan, metric: &MetricSpec, cfg: &ClassifierConfig) -> &'static str {
    let v = s_verdicts(metric, st, cfg);
    if v.isotropic.decision {
        "isotropic"
    } else if v.almost.decision {
        "almost_isotropic"
    } else if v.weakly.decision {
        "weakly_isotropic"
    } else {
        "not_isotropic"
    }
}

pub fn classify(a: &ClassifyArgs) -> Result<bool> {
    let SuiteMetric { metric, volume } = a.metric.load()?;
    let x = parse_vec(&a.x, "--x")?;
    check_dim(&x, &metric, "--x")?;
    let cfg = classifier_config(&a.classifier);
    let st = scan_stencil(&metric, &volume, &x, &cfg, false)?;
    let e = e_verdict(&metric, &st.center, &cfg);
    let level = s_level(&st, &metric, &cfg);
    let s = s_verdicts(&metric, &st, &cfg);
    let summary = json!({
        "e_isotropic": e.decision,
        "e_value": st.center.e_mean,
        "S": level,
        "c": st.center.c_s,
        "xi": st.center.xi,
        "chart": "single convex chart: closed 1-forms are exact",
    });
    match a.output.format {
        Format::Json => write_json(
            &a.output,
            &json!({
                "metric": metric.name,
                "volume": volume.label(),
                "x": x,
                "summary": summary,
                "verdicts": [e, s.weakly, s.almost, s.isotropic],
            }),
        )?,
        Format::Csv => {
            let rows: Vec<Vec<String>> = [e, s.weakly, s.almost, s.isotropic]
                .iter()
                .map(|v| {
                    vec![
                        serde_json::to_value(v.kind).map(|k| k.as_str().unwrap_or_default().to_string()).unwrap_or_default(),
                        v.decision.to_string(),
                        v.fitted.c.map_or(String::new(), |c| format!("{c:e}")),
                        format!("{:e}", v.fitted.residual),
                        format!("{:e}", v.threshold),
                    ]
                })
                .collect();
            let header = ["verdict", "decision", "c", "residual", "threshold"].map(String::from);
            write_csv(&a.output, &header, &rows)?;
        }
    }
    Ok(true)
}

pub fn geodesic(a: &GeodesicArgs) -> Result<bool> {
    let SuiteMetric { metric, .. } = a.metric.load()?;
    let x = parse_vec(&a.x, "--x")?;
    let y = parse_vec(&a.y, "--y")?;
    check_dim(&x, &metric, "--x")?;
    check_dim(&y, &metric, "--y")?;
    metric.check_point(&x)?;
    if !(a.dt > 0.0) {
        bail!("--dt must be positive");
    }
    let traj = finsler::spray::geodesic_integrate(&metric, &x, &y, a.steps, a.dt)?;
    if let Some(why) = &traj.stopped {
        eprintln!("integration stopped early: {why}");
    }
    match a.output.format {
        Format::Json => write_json(&a.output, &serde_json::to_value(&traj)?)?,
        Format::Csv => traj.write_csv(sink(&a.output)?)?,
    }
    Ok(true)
}

fn default_corners(domain: &Domain, n: usize) -> (Vec<f64>, Vec<f64>) {
    match domain {
        Domain::Unbounded => (vec![-1.0; n], vec![1.0; n]),
        Domain::Box { lo, hi } => {
            let pad = |a: f64, b: f64| 0.1 * (b - a);
            (
                lo.iter().zip(hi).map(|(a, b)| a + pad(*a, *b)).collect(),
                lo.iter().zip(hi).map(|(a, b)| b - pad(*a, *b)).collect(),
            )
        }
        Domain::Ball { center, radius } => {
            let r = 0.6 * radius;
            (center.iter().map(|c| c - r).collect(), center.iter().map(|c| c + r).collect())
        }
    }
}

fn grid_points(lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let n = lo.len();
    let coord = |k: usize, i: usize| {
        if per_axis == 1 {
            0.5 * (lo[k] + hi[k])
        } else {
            lo[k] + (hi[k] - lo[k]) * i as f64 / (per_axis - 1) as f64
        }
    };
    let total = per_axis.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|k| {
                    let i = idx % per_axis;
                    idx /= per_axis;
                    coord(k, i)
                })
                .collect()
        })
        .collect()
}

pub fn scan(a: &ScanArgs) -> Result<bool> {
    let SuiteMetric { metric, volume } = a.metric.load()?;
    let n = metric.dim;
    if a.grid == 0 {
        bail!("--grid must be positive");
    }
    let (dlo, dhi) = default_corners(&metric.domain, n);
    let lo = a.lo.as_deref().map(|s| parse_vec(s, "--lo")).transpose()?.unwrap_or(dlo);
    let hi = a.hi.as_deref().map(|s| parse_vec(s, "--hi")).transpose()?.unwrap_or(dhi);
    check_dim(&lo, &metric, "--lo")?;
    check_dim(&hi, &metric, "--hi")?;
    let cfg = classifier_config(&a.classifier);
    cfg.check(n)?;

    let points = grid_points(&lo, &hi, a.grid);
    let rows: Vec<Value> = points
        .par_iter()
        .map(|x| {
            let scanned = metric.check_point(x).and_then(|_| scan_stencil(&metric, &volume, x, &cfg, false));
            match scanned {
                Ok(st) => json!({
                    "x": x,
                    "e_mean": st.center.e_mean,
                    "e_spread": st.center.e_spread,
                    "e_isotropic": st.center.e_isotropic(&cfg),
                    "c": st.center.c_s,
                    "xi": st.center.xi,
                    "s_fit_residual": st.center.s_fit_residual,
                    "curl_xi": st.curl,
                    "S": s_level(&st, &metric, &cfg),
                    "error": Value::Null,
                }),
                Err(e) => json!({ "x": x, "error": e.to_string() }),
            }
        })
        .collect();

    match a.output.format {
        Format::Json => write_json(
            &a.output,
            &json!({ "metric": metric.name, "volume": volume.label(), "grid": a.grid, "points": rows }),
        )?,
        Format::Csv => {
            let mut header: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
            header.extend(["e_mean", "e_spread", "e_isotropic", "c"].map(String::from));
            header.extend((1..=n).map(|i| format!("xi_{i}")));
            header.extend(["s_fit_residual", "curl_xi", "S", "error"].map(String::from));
            let num = |v: &Value| v.as_f64().map_or(String::new(), |f| format!("{f:e}"));
            let csv_rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let mut row: Vec<String> = r["x"].as_array().unwrap().iter().map(num).collect();
                    row.push(num(&r["e_mean"]));
                    row.push(num(&r["e_spread"]));
                    row.push(r["e_isotropic"].as_bool().map_or(String::new(), |b| b.to_string()));
                    row.push(num(&r["c"]));
                    match r["xi"].as_array() {
                        Some(xi) => row.extend(xi.iter().map(num)),
                        None => row.extend(std::iter::repeat(String::new()).take(n)),
                    }
                    row.push(num(&r["s_fit_residual"]));
                    row.push(num(&r["curl_xi"]));
                    row.push(r["S"].as_str().unwrap_or_default().to_string());
                    row.push(r["error"].as_str().unwrap_or_default().to_string());
                    row
                })
                .collect();
            write_csv(&a.output, &header, &csv_rows)?;
        }
    }
    Ok(true)
}
