use std::path::Path;

use anyhow::{bail, Context, Result};
use finsler::verify::SuiteMetric;
use finsler::{parse_metric, MetricSpec, VolumeDensity};

use crate::args::MetricArgs;

pub fn parse_vec(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("{what}: `{s}` is not a number")))
        .collect()
}

/// A built-in name, or a metric file when `name` is an existing path.
pub fn metric_by_name(name: &str) -> Result<(MetricSpec, Option<VolumeDensity>)> {
    let path = Path::new(name);
    if path.exists() {
        return Ok(MetricSpec::load(path)?);
    }
    Ok((MetricSpec::builtin(name)?, None))
}

fn expression_metric(src: &str, dim: Option<usize>) -> Result<MetricSpec> {
    let dim = match dim {
        Some(d) => d,
        None => {
            let (mx, my) = parse_metric(src)?.max_indices();
            mx.max(my).map_or(0, |i| i + 1).max(2)
        }
    };
    Ok(MetricSpec::from_expression("expr", dim, src)?)
}

impl MetricArgs {
    pub fn is_set(&self) -> bool {
        self.metric.is_some() || self.expr.is_some()
    }

    pub fn load(&self) -> Result<SuiteMetric> {
        let (metric, vol) = match (&self.metric, &self.expr) {
            (Some(name), _) => metric_by_name(name)?,
            (None, Some(src)) => (expression_metric(src, self.dim)?, None),
            (None, None) => bail!("one of --metric or --expr is required"),
        };
        if let (Some(d), Some(_)) = (self.dim, &self.metric) {
            if d != metric.dim {
                bail!("--dim {d} does not match metric dimension {}", metric.dim);
            }
        }
        let base = match vol {
            Some(v) => SuiteMetric { metric, volume: v },
            None => SuiteMetric::with_default_volume(metric),
        };
        self.adjust(base)
    }

    /// Applies --volume and --quad to a loaded metric.
    pub fn adjust(&self, mut m: SuiteMetric) -> Result<SuiteMetric> {
        if let Some(v) = &self.volume {
            m.volume = VolumeDensity::parse_cli(v)?;
        }
        if let Some(q) = self.quad {
            if q == 0 {
                bail!("--quad must be positive");
            }
            m.volume = m.volume.with_quadrature(q);
        }
        Ok(m)
    }
}

pub fn check_dim(v: &[f64], metric: &MetricSpec, what: &str) -> Result<()> {
    if v.len() != metric.dim {
        bail!("{what} has {} components, metric `{}` has dimension {}", v.len(), metric.name, metric.dim);
    }
    Ok(())
}
