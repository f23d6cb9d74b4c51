//! Strong-convexity guard: `F > 0` and `g_ij(x, y)` positive definite.

use serde::Serialize;

use super::MetricSpec;
use crate::error::Result;
use crate::jets::JetSpec;
use crate::linalg::sym_eigenvalues;

#[derive(Debug, Clone, Serialize)]
pub struct ConvexitySample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub f: f64,
    pub min_eigenvalue: f64,
    /// Set when `F ≤ 0`, `g` is not positive definite, or evaluation failed.
    pub flagged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub metric: String,
    pub samples: Vec<ConvexitySample>,
    /// Smallest eigenvalue over all evaluable samples.
    pub min_eigenvalue: f64,
    pub flagged: usize,
}

impl ConvexityReport {
    pub fn all_convex(&self) -> bool {
        self.flagged == 0
    }
}

/// Minimum eigenvalue of `g` at every sample; never fails, problems are flagged.
pub fn check_strong_convexity(metric: &MetricSpec, samples: &[(Vec<f64>, Vec<f64>)]) -> ConvexityReport {
    let n = metric.dim;
    let eval = |x: &[f64], y: &[f64]| -> Result<(f64, f64)> {
        metric.check_point(x)?;
        let spec = JetSpec::phase_space(n, 2)?;
        let f = metric.eval_f_jet(x, y, spec)?;
        let f2 = &f * &f;
        let g: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| 0.5 * f2.d(n + i).d(n + j).value()).collect())
            .collect();
        Ok((f.value(), sym_eigenvalues(&g)[0]))
    };
    let samples: Vec<ConvexitySample> = samples
        .iter()
        .map(|(x, y)| match eval(x, y) {
            Ok((f, ev)) => ConvexitySample {
                x: x.clone(),
                y: y.clone(),
                f,
                min_eigenvalue: ev,
                flagged: !(f > 0.0 && ev > 0.0),
                error: None,
            },
            Err(e) => ConvexitySample {
                x: x.clone(),
                y: y.clone(),
                f: f64::NAN,
                min_eigenvalue: f64::NAN,
                flagged: true,
                error: Some(e.to_string()),
            },
        })
        .collect();
    ConvexityReport {
        metric: metric.name.clone(),
        min_eigenvalue: samples
            .iter()
            .map(|s| s.min_eigenvalue)
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min),
        flagged: samples.iter().filter(|s| s.flagged).count(),
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metricdef::{Domain, Family};
    use crate::parse_metric;

    fn randers_with_b(b: &str) -> MetricSpec {
        let one = parse_metric("1").unwrap();
        let zero = parse_metric("0").unwrap();
        MetricSpec::new(
            "tilted",
            2,
            Family::Randers {
                a: vec![vec![one.clone(), zero.clone()], vec![zero.clone(), one]],
                b: vec![parse_metric(b).unwrap(), zero],
            },
            Domain::Unbounded,
        )
        .unwrap()
    }

    #[test]
    fn euclidean_eigenvalues_are_one() {
        let m = MetricSpec::builtin("euclidean").unwrap();
        let r = check_strong_convexity(&m, &[(vec![0.1, 0.2], vec![1.0, 2.0]), (vec![-0.5, 0.0], vec![0.0, -1.0])]);
        assert!(r.all_convex());
        assert!(r.samples.iter().all(|s| (s.min_eigenvalue - 1.0).abs() < 1e-12));
    }

    #[test]
    fn randers_norm_above_one_is_flagged() {
        let m = randers_with_b("0.3*x2");
        let dirs: Vec<(Vec<f64>, Vec<f64>)> = (0..16)
            .map(|k| {
                let t = k as f64 * std::f64::consts::PI / 8.0;
                (vec![0.0, 4.0], vec![t.cos(), t.sin()])
            })
            .collect();
        assert!(check_strong_convexity(&m, &dirs).flagged > 0);
        let ok: Vec<_> = dirs.iter().map(|(_, y)| (vec![0.0, 1.0 / 0.6], y.clone())).collect();
        let r = check_strong_convexity(&m, &ok);
        assert!(r.all_convex(), "{r:?}");
    }
}
