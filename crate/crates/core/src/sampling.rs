//! Deterministic direction sets and seeded point sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metricdef::MetricSpec;

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653; // π(3 − √5)

/// `count` quasi-uniform unit vectors: golden-angle on the circle, Fibonacci on `S²`.
pub fn directions(n: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    match n {
        2 => Ok((0..count)
            .map(|k| {
                let t = 0.5 + k as f64 * GOLDEN_ANGLE;
                vec![t.cos(), t.sin()]
            })
            .collect()),
        3 => Ok((0..count)
            .map(|k| {
                let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let t = 0.5 + k as f64 * GOLDEN_ANGLE;
                vec![r * t.cos(), r * t.sin(), z]
            })
            .collect()),
        _ => Err(Error::InvalidMetric(format!("direction sets exist for n = 2, 3; got {n}"))),
    }
}

/// Seeded stream of `(x, y)` samples inside a metric's domain hint.
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A point of the domain, kept a little inside its boundary.
    pub fn point(&mut self, metric: &MetricSpec) -> Vec<f64> {
        let u: Vec<f64> = (0..metric.dim).map(|_| self.rng.gen_range(0.05..0.95)).collect();
        metric.domain.from_unit_cube(&u)
    }

    /// A direction with random length in `[0.5, 2]`.
    pub fn direction(&mut self, n: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
            let r = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (0.2..=1.0).contains(&r) {
                let len = self.rng.gen_range(0.5..2.0);
                return v.iter().map(|c| c / r * len).collect();
            }
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }
}
