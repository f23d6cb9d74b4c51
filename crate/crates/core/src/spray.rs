//! Geodesic spray, nonlinear connection, Berwald and Chern connections,
//! horizontal derivatives, and geodesic integration.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fundamentals::PointDir;
use crate::jets::{Jet, DEFAULT_ORDER};
use crate::metricdef::{MetricSpec, VolumeDensity};
use crate::scalar::{lit, to_f64, Real};
use crate::tower::{values, values2, values3, values4, Arr3, Arr4, Connection, Mat, Tower};

#[derive(Debug, Clone, Serialize)]
pub struct SprayData<T> {
    /// Spray coefficients `G^i`.
    pub g: Vec<T>,
    /// `N^i_j = ∂G^i/∂y^j`.
    pub n: Mat<T>,
    /// Berwald coefficients `G^i_jk`.
    pub berwald: Arr3<T>,
    /// Berwald curvature `B^i_jkl`.
    pub b: Arr4<T>,
    /// Chern coefficients `Γ^i_jk`.
    pub chern: Arr3<T>,
}

pub fn spray_at<T: Real>(metric: &MetricSpec, p: &PointDir<T>) -> Result<SprayData<T>> {
    // The spray never touches the volume density.
    let vol = VolumeDensity::default();
    Tower::new(metric, &vol, &p.x, &p.y, DEFAULT_ORDER)?.spray_data()
}

impl<T: Real> Tower<'_, T> {
    pub fn spray_data(&self) -> Result<SprayData<T>> {
        Ok(SprayData {
            g: values(self.spray()?),
            n: values2(self.nonlinear()?),
            berwald: values3(self.berwald()?),
            b: values4(self.berwald_curvature()?),
            chern: values3(self.chern()?),
        })
    }

    /// Horizontal covariant derivative of a tensor field given by its
    /// components (row-major, one slot per entry of `slots`). The result has
    /// one more trailing index `m`.
    pub fn tensor_derivative(&self, comps: &[Jet<T>], slots: &[Slot], which: Connection) -> Result<Vec<Jet<T>>> {
        let n = self.n;
        let rank = slots.len();
        if comps.len() != n.pow(rank as u32) {
            return Err(Error::InvalidMetric(format!(
                "tensor of rank {rank} needs {} components, got {}",
                n.pow(rank as u32),
                comps.len()
            )));
        }
        let lam = self.connection(which)?;
        let mut out = Vec::with_capacity(comps.len() * n);
        let mut idx = vec![0usize; rank];
        for flat in 0..comps.len() {
            let mut r = flat;
            for s in (0..rank).rev() {
                idx[s] = r % n;
                r /= n;
            }
            for m in 0..n {
                let mut acc = self.delta(&comps[flat], m)?;
                for (s, slot) in slots.iter().enumerate() {
                    for p in 0..n {
                        let mut j = idx.clone();
                        j[s] = p;
                        let other = &comps[j.iter().fold(0, |a, v| a * n + v)];
                        match slot {
                            Slot::Covariant => acc = acc - &lam[p][idx[s]][m] * other,
                            Slot::Contravariant => acc = acc + &lam[idx[s]][p][m] * other,
                        }
                    }
                }
                out.push(acc);
            }
        }
        Ok(out)
    }
}

/// Variance of a tensor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Covariant,
    Contravariant,
}

/// `T_{…|m}` for a tensor field built from the tower at `p` (Chern connection).
/// Returns the components with the derivative index last, and the spray-direction
/// derivative `T_{…|m} y^m / F`.
pub fn horizontal_derivative<T: Real, F>(
    metric: &MetricSpec,
    vol: &VolumeDensity,
    p: &PointDir<T>,
    field: F,
    slots: &[Slot],
) -> Result<(Vec<T>, Vec<T>)>
where
    F: Fn(&Tower<'_, T>) -> Result<Vec<Jet<T>>>,
{
    let tower = Tower::new(metric, vol, &p.x, &p.y, DEFAULT_ORDER)?;
    let comps = field(&tower)?;
    let d = values(&tower.tensor_derivative(&comps, slots, Connection::Chern)?);
    let n = tower.n;
    let f = tower.f().value();
    let along = d
        .chunks(n)
        .map(|row| row.iter().zip(&p.y).map(|(a, b)| *a * *b).sum::<T>() / f)
        .collect();
    Ok((d, along))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub f: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Set when integration stopped early (domain exit or evaluation failure).
    pub stopped: Option<String>,
}

impl Trajectory {
    /// Largest `|F(t) − F(0)|`.
    pub fn f_drift(&self) -> f64 {
        let f0 = self.points.first().map_or(0.0, |p| p.f);
        self.points.iter().map(|p| (p.f - f0).abs()).fold(0.0, f64::max)
    }

    /// CSV with columns `t, x_1..x_n, y_1..y_n, F`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.points.first().map_or(0, |p| p.x.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=n).map(|i| format!("y_{i}")));
        header.push("F".into());
        w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
        for p in &self.points {
            let mut row = vec![format!("{:e}", p.t)];
            row.extend(p.x.iter().chain(&p.y).map(|v| format!("{v:e}")));
            row.push(format!("{:e}", p.f));
            w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))?;
        Ok(())
    }
}

fn spray_value<T: Real>(metric: &MetricSpec, x: &[T], y: &[T]) -> Result<Vec<T>> {
    let vol = VolumeDensity::default();
    Ok(values(Tower::new(metric, &vol, x, y, 2)?.spray()?))
}

/// RK4 for `ẋ = y`, `ẏ = −2G(x, y)`, recording `F` at every step.
pub fn geodesic_integrate<T: Real>(metric: &MetricSpec, x0: &[T], y0: &[T], steps: usize, dt: T) -> Result<Trajectory> {
    let n = metric.dim;
    let record = |t: T, x: &[T], y: &[T]| -> Result<TrajectoryPoint> {
        Ok(TrajectoryPoint {
            t: to_f64(t),
            x: x.iter().map(|v| to_f64(*v)).collect(),
            y: y.iter().map(|v| to_f64(*v)).collect(),
            f: to_f64(metric.eval_f(x, y)?),
        })
    };
    let rhs = |x: &[T], y: &[T]| -> Result<(Vec<T>, Vec<T>)> {
        let g = spray_value(metric, x, y)?;
        Ok((y.to_vec(), g.iter().map(|v| -*v * lit::<T>(2.0)).collect()))
    };
    let axpy = |a: &[T], s: T, b: &[T]| -> Vec<T> { a.iter().zip(b).map(|(p, q)| *p + s * *q).collect() };
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    let mut points = vec![record(T::zero(), &x, &y)?];
    let half = dt * lit(0.5);
    let sixth = dt / lit(6.0);
    for step in 1..=steps {
        let attempt = (|| -> Result<(Vec<T>, Vec<T>)> {
            let (k1x, k1y) = rhs(&x, &y)?;
            let (k2x, k2y) = rhs(&axpy(&x, half, &k1x), &axpy(&y, half, &k1y))?;
            let (k3x, k3y) = rhs(&axpy(&x, half, &k2x), &axpy(&y, half, &k2y))?;
            let (k4x, k4y) = rhs(&axpy(&x, dt, &k3x), &axpy(&y, dt, &k3y))?;
            let two = lit::<T>(2.0);
            let nx = (0..n).map(|i| x[i] + sixth * (k1x[i] + two * k2x[i] + two * k3x[i] + k4x[i])).collect();
            let ny = (0..n).map(|i| y[i] + sixth * (k1y[i] + two * k2y[i] + two * k3y[i] + k4y[i])).collect();
            Ok((nx, ny))
        })();
        match attempt {
            Ok((nx, ny)) => {
                let xf: Vec<f64> = nx.iter().map(|v: &T| to_f64(*v)).collect();
                if metric.check_point(&xf).is_err() {
                    return Ok(Trajectory {
                        points,
                        stopped: Some(format!("left the domain at step {step}")),
                    });
                }
                x = nx;
                y = ny;
                points.push(record(dt * lit(step as f64), &x, &y)?);
            }
            Err(e) => {
                return Ok(Trajectory {
                    points,
                    stopped: Some(format!("step {step}: {e}")),
                })
            }
        }
    }
    Ok(Trajectory { points, stopped: None })
}
