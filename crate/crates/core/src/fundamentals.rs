//! Fundamental tensor, Cartan tensor, distortion, and the adapted frame.

use serde::Serialize;

use crate::curvature::{flag_spread, Conventions};
use crate::error::{Error, Result};
use crate::jets::DEFAULT_ORDER;
use crate::metricdef::{MetricSpec, VolumeDensity};
use crate::scalar::{lit, Real};
use crate::tower::{values, values2, values3, Mat, Arr3, Tower};

/// A point of the slit tangent bundle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointDir<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
}

impl<T: Real> PointDir<T> {
    pub fn new(x: Vec<T>, y: Vec<T>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidMetric("x and y must have the same length".into()));
        }
        if y.iter().all(|v| v.is_zero()) {
            return Err(Error::ZeroDirection);
        }
        Ok(Self { x, y })
    }

    /// Same point with `y` rescaled to `F(x, y) = 1`.
    pub fn normalized(&self, metric: &MetricSpec) -> Result<Self> {
        let f = metric.eval_f(&self.x, &self.y)?;
        if !(f > T::zero()) {
            return Err(Error::NonPositiveF(crate::scalar::to_f64(f)));
        }
        Ok(Self {
            x: self.x.clone(),
            y: self.y.iter().map(|v| *v / f).collect(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Fundamentals<T> {
    pub f: T,
    pub g: Mat<T>,
    pub g_inv: Mat<T>,
    /// `C_ijk = ¼ ∂³F²/∂y^i∂y^j∂y^k`.
    pub c: Arr3<T>,
    /// `A_ijk = F C_ijk`.
    pub a: Arr3<T>,
    /// Mean Cartan covector `I_k = g^{ij} C_ijk`.
    pub i: Vec<T>,
    pub tau: T,
    pub dtau_dx: Vec<T>,
    pub dtau_dy: Vec<T>,
}

/// g-orthonormal frame adapted to `y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frame<T> {
    /// `y / F`.
    pub e_n: Vec<T>,
    /// `b_α` with components `u^i_α`, α = 1..n−1.
    pub basis: Vec<Vec<T>>,
    /// Gram matrix of `(b_1, …, b_{n−1}, e_n)` under `g`.
    pub gram: Mat<T>,
}

impl<T: Real> Frame<T> {
    /// Contracts a covector with `b_α`.
    pub fn project(&self, alpha: usize, w: &[T]) -> T {
        self.basis[alpha].iter().zip(w).map(|(u, v)| *u * *v).sum()
    }
}

/// Degree-0 scalars whose vertical derivative can be taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarTag {
    Tau,
    S,
    E,
    K,
}

impl std::str::FromStr for ScalarTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(Self::Tau),
            "S" => Ok(Self::S),
            "e" => Ok(Self::E),
            "K" => Ok(Self::K),
            _ => Err(Error::UnknownTag {
                tag: s.to_string(),
                valid: "tau, S, e, K".into(),
            }),
        }
    }
}

pub fn fundamentals_at<T: Real>(metric: &MetricSpec, vol: &VolumeDensity, p: &PointDir<T>) -> Result<Fundamentals<T>> {
    Tower::new(metric, vol, &p.x, &p.y, DEFAULT_ORDER)?.fundamentals()
}

impl<T: Real> Tower<'_, T> {
    pub fn fundamentals(&self) -> Result<Fundamentals<T>> {
        let n = self.n;
        let f = self.f().value();
        let c = values3(self.cartan()?);
        let a = c.iter().map(|m| m.iter().map(|r| r.iter().map(|v| *v * f).collect()).collect()).collect();
        let tau = self.tau()?;
        Ok(Fundamentals {
            f,
            g: values2(self.g()),
            g_inv: values2(self.g_inv()),
            c,
            a,
            i: values(&self.mean_cartan()?),
            tau: tau.value(),
            dtau_dx: (0..n).map(|k| self.dx(tau, k).value()).collect(),
            dtau_dy: (0..n).map(|k| self.dy(tau, k).value()).collect(),
        })
    }

    pub fn frame(&self) -> Frame<T> {
        adapted_frame(&values2(self.g()), &self.y, self.f().value())
    }

    /// Jet of a degree-0 scalar.
    pub fn scalar_jet(&self, tag: ScalarTag) -> Result<crate::Jet<T>> {
        Ok(match tag {
            ScalarTag::Tau => self.tau()?.clone(),
            ScalarTag::S => self.s_big()? * &self.f().recip()?,
            ScalarTag::E => self.e_scalar()?.clone(),
            ScalarTag::K => self.scalar_flag_curvature()?,
        })
    }

    /// `s F u^i_α ∂φ/∂y^i` for the frozen frame sign `s`.
    pub fn vertical_derivative(&self, frame: &Frame<T>, tag: ScalarTag, alpha: usize, sign: i8) -> Result<T> {
        if alpha >= frame.basis.len() {
            return Err(Error::FrameIndex(alpha));
        }
        let phi = self.scalar_jet(tag)?;
        let grad: Vec<T> = (0..self.n).map(|k| self.dy(&phi, k).value()).collect();
        Ok(lit::<T>(sign as f64) * self.f().value() * frame.project(alpha, &grad))
    }
}

/// Gram–Schmidt under `g`, starting from `y / F` and then the coordinate axes
/// with the one most aligned to `y` dropped (ties go to the smaller index).
pub fn adapted_frame<T: Real>(g: &Mat<T>, y: &[T], f: T) -> Frame<T> {
    let n = y.len();
    let ip = |a: &[T], b: &[T]| -> T {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                s += g[i][j] * a[i] * b[j];
            }
        }
        s
    };
    let e_n: Vec<T> = y.iter().map(|v| *v / f).collect();
    let axis = |a: usize| -> Vec<T> { (0..n).map(|i| if i == a { T::one() } else { T::zero() }).collect() };
    let mut drop = 0;
    let mut best = T::neg_infinity();
    for a in 0..n {
        let e = axis(a);
        let score = ip(&e, &e_n).abs() / ip(&e, &e).sqrt();
        if score > best {
            best = score;
            drop = a;
        }
    }
    let mut done: Vec<Vec<T>> = vec![e_n.clone()];
    let mut basis = Vec::with_capacity(n - 1);
    for a in (0..n).filter(|&a| a != drop) {
        let mut v = axis(a);
        for b in &done {
            let c = ip(&v, b);
            for i in 0..n {
                v[i] -= c * b[i];
            }
        }
        let norm = ip(&v, &v).sqrt();
        assert!(norm > T::zero(), "degenerate Gram-Schmidt step");
        let v: Vec<T> = v.iter().map(|c| *c / norm).collect();
        done.push(v.clone());
        basis.push(v);
    }
    let all: Vec<&Vec<T>> = basis.iter().chain(std::iter::once(&e_n)).collect();
    let gram = all.iter().map(|a| all.iter().map(|b| ip(a, b)).collect()).collect();
    Frame { e_n, basis, gram }
}

pub fn adapted_frame_at<T: Real>(f: &Fundamentals<T>, p: &PointDir<T>) -> Frame<T> {
    adapted_frame(&f.g, &p.y, f.f)
}

/// Vertical derivative `s F u^i_α ∂φ/∂y^i` of a degree-0 scalar at `p`
/// (rescaled to the indicatrix first), with the frozen frame sign.
pub fn vertical_derivative<T: Real>(
    metric: &MetricSpec,
    vol: &VolumeDensity,
    p: &PointDir<T>,
    tag: ScalarTag,
    alpha: usize,
) -> Result<T> {
    let conv = Conventions::frozen()?;
    let p = p.normalized(metric)?;
    let tower = Tower::new(metric, vol, &p.x, &p.y, DEFAULT_ORDER)?;
    if tag == ScalarTag::K {
        let spread = flag_spread(&tower, 64)?;
        if spread.spread > crate::curvature::SCALAR_FLAG_TOL * (1.0 + spread.mean.abs()) {
            return Err(Error::NotScalarFlag(spread.spread));
        }
    }
    tower.vertical_derivative(&tower.frame(), tag, alpha, conv.s)
}
