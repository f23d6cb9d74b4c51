//! Curvature quantities: S-curvature, E-curvature and Berwald scalar
//! curvature, Landsberg curvature, spray and flag curvature, hh-curvatures of
//! the Chern and Berwald connections, and the frame scalars that enter the
//! first-order identities.
//!
//! Sign conventions that the formulas alone do not fix are measured once on a
//! non-Berwald Randers sample and then frozen; see [`Conventions`].

use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fundamentals::{Frame, PointDir};
use crate::jets::{Jet, DEFAULT_ORDER};
use crate::metricdef::{MetricSpec, VolumeDensity};
use crate::sampling::directions;
use crate::scalar::{lit, to_f64, Real};
use crate::tower::{values, values2, values3, values4, Arr3, Arr4, Connection, Mat, Tower};

/// Flag curvature is declared scalar when its spread over flags is at most
/// this times `1 + |mean|`.
pub const SCALAR_FLAG_TOL: f64 = 1e-6;

/// Frozen sign conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Conventions {
    /// Frame vertical vectors are `s F u^i_α ∂/∂y^i`.
    pub s: i8,
    /// `G^i_jk − Γ^i_jk = κ g^{il} L_ljk`.
    pub kappa: i8,
    /// Orientation of the raw hh-curvature formula: `y^j X^i_jkl y^l = ρ R^i_k`.
    /// Reported curvature tensors are multiplied by `ρ`.
    pub curvature_sign: i8,
    /// Frame mean Landsberg components are `J_α = λ u^k_α J_k`.
    pub landsberg_sign: i8,
}

impl Conventions {
    /// Calibrated conventions, computed on first use.
    pub fn frozen() -> Result<Self> {
        static FROZEN: OnceLock<Result<Conventions>> = OnceLock::new();
        FROZEN.get_or_init(Self::calibrate).clone()
    }

    /// Measures the conventions on the non-Berwald Randers metric
    /// `F = |y| + 0.3 x² y¹` at two sample points.
    pub fn calibrate() -> Result<Self> {
        let metric = MetricSpec::builtin("randers-generic")?;
        let vol = VolumeDensity::riemannian();
        let samples = [([0.3, 0.6], [0.8, -0.5]), ([-0.4, 0.2], [0.1, 1.3])];
        let mut found: Option<Conventions> = None;
        for (x, y) in samples {
            let p = PointDir::new(x.to_vec(), y.to_vec())?.normalized(&metric)?;
            let c = calibrate_at(&metric, &vol, &p)?;
            match found {
                None => found = Some(c),
                Some(prev) if prev != c => {
                    return Err(Error::Config(format!(
                        "sign calibration is inconsistent between samples: {prev:?} vs {c:?}"
                    )))
                }
                _ => {}
            }
        }
        Ok(found.unwrap())
    }
}

fn sign_of(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

fn calibrate_at(metric: &MetricSpec, vol: &VolumeDensity, p: &PointDir<f64>) -> Result<Conventions> {
    let t = Tower::new(metric, vol, &p.x, &p.y, DEFAULT_ORDER)?;
    let n = t.n;
    let frame = t.frame();

    // s and λ: the vertical derivative of S, the horizontal derivative of τ
    // and the mean Landsberg covector must satisfy s·a + b − λ·c = 0.
    let s_jet = t.s_big()? * &t.f().recip()?;
    let grad_s: Vec<f64> = (0..n).map(|k| t.dy(&s_jet, k).value()).collect();
    let dtau: Vec<f64> = values(&t.scalar_derivative(t.tau()?)?);
    let j = values(t.mean_landsberg()?);
    let terms: Vec<(f64, f64, f64)> = (0..n - 1)
        .map(|a| (t.f().value() * frame.project(a, &grad_s), frame.project(a, &dtau), frame.project(a, &j)))
        .collect();
    let scale = 1.0 + terms.iter().map(|(a, b, c)| a.abs().max(b.abs()).max(c.abs())).fold(0.0, f64::max);
    if terms.iter().all(|(_, _, c)| c.abs() < 1e-3) {
        return Err(Error::Config("calibration sample has vanishing mean Landsberg curvature".into()));
    }
    let mut fits = Vec::new();
    for s in [1i8, -1] {
        for lam in [1i8, -1] {
            let r = terms
                .iter()
                .map(|(a, b, c)| (s as f64 * a + b - lam as f64 * c).abs())
                .fold(0.0, f64::max);
            fits.push((s, lam, r / scale));
        }
    }
    let good: Vec<_> = fits.iter().filter(|f| f.2 <= 1e-8).collect();
    let bad_min = fits.iter().filter(|f| f.2 > 1e-8).map(|f| f.2).fold(f64::INFINITY, f64::min);
    if good.len() != 1 || bad_min < 1e-4 {
        return Err(Error::Config(format!(
            "frame sign calibration is not unique: residuals {fits:?}"
        )));
    }
    let (s, landsberg_sign, _) = *good[0];

    // κ from the difference of the two connections.
    let bw = values3(t.berwald()?);
    let ch = values3(t.chern()?);
    let l = values3(t.landsberg()?);
    let ginv = values2(t.g_inv());
    let mut dot = 0.0;
    let mut mmax: f64 = 0.0;
    let mut pairs = Vec::new();
    for i in 0..n {
        for jj in 0..n {
            for k in 0..n {
                let d = bw[i][jj][k] - ch[i][jj][k];
                let m: f64 = (0..n).map(|q| ginv[i][q] * l[q][jj][k]).sum();
                dot += d * m;
                mmax = mmax.max(m.abs());
                pairs.push((d, m));
            }
        }
    }
    let kappa = sign_of(dot);
    let kres = pairs.iter().map(|(d, m)| (d - kappa as f64 * m).abs()).fold(0.0, f64::max);
    if mmax < 1e-3 || kres > 1e-8 * (1.0 + mmax) {
        return Err(Error::Config(format!(
            "connection difference is not ±g^{{-1}}L (residual {kres:e}, |L| {mmax:e})"
        )));
    }

    // ρ from both hh-curvatures against the spray curvature.
    let r = values2(t.riemann()?);
    let rmax = r.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if rmax < 1e-3 {
        return Err(Error::Config("calibration sample has vanishing spray curvature".into()));
    }
    let mut signs = Vec::new();
    for which in [Connection::Chern, Connection::Berwald] {
        let x = values4(t.hh_curvature(which)?);
        let yxy = contract_y(&x, &p.y);
        let dot: f64 = (0..n).flat_map(|i| (0..n).map(move |k| (i, k))).map(|(i, k)| yxy[i][k] * r[i][k]).sum();
        let rho = sign_of(dot);
        let res = (0..n)
            .flat_map(|i| (0..n).map(move |k| (i, k)))
            .map(|(i, k)| (yxy[i][k] - rho as f64 * r[i][k]).abs())
            .fold(0.0, f64::max);
        if res > 1e-8 * (1.0 + rmax) {
            return Err(Error::Config(format!(
                "{which:?} hh-curvature does not reproduce ±R (residual {res:e})"
            )));
        }
        signs.push(rho);
    }
    if signs[0] != signs[1] {
        return Err(Error::Config("Chern and Berwald curvature orientations disagree".into()));
    }
    Ok(Conventions {
        s,
        kappa,
        curvature_sign: signs[0],
        landsberg_sign,
    })
}

/// `y^j X^i_jkl y^l`.
pub fn contract_y<T: Real>(x: &Arr4<T>, y: &[T]) -> Mat<T> {
    let n = y.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|k| {
                    let mut s = T::zero();
                    for j in 0..n {
                        for l in 0..n {
                            s += y[j] * x[i][j][k][l] * y[l];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SRoute {
    Distortion,
    Divergence,
}

/// Returns `𝐒` (degree 1); divide by `F` for the indicatrix value.
pub fn s_curvature<T: Real>(metric: &MetricSpec, vol: &VolumeDensity, p: &PointDir<T>, route: SRoute) -> Result<T> {
    let t = Tower::new(metric, vol, &p.x, &p.y, DEFAULT_ORDER)?;
    Ok(match route {
        SRoute::Distortion => t.s_big()?.value(),
        SRoute::Divergence => t.s_big_divergence()?.value(),
    })
}

/// `(E_jk, 𝖾)`.
pub fn e_and_e<T: Real>(metric: &MetricSpec, vol: &VolumeDensity, p: &PointDir<T>) -> Result<(Mat<T>, T)> {
    let t = Tower::new(metric, vol, &p.x, &p.y, DEFAULT_ORDER)?;
    Ok((values2(t.e_tensor()?), t.e_scalar()?.value()))
}

/// `(L_jkl, J_k)`.
pub fn landsberg<T: Real>(metric: &MetricSpec, p: &PointDir<T>) -> Result<(Arr3<T>, Vec<T>)> {
    let vol = VolumeDensity::default();
    let t = Tower::new(metric, &vol, &p.x, &p.y, DEFAULT_ORDER)?;
    Ok((values3(t.landsberg()?), values(t.mean_landsberg()?)))
}

#[derive(Debug, Clone, Serialize)]
pub struct FlagCurvature<T> {
    /// Spray curvature `R^i_k`.
    pub r: Mat<T>,
    /// `R_ik = g_ij R^j_k`.
    pub r_lower: Mat<T>,
    pub ricci: T,
    /// `K(y, V)` when a transverse vector was supplied.
    pub k: Option<T>,
}

pub fn riemann_flag<T: Real>(metric: &MetricSpec, p: &PointDir<T>, v: Option<&[T]>) -> Result<FlagCurvature<T>> {
    let vol = VolumeDensity::default();
    let t = Tower::new(metric, &vol, &p.x, &p.y, DEFAULT_ORDER)?;
    let r = values2(t.riemann()?);
    let r_lower = lower(&values2(t.g()), &r);
    let k = v.map(|v| flag_curvature(&t, &r_lower, v)).transpose()?;
    Ok(FlagCurvature {
        r,
        r_lower,
        ricci: t.ricci()?.value(),
        k,
    })
}

pub(crate) fn lower<T: Real>(g: &Mat<T>, r: &Mat<T>) -> Mat<T> {
    let n = g.len();
    (0..n)
        .map(|i| (0..n).map(|k| (0..n).map(|j| g[i][j] * r[j][k]).sum()).collect())
        .collect()
}

/// `K(y, V) = V^i R_ik V^k / (F² h(V, V))`.
pub(crate) fn flag_curvature<T: Real>(t: &Tower<'_, T>, r_lower: &Mat<T>, v: &[T]) -> Result<T> {
    let n = t.n;
    let g = values2(t.g());
    let y = &t.y;
    let f2 = t.f2().value();
    let gvv: T = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| g[i][j] * v[i] * v[j]).sum();
    let gyv: T = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| g[i][j] * y[i] * v[j]).sum();
    let h = gvv - gyv * gyv / f2;
    // Flags within about half a degree of the flagpole lose digits to cancellation.
    if h <= lit::<T>(1e-4) * gvv {
        return Err(Error::DegenerateFlag);
    }
    let num: T = (0..n)
        .flat_map(|i| (0..n).map(move |k| (i, k)))
        .map(|(i, k)| v[i] * r_lower[i][k] * v[k])
        .sum();
    Ok(num / (f2 * h))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FlagSpread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub spread: f64,
    pub flags: usize,
}

/// Flag curvature over `count` transverse directions.
pub fn flag_spread<T: Real>(t: &Tower<'_, T>, count: usize) -> Result<FlagSpread> {
    let n = t.n;
    let r_lower = lower(&values2(t.g()), &values2(t.riemann()?));
    let mut ks = Vec::with_capacity(count);
    for d in directions(n, 2 * count)? {
        let v: Vec<T> = d.iter().map(|c| lit::<T>(*c)).collect();
        match flag_curvature(t, &r_lower, &v) {
            Ok(k) => ks.push(to_f64(k)),
            Err(Error::DegenerateFlag) => {}
            Err(e) => return Err(e),
        }
        if ks.len() == count {
            break;
        }
    }
    if ks.is_empty() {
        return Err(Error::DegenerateFlag);
    }
    let min = ks.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(FlagSpread {
        mean: ks.iter().sum::<f64>() / ks.len() as f64,
        min,
        max,
        spread: max - min,
        flags: ks.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HhCurvature<T> {
    /// Chern hh-curvature, oriented so that `y^j R^i_jkl y^l = R^i_k`.
    pub r_chern: Arr4<T>,
    /// Berwald hh-curvature, same orientation.
    pub r_berwald: Arr4<T>,
    /// `R^m_mkl`.
    pub tr_r: Mat<T>,
    pub tr_r_berwald: Mat<T>,
    /// `Σ̄_kl = 2(R̃^m_mkl − R^m_mkl)`.
    pub sigma_bar: Mat<T>,
}

pub fn chern_berwald_hh<T: Real>(metric: &MetricSpec, p: &PointDir<T>) -> Result<HhCurvature<T>> {
    let vol = VolumeDensity::default();
    Tower::new(metric, &vol, &p.x, &p.y, DEFAULT_ORDER)?.hh(Conventions::frozen()?)
}

impl<T: Real> Tower<'_, T> {
    /// Oriented hh-trace `ρ X^m_mkl` as jets.
    pub fn oriented_trace(&self, which: Connection, conv: Conventions) -> Result<Mat<Jet<T>>> {
        let rho = lit::<T>(conv.curvature_sign as f64);
        Ok(self
            .hh_trace(which)?
            .into_iter()
            .map(|r| r.into_iter().map(|j| j.scale(rho)).collect())
            .collect())
    }

    pub fn hh(&self, conv: Conventions) -> Result<HhCurvature<T>> {
        let rho = lit::<T>(conv.curvature_sign as f64);
        let orient = |x: Arr4<T>| -> Arr4<T> {
            x.into_iter()
                .map(|a| a.into_iter().map(|b| b.into_iter().map(|c| c.into_iter().map(|v| v * rho).collect()).collect()).collect())
                .collect()
        };
        let r_chern = orient(values4(self.hh_curvature(Connection::Chern)?));
        let r_berwald = orient(values4(self.hh_curvature(Connection::Berwald)?));
        let tr_r = values2(&self.oriented_trace(Connection::Chern, conv)?);
        let tr_r_berwald = values2(&self.oriented_trace(Connection::Berwald, conv)?);
        let two = lit::<T>(2.0);
        let sigma_bar = tr_r
            .iter()
            .zip(&tr_r_berwald)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| two * (*q - *p)).collect())
            .collect();
        Ok(HhCurvature {
            r_chern,
            r_berwald,
            tr_r,
            tr_r_berwald,
            sigma_bar,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureBundle<T> {
    /// `𝐒` (degree 1).
    pub s_big: T,
    /// `𝐒 / F`.
    pub s: T,
    pub e: Mat<T>,
    pub e_scalar: T,
    pub l: Arr3<T>,
    pub j: Vec<T>,
    pub r: Mat<T>,
    pub r_lower: Mat<T>,
    pub ricci: T,
    pub hh: HhCurvature<T>,
}

pub fn curvature_bundle<T: Real>(metric: &MetricSpec, vol: &VolumeDensity, p: &PointDir<T>) -> Result<CurvatureBundle<T>> {
    let t = Tower::new(metric, vol, &p.x, &p.y, DEFAULT_ORDER)?;
    t.bundle(Conventions::frozen()?)
}

impl<T: Real> Tower<'_, T> {
    pub fn bundle(&self, conv: Conventions) -> Result<CurvatureBundle<T>> {
        let s_big = self.s_big()?.value();
        let r = values2(self.riemann()?);
        Ok(CurvatureBundle {
            s_big,
            s: s_big / self.f().value(),
            e: values2(self.e_tensor()?),
            e_scalar: self.e_scalar()?.value(),
            l: values3(self.landsberg()?),
            j: values(self.mean_landsberg()?),
            r_lower: lower(&values2(self.g()), &r),
            r,
            ricci: self.ricci()?.value(),
            hh: self.hh(conv)?,
        })
    }
}

/// Frame scalars at one point of the indicatrix, for each `α = 1..n−1`.
#[derive(Debug, Clone, Serialize)]
pub struct FrameTerms<T> {
    /// `S_{,α}`.
    pub s_comma: Vec<T>,
    /// `τ_{|α}`.
    pub tau_bar: Vec<T>,
    /// `J_α`.
    pub j: Vec<T>,
    /// `S_{|α}`.
    pub s_bar: Vec<T>,
    /// `S_{,α|n}` through the Chern connection.
    pub s_comma_bar_n: Vec<T>,
    /// `S_{,α|n}` through the Berwald connection.
    pub s_comma_bar_n_berwald: Vec<T>,
    /// `J_{α|n}`.
    pub j_bar_n: Vec<T>,
    /// `(tr R)_{αn}`.
    pub tr_r: Vec<T>,
    /// `K_{,α}`, present only when the flag curvature is scalar at this point.
    pub k_comma: Option<Vec<T>>,
}

pub fn frame_identity_terms<T: Real>(metric: &MetricSpec, vol: &VolumeDensity, p: &PointDir<T>) -> Result<FrameTerms<T>> {
    let p = p.normalized(metric)?;
    let t = Tower::new(metric, vol, &p.x, &p.y, DEFAULT_ORDER)?;
    t.frame_terms(&t.frame(), Conventions::frozen()?)
}

impl<T: Real> Tower<'_, T> {
    /// Frame scalars; the point should lie on the indicatrix.
    pub fn frame_terms(&self, frame: &Frame<T>, conv: Conventions) -> Result<FrameTerms<T>> {
        let n = self.n;
        let f = self.f().value();
        let s = lit::<T>(conv.s as f64);
        let lam = lit::<T>(conv.landsberg_sign as f64);
        let y = &self.y;
        let along = |m: &Mat<Jet<T>>| -> Vec<T> {
            (0..n)
                .map(|k| (0..n).map(|q| m[k][q].value() * y[q]).sum::<T>() / f)
                .collect()
        };
        let proj = |w: &[T]| -> Vec<T> { (0..n - 1).map(|a| frame.project(a, w)).collect() };
        let scaled = |v: Vec<T>, c: T| -> Vec<T> { v.into_iter().map(|x| x * c).collect() };

        let f_jet = self.f().clone();
        let s_jet = self.s_big()? * &f_jet.recip()?;
        let grad_s: Vec<T> = (0..n).map(|k| self.dy(&s_jet, k).value() * f).collect();
        let tau_h = values(&self.scalar_derivative(self.tau()?)?);
        let j = values(self.mean_landsberg()?);
        let s_h = values(&self.scalar_derivative(&s_jet)?);
        // T_k = F ∂S/∂y^k, the covector behind S_{,α}.
        let tk: Vec<Jet<T>> = (0..n).map(|k| &f_jet * &self.dy(&s_jet, k)).collect();
        let tk_ch = along(&self.covector_derivative(&tk, Connection::Chern)?);
        let tk_bw = along(&self.covector_derivative(&tk, Connection::Berwald)?);
        let jd = along(&self.covector_derivative(self.mean_landsberg()?, Connection::Chern)?);
        let tr = self.oriented_trace(Connection::Chern, conv)?;
        let tr_n = along(&tr);

        let k_comma = if flag_spread(self, 64)
            .map(|fs| fs.spread <= SCALAR_FLAG_TOL * (1.0 + fs.mean.abs()))
            .unwrap_or(false)
        {
            let kj = self.scalar_flag_curvature()?;
            let grad_k: Vec<T> = (0..n).map(|k| self.dy(&kj, k).value()).collect();
            Some(scaled(proj(&grad_k), s * f))
        } else {
            None
        };
        Ok(FrameTerms {
            s_comma: scaled(proj(&grad_s), s),
            tau_bar: proj(&tau_h),
            j: scaled(proj(&j), lam),
            s_bar: proj(&s_h),
            s_comma_bar_n: scaled(proj(&tk_ch), s),
            s_comma_bar_n_berwald: scaled(proj(&tk_bw), s),
            j_bar_n: scaled(proj(&jd), lam),
            tr_r: proj(&tr_n),
            k_comma,
        })
    }
}
