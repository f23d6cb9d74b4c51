//! Finite-difference oracle.
//!
//! Plain evaluations of `F²`, `G` and `𝐒` built from nested Richardson
//! central differences of `F` alone, in double-double arithmetic. Nothing
//! here touches the jet engine, so agreement with the jets certifies both.
//!
//! Nested differences lose roughly `1/h` of precision per level; `𝐒` already
//! sits three levels deep, and its third derivatives add three more. Double
//! precision cannot absorb that, double-double can.

use std::cell::RefCell;
use std::collections::HashMap;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::Serialize;
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::fundamentals::PointDir;
use crate::jets::DEFAULT_ORDER;
use crate::metricdef::expr::{EvalError, ExprScalar};
use crate::metricdef::{MetricSpec, VolumeDensity};
use crate::tower::Tower;

/// Double-double scalar. Addition, multiplication and `sqrt` come from
/// twofloat; division is redone here because twofloat's `a / b` forms the
/// residual `1 − b·(1/b)` without a fused multiply-add and keeps only about
/// double precision.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Dd(TwoFloat);

impl Dd {
    fn hi(self) -> f64 {
        self.0.hi()
    }
    fn lo(self) -> f64 {
        self.0.lo()
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        Dd(self.0 + o.0)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        Dd(self.0 - o.0)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        Dd(self.0 * o.0)
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    fn mul(self, o: f64) -> Dd {
        Dd(self.0 * o)
    }
}

impl Add<f64> for Dd {
    type Output = Dd;
    fn add(self, o: f64) -> Dd {
        Dd(self.0 + o)
    }
}

impl Sub<f64> for Dd {
    type Output = Dd;
    fn sub(self, o: f64) -> Dd {
        Dd(self.0 - o)
    }
}

/// Long division: three quotient digits, each correcting the remainder
/// through an exact product.
impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi() / b.hi();
        let r = self.0 - b.0 * q1;
        let q2 = r.hi() / b.hi();
        let r = r - b.0 * q2;
        let q3 = r.hi() / b.hi();
        Dd(TwoFloat::new_add(q1, q2) + q3)
    }
}

impl Div<f64> for Dd {
    type Output = Dd;
    fn div(self, o: f64) -> Dd {
        self / dd(o)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd(-self.0)
    }
}

impl AddAssign for Dd {
    fn add_assign(&mut self, o: Dd) {
        *self = *self + o;
    }
}

impl SubAssign for Dd {
    fn sub_assign(&mut self, o: Dd) {
        *self = *self - o;
    }
}

/// Default step for every differencing level.
pub const DEFAULT_STEP: f64 = 1e-3;

fn dd(v: f64) -> Dd {
    Dd(TwoFloat::from(v))
}

/// `e^a` to full double-double precision. twofloat's own `exp` stops near
/// `1e-18` relative, which nested differences turn into noise.
fn dd_exp(a: Dd) -> Dd {
    let hi = a.hi();
    if hi > 709.0 {
        return dd(f64::INFINITY);
    }
    if hi < -745.0 {
        return dd(0.0);
    }
    let k = (hi / std::f64::consts::LN_2).round();
    let r = a - Dd(twofloat::consts::LN_2) * k;
    // expm1 of r / 2^5 by Taylor, then (1 + e)² − 1 = e(2 + e) five times.
    let s = r * (1.0 / 32.0);
    let mut term = s;
    let mut e = s;
    for i in 2..=18 {
        term = term * s / i as f64;
        e += term;
    }
    for _ in 0..5 {
        e = e * (e + 2.0);
    }
    (e + 1.0) * 2f64.powi(k as i32)
}

/// Natural log by two Newton steps on `dd_exp` from the f64 estimate.
fn dd_ln(a: Dd) -> Dd {
    let mut y = dd(a.hi().ln());
    for _ in 0..2 {
        y = y + a * dd_exp(-y) - 1.0;
    }
    y
}

fn dd_powi(a: Dd, e: i32) -> Dd {
    let mut base = a;
    let mut k = e.unsigned_abs();
    let mut acc = dd(1.0);
    while k > 0 {
        if k & 1 == 1 {
            acc = acc * base;
        }
        base = base * base;
        k >>= 1;
    }
    if e < 0 {
        dd(1.0) / acc
    } else {
        acc
    }
}

impl ExprScalar for Dd {
    fn lift(&self, v: f64) -> Self {
        dd(v)
    }
    fn value_f64(&self) -> f64 {
        self.hi() + self.lo()
    }
    fn sqrt_checked(&self) -> Result<Self, EvalError> {
        if self.hi() > 0.0 {
            Ok(Dd(self.0.sqrt()))
        } else {
            Err(EvalError::Domain { func: "sqrt", value: self.hi() })
        }
    }
    fn exp_checked(&self) -> Result<Self, EvalError> {
        Ok(dd_exp(*self))
    }
    fn ln_checked(&self) -> Result<Self, EvalError> {
        if self.hi() > 0.0 {
            Ok(dd_ln(*self))
        } else {
            Err(EvalError::Domain { func: "log", value: self.hi() })
        }
    }
    fn powf_checked(&self, e: f64) -> Result<Self, EvalError> {
        if self.hi() > 0.0 {
            Ok(dd_exp(dd_ln(*self) * e))
        } else {
            Err(EvalError::Domain { func: "pow", value: self.hi() })
        }
    }
    fn powi_checked(&self, e: i32) -> Result<Self, EvalError> {
        if e < 0 && self.hi() == 0.0 {
            return Err(EvalError::Domain { func: "pow", value: 0.0 });
        }
        Ok(dd_powi(*self, e))
    }
    // Trigonometric terms keep twofloat's precision; no zoo metric uses them.
    fn sin_checked(&self) -> Result<Self, EvalError> {
        Ok(Dd(self.0.sin()))
    }
    fn cos_checked(&self) -> Result<Self, EvalError> {
        Ok(Dd(self.0.cos()))
    }
}

/// Central stencils with an `O(h²)` even error expansion: `(offset, weight)`,
/// to be divided by `h^order`.
fn stencil(order: u8) -> &'static [(i32, f64)] {
    match order {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        4 => &[(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
        _ => panic!("no stencil for order {order}"),
    }
}

/// `∂^α f(z)` by a tensor-product stencil at steps `h` and `h/2`, Richardson
/// combined. `eval` receives integer offsets in units of `h/2`.
fn richardson<E>(alpha: &[u8], h: f64, width: usize, mut eval: E) -> Result<Vec<Dd>>
where
    E: FnMut(&[i32]) -> Result<Vec<Dd>>,
{
    let active: Vec<usize> = (0..alpha.len()).filter(|&v| alpha[v] > 0).collect();
    let total: i32 = alpha.iter().map(|&a| a as i32).sum();
    let mut at_step = |unit: i32, step: f64| -> Result<Vec<Dd>> {
        let mut acc = vec![dd(0.0); width];
        let mut offset = vec![0i32; alpha.len()];
        let mut pick = vec![0usize; active.len()];
        loop {
            let mut w = 1.0;
            for (slot, &v) in active.iter().enumerate() {
                let (o, c) = stencil(alpha[v])[pick[slot]];
                offset[v] = o * unit;
                w *= c;
            }
            let vals = eval(&offset)?;
            for (a, v) in acc.iter_mut().zip(vals) {
                *a += v * w;
            }
            // Odometer over the active stencils.
            let mut slot = 0;
            loop {
                if slot == active.len() {
                    let scale = step.powi(total);
                    return Ok(acc.into_iter().map(|a| a / scale).collect());
                }
                pick[slot] += 1;
                if pick[slot] < stencil(alpha[active[slot]]).len() {
                    break;
                }
                pick[slot] = 0;
                slot += 1;
            }
        }
    };
    if total == 0 {
        return at_step(2, h);
    }
    let coarse = at_step(2, h)?;
    let fine = at_step(1, h / 2.0)?;
    Ok(fine.iter().zip(&coarse).map(|(f, c)| (*f * 4.0 - *c) / 3.0).collect())
}

fn shifted(z: &[Dd], offset: &[i32], half_step: f64) -> Vec<Dd> {
    z.iter().zip(offset).map(|(v, &o)| *v + half_step * o as f64).collect()
}

/// Quantities the oracle can differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FdQuantity {
    /// `F²` (one component).
    F2,
    /// Spray coefficients `G^i` (`n` components).
    Spray,
    /// `𝐒` (one component).
    SBig,
}

impl FdQuantity {
    pub const ALL: [FdQuantity; 3] = [FdQuantity::F2, FdQuantity::Spray, FdQuantity::SBig];

    pub fn label(self) -> &'static str {
        match self {
            FdQuantity::F2 => "F2",
            FdQuantity::Spray => "G",
            FdQuantity::SBig => "S",
        }
    }
}

/// Constants recomputed through the difference path.
#[derive(Debug, Clone, Serialize)]
pub struct FdConstants {
    pub f: f64,
    /// `𝐒 / F`.
    pub s: f64,
    /// `𝖾 = 2F g^{jk} E_jk` with `E_jk = ½ ∂²𝐒/∂y^j∂y^k`.
    pub e_scalar: f64,
    /// `R^m_m / ((n − 1) F²)`, the flag curvature when it is scalar.
    pub k_ricci: f64,
    pub spray: Vec<f64>,
}

pub struct FdOracle<'a> {
    metric: &'a MetricSpec,
    vol: &'a VolumeDensity,
    step: f64,
    ln_sigma: RefCell<HashMap<Vec<u64>, Dd>>,
}

impl<'a> FdOracle<'a> {
    pub fn new(metric: &'a MetricSpec, vol: &'a VolumeDensity) -> Self {
        Self {
            metric,
            vol,
            step: DEFAULT_STEP,
            ln_sigma: RefCell::new(HashMap::new()),
        }
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.step = h;
        self
    }

    fn n(&self) -> usize {
        self.metric.dim
    }

    fn f(&self, z: &[Dd]) -> Result<Dd> {
        let n = self.n();
        let f = self.metric.eval_f(&z[..n], &z[n..])?;
        if !(f.hi() > 0.0) {
            return Err(Error::NonPositiveF(f.hi()));
        }
        Ok(f)
    }

    fn f2(&self, z: &[Dd]) -> Result<Dd> {
        let f = self.f(z)?;
        Ok(f * f)
    }

    fn d_f2(&self, z: &[Dd], alpha: &[u8]) -> Result<Dd> {
        let hh = self.step / 2.0;
        Ok(richardson(alpha, self.step, 1, |o| Ok(vec![self.f2(&shifted(z, o, hh))?]))?[0])
    }

    fn unit(&self, a: usize, b: Option<usize>) -> Vec<u8> {
        let mut alpha = vec![0u8; 2 * self.n()];
        alpha[a] += 1;
        if let Some(b) = b {
            alpha[b] += 1;
        }
        alpha
    }

    fn metric_tensor(&self, z: &[Dd]) -> Result<Vec<Vec<Dd>>> {
        let n = self.n();
        let mut g = vec![vec![dd(0.0); n]; n];
        for i in 0..n {
            for j in i..n {
                let v = self.d_f2(z, &self.unit(n + i, Some(n + j)))? * 0.5;
                g[i][j] = v;
                g[j][i] = v;
            }
        }
        Ok(g)
    }

    fn spray(&self, z: &[Dd]) -> Result<Vec<Dd>> {
        let n = self.n();
        let g = self.metric_tensor(z)?;
        let (ginv, _) = invert_small(&g)?;
        let mut rhs = vec![dd(0.0); n];
        for (l, r) in rhs.iter_mut().enumerate() {
            let mut acc = -self.d_f2(z, &self.unit(l, None))?;
            for k in 0..n {
                acc += z[n + k] * self.d_f2(z, &self.unit(k, Some(n + l)))?;
            }
            *r = acc;
        }
        Ok((0..n)
            .map(|i| (0..n).map(|l| ginv[i][l] * rhs[l]).fold(dd(0.0), |a, b| a + b) * 0.25)
            .collect())
    }

    fn ln_sigma(&self, x: &[Dd]) -> Result<Dd> {
        let key: Vec<u64> = x.iter().flat_map(|v| [v.hi().to_bits(), v.lo().to_bits()]).collect();
        if let Some(v) = self.ln_sigma.borrow().get(&key) {
            return Ok(*v);
        }
        let v = dd_ln(self.vol.sigma_value(self.metric, x)?);
        self.ln_sigma.borrow_mut().insert(key, v);
        Ok(v)
    }

    fn tau(&self, z: &[Dd]) -> Result<Dd> {
        let (_, det) = invert_small(&self.metric_tensor(z)?)?;
        Ok(dd_ln(det) * 0.5 - self.ln_sigma(&z[..self.n()])?)
    }

    fn s_big(&self, z: &[Dd]) -> Result<Dd> {
        let n = self.n();
        let hh = self.step / 2.0;
        let g = self.spray(z)?;
        let mut s = dd(0.0);
        for k in 0..n {
            let dx = richardson(&self.unit(k, None), self.step, 1, |o| Ok(vec![self.tau(&shifted(z, o, hh))?]))?[0];
            let dy = richardson(&self.unit(n + k, None), self.step, 1, |o| Ok(vec![self.tau(&shifted(z, o, hh))?]))?[0];
            s += z[n + k] * dx - g[k] * dy * 2.0;
        }
        Ok(s)
    }

    fn eval(&self, q: FdQuantity, z: &[Dd]) -> Result<Vec<Dd>> {
        match q {
            FdQuantity::F2 => Ok(vec![self.f2(z)?]),
            FdQuantity::Spray => self.spray(z),
            FdQuantity::SBig => Ok(vec![self.s_big(z)?]),
        }
    }

    fn width(&self, q: FdQuantity) -> usize {
        match q {
            FdQuantity::Spray => self.n(),
            _ => 1,
        }
    }

    fn point(&self, x: &[f64], y: &[f64]) -> Result<Vec<Dd>> {
        let n = self.n();
        if x.len() != n || y.len() != n {
            return Err(Error::InvalidMetric(format!("point and direction must have {n} components")));
        }
        // Every stencil point, inner levels included, stays within 8h of x.
        let reach = 8.0 * self.step;
        for k in 0..n {
            for s in [-reach, reach] {
                let mut xs = x.to_vec();
                xs[k] += s;
                self.metric.check_point(&xs)?;
            }
        }
        Ok(x.iter().chain(y).map(|v| dd(*v)).collect())
    }

    /// Plain value of a quantity.
    pub fn value(&self, q: FdQuantity, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let z = self.point(x, y)?;
        Ok(self.eval(q, &z)?.iter().map(|v| v.value_f64()).collect())
    }

    /// `∂^α` of a quantity over the `2n` phase-space variables (x first).
    pub fn derivative(&self, q: FdQuantity, x: &[f64], y: &[f64], alpha: &[u8]) -> Result<Vec<f64>> {
        Ok(self.all_derivatives_of(q, x, y, &[alpha.to_vec()])?.remove(0).1)
    }

    /// Every derivative of order `≤ max_order`, sharing evaluations.
    pub fn all_derivatives(&self, q: FdQuantity, x: &[f64], y: &[f64], max_order: usize) -> Result<Vec<(Vec<u8>, Vec<f64>)>> {
        self.all_derivatives_of(q, x, y, &multi_indices(2 * self.n(), max_order))
    }

    fn all_derivatives_of(
        &self,
        q: FdQuantity,
        x: &[f64],
        y: &[f64],
        alphas: &[Vec<u8>],
    ) -> Result<Vec<(Vec<u8>, Vec<f64>)>> {
        if let Some(a) = alphas.iter().find(|a| a.len() != 2 * self.n() || a.iter().map(|&v| v as usize).sum::<usize>() > 4) {
            return Err(Error::InvalidMetric(format!("unsupported derivative multi-index {a:?}")));
        }
        let z = self.point(x, y)?;
        let hh = self.step / 2.0;
        let width = self.width(q);
        let mut memo: HashMap<Vec<i32>, Vec<Dd>> = HashMap::new();
        alphas
            .iter()
            .map(|alpha| {
                let d = richardson(alpha, self.step, width, |o| {
                    if let Some(v) = memo.get(o) {
                        return Ok(v.clone());
                    }
                    let v = self.eval(q, &shifted(&z, o, hh))?;
                    memo.insert(o.to_vec(), v.clone());
                    Ok(v)
                })?;
                Ok((alpha.clone(), d.iter().map(|v| v.value_f64()).collect()))
            })
            .collect()
    }

    /// `𝐒/F`, `𝖾` and the Ricci-based flag curvature through differences only.
    pub fn constants(&self, x: &[f64], y: &[f64]) -> Result<FdConstants> {
        let n = self.n();
        let z = self.point(x, y)?;
        let hh = self.step / 2.0;
        let f = self.f(&z)?;
        let g = self.metric_tensor(&z)?;
        let (ginv, _) = invert_small(&g)?;

        let mut memo: HashMap<Vec<i32>, Vec<Dd>> = HashMap::new();
        let mut s_at = |o: &[i32]| -> Result<Vec<Dd>> {
            if let Some(v) = memo.get(o) {
                return Ok(v.clone());
            }
            let v = vec![self.s_big(&shifted(&z, o, hh))?];
            memo.insert(o.to_vec(), v.clone());
            Ok(v)
        };
        let s = s_at(&vec![0; 2 * n])?[0];
        let mut trace = dd(0.0);
        for j in 0..n {
            for k in 0..n {
                let e_jk = richardson(&self.unit(n + j, Some(n + k)), self.step, 1, &mut s_at)?[0] * 0.5;
                trace += ginv[j][k] * e_jk;
            }
        }

        let mut g_memo: HashMap<Vec<i32>, Vec<Dd>> = HashMap::new();
        let mut d_spray = |alpha: &[u8]| -> Result<Vec<Dd>> {
            richardson(alpha, self.step, n, |o| {
                if let Some(v) = g_memo.get(o) {
                    return Ok(v.clone());
                }
                let v = self.spray(&shifted(&z, o, hh))?;
                g_memo.insert(o.to_vec(), v.clone());
                Ok(v)
            })
        };
        let spray = d_spray(&vec![0; 2 * n])?;
        // R^i_k = 2∂_k G^i − y^j ∂_j N^i_k + 2G^j ∂_{y^k}∂_{y^j} G^i − N^i_j N^j_k, traced.
        let mut nl = vec![vec![dd(0.0); n]; n];
        for k in 0..n {
            let col = d_spray(&self.unit(n + k, None))?;
            for i in 0..n {
                nl[i][k] = col[i];
            }
        }
        let mut ric = dd(0.0);
        for k in 0..n {
            ric += d_spray(&self.unit(k, None))?[k] * 2.0;
            for j in 0..n {
                ric -= z[n + j] * d_spray(&self.unit(j, Some(n + k)))?[k];
                ric += spray[j] * d_spray(&self.unit(n + k, Some(n + j)))?[k] * 2.0;
                ric -= nl[k][j] * nl[j][k];
            }
        }
        let f2 = f * f;
        Ok(FdConstants {
            f: f.value_f64(),
            s: (s / f).value_f64(),
            e_scalar: (f * trace * 2.0).value_f64(),
            k_ricci: (ric / (f2 * (n as f64 - 1.0))).value_f64(),
            spray: spray.iter().map(|v| v.value_f64()).collect(),
        })
    }
}

/// Cofactor inverse and determinant for `n ≤ 3`.
fn invert_small(m: &[Vec<Dd>]) -> Result<(Vec<Vec<Dd>>, Dd)> {
    let n = m.len();
    let (adj, det) = match n {
        2 => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            (vec![vec![m[1][1], -m[0][1]], vec![-m[1][0], m[0][0]]], det)
        }
        3 => {
            let c = |i: usize, j: usize| {
                let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
                let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
                m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
            };
            let cof: Vec<Vec<Dd>> = (0..3).map(|i| (0..3).map(|j| c(i, j)).collect()).collect();
            let det = m[0][0] * cof[0][0] + m[0][1] * cof[0][1] + m[0][2] * cof[0][2];
            ((0..3).map(|i| (0..3).map(|j| cof[j][i]).collect()).collect(), det)
        }
        _ => return Err(Error::InvalidMetric(format!("the difference oracle supports n = 2, 3; got {n}"))),
    };
    if !(det.hi().abs() > 0.0) {
        return Err(Error::Singular);
    }
    Ok((adj.into_iter().map(|r| r.into_iter().map(|v| v / det).collect()).collect(), det))
}

/// All multi-indices in `vars` variables with total order `≤ max_order`,
/// graded by order.
pub fn multi_indices(vars: usize, max_order: usize) -> Vec<Vec<u8>> {
    fn fill(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, var: usize, left: usize) {
        if var == cur.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for a in (0..=left).rev() {
            cur[var] = a as u8;
            fill(out, cur, var + 1, left - a);
        }
        cur[var] = 0;
    }
    let mut out = Vec::new();
    for order in 0..=max_order {
        fill(&mut out, &mut vec![0; vars], 0, order);
    }
    out
}

/// One spec-level oracle call: `∂^α` of a quantity at `p`.
pub fn fd_oracle(
    metric: &MetricSpec,
    vol: &VolumeDensity,
    quantity: FdQuantity,
    p: &PointDir<f64>,
    alpha: &[u8],
) -> Result<Vec<f64>> {
    FdOracle::new(metric, vol).derivative(quantity, &p.x, &p.y, alpha)
}

/// Largest jet-versus-difference mismatch for one quantity and order.
#[derive(Debug, Clone, Serialize)]
pub struct DerivativeCheck {
    pub quantity: FdQuantity,
    pub order: usize,
    pub max_residual: f64,
    /// Largest jet derivative of this quantity and order.
    pub scale: f64,
    pub worst_index: Vec<u8>,
}

impl DerivativeCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_residual <= tol * (1.0 + self.scale)
    }
}

/// Compares every derivative of `F²`, `G` and `𝐒` up to `max_order` (at most
/// 3) between the jet tower and the difference oracle.
pub fn compare_with_jets(
    metric: &MetricSpec,
    vol: &VolumeDensity,
    p: &PointDir<f64>,
    max_order: usize,
) -> Result<Vec<DerivativeCheck>> {
    if max_order > 3 {
        return Err(Error::OrderTooLow {
            needed: DEFAULT_ORDER + max_order - 3,
            have: DEFAULT_ORDER,
            what: "jets of S beyond third derivatives",
        });
    }
    let tower = Tower::new(metric, vol, &p.x, &p.y, DEFAULT_ORDER)?;
    let oracle = FdOracle::new(metric, vol);
    let mut out = Vec::new();
    for q in FdQuantity::ALL {
        let jets = match q {
            FdQuantity::F2 => vec![tower.f2().clone()],
            FdQuantity::Spray => tower.spray()?.clone(),
            FdQuantity::SBig => vec![tower.s_big()?.clone()],
        };
        let fd = oracle.all_derivatives(q, &p.x, &p.y, max_order)?;
        for order in 0..=max_order {
            let mut check = DerivativeCheck {
                quantity: q,
                order,
                max_residual: 0.0,
                scale: 0.0,
                worst_index: Vec::new(),
            };
            for (alpha, vals) in fd.iter().filter(|(a, _)| a.iter().map(|&v| v as usize).sum::<usize>() == order) {
                for (jet, v) in jets.iter().zip(vals) {
                    let exact = jet.extract_partial(alpha)?;
                    check.scale = check.scale.max(exact.abs());
                    let r = (exact - v).abs();
                    if r > check.max_residual || check.worst_index.is_empty() {
                        check.max_residual = check.max_residual.max(r);
                        check.worst_index = alpha.clone();
                    }
                }
            }
            out.push(check);
        }
    }
    Ok(out)
}

/// Sectional curvature `g(R(u,v)v, u) / (g(u,u)g(v,v) − g(u,v)²)` of the base
/// matrix of a Riemannian (or Randers `α`) metric, from Christoffel symbols
/// whose x-derivatives are taken by differences.
pub fn classical_sectional_curvature(metric: &MetricSpec, x: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
    let n = metric.dim;
    // Only base-matrix evaluations are differenced, so double-double leaves
    // room for a much finer step than the phase-space oracle uses.
    let h = 1e-5;
    for k in 0..n {
        for s in [-4.0 * h, 4.0 * h] {
            let mut xs = x.to_vec();
            xs[k] += s;
            metric.check_point(&xs)?;
        }
    }
    let z: Vec<Dd> = x.iter().map(|v| dd(*v)).collect();
    let base = |o: &[i32]| -> Result<Vec<Dd>> {
        let xs = shifted(&z, o, h / 2.0);
        let m = metric
            .base_matrix(&xs, &dd(1.0))
            .ok_or_else(|| Error::InvalidMetric(format!("{} has no base matrix", metric.name)))??;
        Ok(m.into_iter().flatten().collect())
    };
    let unit = |a: usize, b: Option<usize>| {
        let mut alpha = vec![0u8; n];
        alpha[a] += 1;
        if let Some(b) = b {
            alpha[b] += 1;
        }
        alpha
    };
    let at = |flat: &[Dd], i: usize, j: usize| flat[i * n + j].value_f64();
    let g0 = base(&vec![0; n])?;
    let g: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| at(&g0, i, j)).collect()).collect();
    // dg[k][i][j] = ∂_k g_ij, ddg[k][l][i][j] = ∂_k ∂_l g_ij
    let mut dg = vec![vec![vec![0.0; n]; n]; n];
    let mut ddg = vec![vec![vec![vec![0.0; n]; n]; n]; n];
    for k in 0..n {
        let d = richardson(&unit(k, None), h, n * n, base)?;
        for i in 0..n {
            for j in 0..n {
                dg[k][i][j] = at(&d, i, j);
            }
        }
        for l in k..n {
            let d = richardson(&unit(k, Some(l)), h, n * n, base)?;
            for i in 0..n {
                for j in 0..n {
                    ddg[k][l][i][j] = at(&d, i, j);
                    ddg[l][k][i][j] = at(&d, i, j);
                }
            }
        }
    }
    let gd: Vec<Vec<Dd>> = g.iter().map(|r| r.iter().map(|v| dd(*v)).collect()).collect();
    let (ginv_dd, _) = invert_small(&gd)?;
    let ginv: Vec<Vec<f64>> = ginv_dd.iter().map(|r| r.iter().map(|v| v.value_f64()).collect()).collect();
    // First kind Γ_mij = ½(∂_i g_mj + ∂_j g_mi − ∂_m g_ij) and its derivative in x^k.
    let first = |m: usize, i: usize, j: usize| 0.5 * (dg[i][m][j] + dg[j][m][i] - dg[m][i][j]);
    let d_first = |k: usize, m: usize, i: usize, j: usize| 0.5 * (ddg[k][i][m][j] + ddg[k][j][m][i] - ddg[k][m][i][j]);
    let mut gam = vec![vec![vec![0.0; n]; n]; n];
    for a in 0..n {
        for i in 0..n {
            for j in 0..n {
                gam[a][i][j] = (0..n).map(|m| ginv[a][m] * first(m, i, j)).sum();
            }
        }
    }
    // ∂_k g^{am} = −g^{ap} ∂_k g_pq g^{qm}
    let d_ginv = |k: usize, a: usize, m: usize| -> f64 {
        -(0..n).flat_map(|p| (0..n).map(move |q| (p, q))).map(|(p, q)| ginv[a][p] * dg[k][p][q] * ginv[q][m]).sum::<f64>()
    };
    let d_gam = |k: usize, a: usize, i: usize, j: usize| -> f64 {
        (0..n).map(|m| d_ginv(k, a, m) * first(m, i, j) + ginv[a][m] * d_first(k, m, i, j)).sum()
    };
    // R(∂_k, ∂_l)∂_j = R^a_jkl ∂_a
    let riem = |a: usize, j: usize, k: usize, l: usize| -> f64 {
        d_gam(k, a, l, j) - d_gam(l, a, k, j)
            + (0..n).map(|m| gam[a][k][m] * gam[m][l][j] - gam[a][l][m] * gam[m][k][j]).sum::<f64>()
    };
    let ip = |a: &[f64], b: &[f64]| -> f64 { (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| g[i][j] * a[i] * b[j]).sum() };
    let mut num = 0.0;
    for i in 0..n {
        for a in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        num += u[i] * g[i][a] * riem(a, j, k, l) * v[j] * u[k] * v[l];
                    }
                }
            }
        }
    }
    let den = ip(u, u) * ip(v, v) - ip(u, v).powi(2);
    if den <= 1e-12 * ip(u, u) * ip(v, v) {
        return Err(Error::DegenerateFlag);
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dd_exp_ln_are_inverse() {
        for v in [0.37, -2.5, 11.0, 1e-3] {
            let a = dd(v);
            let r = dd_ln(dd_exp(a)) - a;
            assert!(r.hi().abs() < 1e-29 * (1.0 + v.abs()), "{v}: {:e}", r.hi());
        }
        let e = dd_exp(dd(1.0)) - Dd(twofloat::consts::E);
        assert!(e.hi().abs() < 1e-30);
    }

    #[test]
    fn division_keeps_double_double_precision() {
        let third = dd(1.0) / dd(3.0);
        let r = third * 3.0 - 1.0;
        assert!(r.hi().abs() < 1e-31, "{:e}", r.hi());
        let a = Dd(TwoFloat::new_add(0.7, 1e-18));
        let b = Dd(TwoFloat::new_add(1.3, -2e-17));
        let r = (a / b) * b - a;
        assert!(r.hi().abs() < 1e-31, "{:e}", r.hi());
        assert!((dd_powi(dd(2.0), -3) - 0.125).hi().abs() < 1e-32);
    }

    #[test]
    fn nested_third_difference_of_exp_is_clean() {
        let x0 = dd(0.37);
        let d = richardson(&[3], 1e-3, 1, |o| Ok(vec![dd_exp(x0 + 5e-4 * o[0] as f64)])).unwrap()[0];
        assert!((d.hi() - 0.37f64.exp()).abs() < 1e-11);
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(4, 3).len(), 35);
        assert_eq!(multi_indices(6, 3).len(), 84);
        assert_eq!(multi_indices(2, 0), vec![vec![0, 0]]);
    }

    #[test]
    fn euclidean_spray_vanishes() {
        let m = MetricSpec::builtin("euclidean").unwrap();
        let vol = VolumeDensity::riemannian();
        let p = PointDir::new(vec![0.1, 0.2], vec![1.0, 0.5]).unwrap();
        let d = fd_oracle(&m, &vol, FdQuantity::Spray, &p, &[0, 0, 1, 0]).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn round_sphere_chart_has_unit_curvature() {
        let m = MetricSpec::builtin("sphere").unwrap();
        let k = classical_sectional_curvature(&m, &[0.3, -0.2], &[1.0, 0.2], &[-0.4, 0.9]).unwrap();
        assert!((k - 1.0).abs() < 1e-10, "{k}");
        let e = MetricSpec::builtin("euclidean").unwrap();
        assert!(classical_sectional_curvature(&e, &[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap().abs() < 1e-14);
    }
}
