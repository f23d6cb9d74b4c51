//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] stores the Taylor coefficients `∂^m f / m!` of a scalar function
//! of `num_vars` variables, for every multi-index `m` of total degree at most
//! the jet's order. Coefficients are kept in graded order (all degree-0
//! monomials, then degree 1, ...), so a lower-order truncation of a jet is a
//! prefix of its coefficient vector and jets of different orders over the same
//! variables can be combined by working on the shorter prefix.
//!
//! Differentiation lowers the order by one. Binary operators on jets of
//! different orders produce a jet truncated at the lower order, which is the
//! exact truncated result; the checked [`arith`] entry point instead refuses
//! mismatched specs.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{to_f64, Coeff, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("invalid jet spec: {0}")]
    InvalidSpec(String),
    #[error("variable index {index} out of range for {num_vars} variables")]
    VariableOutOfRange { index: usize, num_vars: usize },
    #[error("jet spec mismatch: {left:?} vs {right:?}")]
    SpecMismatch { left: JetSpec, right: JetSpec },
    #[error("division by a jet with zero constant term")]
    DivisionByZero,
    #[error("{func} is undefined at constant term {value}")]
    Domain { func: &'static str, value: f64 },
    #[error("multi-index of degree {degree} exceeds jet order {order}")]
    DegreeOverflow { degree: usize, order: usize },
    #[error("multi-index has {got} entries, expected {expected}")]
    MultiIndexLength { got: usize, expected: usize },
    #[error("cannot differentiate a jet of order 0")]
    OrderUnderflow,
}

/// Number of variables and truncation degree of a jet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JetSpec {
    num_vars: usize,
    max_order: usize,
}

pub const DEFAULT_ORDER: usize = 6;

impl JetSpec {
    /// Spec for jets over the `2n` phase-space variables `(x, y)`.
    pub fn new(num_vars: usize, max_order: usize) -> Result<Self, JetError> {
        if num_vars < 2 || num_vars % 2 != 0 {
            return Err(JetError::InvalidSpec(format!(
                "num_vars must be even and at least 2, got {num_vars}"
            )));
        }
        if max_order < 1 {
            return Err(JetError::InvalidSpec("max_order must be at least 1".into()));
        }
        Ok(Self { num_vars, max_order })
    }

    /// Phase-space spec for an `n`-dimensional manifold.
    pub fn phase_space(dim: usize, max_order: usize) -> Result<Self, JetError> {
        Self::new(2 * dim, max_order)
    }

    /// Spec without the phase-space restrictions, used for base-only jets.
    pub(crate) fn auxiliary(num_vars: usize, max_order: usize) -> Self {
        assert!(num_vars >= 1);
        Self { num_vars, max_order }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// `C(num_vars + max_order, max_order)`.
    pub fn num_coeffs(&self) -> usize {
        binomial(self.num_vars + self.max_order, self.max_order)
    }

    #[cfg(test)]
    pub(crate) fn with_order(self, max_order: usize) -> Self {
        Self { num_vars: self.num_vars, max_order }
    }
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Precomputed multi-index tables for one `(num_vars, max_order)` pair.
struct Tables {
    num_vars: usize,
    max_order: usize,
    monomials: Vec<Vec<u8>>,
    /// `degree_end[d]` = number of monomials of degree `<= d`.
    degree_end: Vec<usize>,
    index: HashMap<Vec<u8>, u32>,
    /// Cauchy product triples `(a, b, c)` with `m_a + m_b = m_c`, grouped by degree of `c`.
    mul: Vec<(u32, u32, u32)>,
    /// `mul_end[d]` = number of triples whose output has degree `<= d`.
    mul_end: Vec<usize>,
    /// `up[v][j]` = index of `m_j + e_v`, for monomials of degree below `max_order`.
    up: Vec<Vec<u32>>,
}

impl Tables {
    fn build(num_vars: usize, max_order: usize) -> Self {
        let mut monomials = Vec::new();
        let mut degree_end = Vec::with_capacity(max_order + 1);
        for d in 0..=max_order {
            let mut cur = vec![0u8; num_vars];
            push_degree(&mut monomials, &mut cur, 0, d);
            degree_end.push(monomials.len());
        }
        let index: HashMap<Vec<u8>, u32> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i as u32))
            .collect();

        let mut mul = Vec::new();
        let mut mul_end = Vec::with_capacity(max_order + 1);
        let mut d_prev = 0;
        for (c, mc) in monomials.iter().enumerate() {
            let d = degree(mc);
            while d_prev < d {
                mul_end.push(mul.len());
                d_prev += 1;
            }
            // enumerate all a <= mc componentwise
            let mut a = vec![0u8; num_vars];
            loop {
                let b: Vec<u8> = mc.iter().zip(&a).map(|(x, y)| x - y).collect();
                mul.push((index[&a], index[&b], c as u32));
                // odometer increment
                let mut k = 0;
                while k < num_vars {
                    if a[k] < mc[k] {
                        a[k] += 1;
                        break;
                    }
                    a[k] = 0;
                    k += 1;
                }
                if k == num_vars {
                    break;
                }
            }
        }
        while mul_end.len() <= max_order {
            mul_end.push(mul.len());
        }

        let below = if max_order == 0 { 0 } else { degree_end[max_order - 1] };
        let up = (0..num_vars)
            .map(|v| {
                (0..below)
                    .map(|j| {
                        let mut m = monomials[j].clone();
                        m[v] += 1;
                        index[&m]
                    })
                    .collect()
            })
            .collect();

        Self {
            num_vars,
            max_order,
            monomials,
            degree_end,
            index,
            mul,
            mul_end,
            up,
        }
    }

    fn count(&self, order: usize) -> usize {
        self.degree_end[order]
    }
}

fn push_degree(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, pos: usize, remaining: usize) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        cur[pos] = k as u8;
        push_degree(out, cur, pos + 1, remaining - k);
    }
    cur[pos] = 0;
}

fn degree(m: &[u8]) -> usize {
    m.iter().map(|&e| e as usize).sum()
}

fn tables_for(spec: JetSpec) -> Arc<Tables> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Tables>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (spec.num_vars, spec.max_order);
    if let Some(t) = cache.lock().unwrap().get(&key) {
        return t.clone();
    }
    let built = Arc::new(Tables::build(spec.num_vars, spec.max_order));
    cache.lock().unwrap().entry(key).or_insert(built).clone()
}

/// Truncated Taylor expansion of a scalar at a base point.
#[derive(Clone)]
pub struct Jet<T> {
    tables: Arc<Tables>,
    order: usize,
    coeffs: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Jet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("num_vars", &self.tables.num_vars)
            .field("order", &self.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl<T: Coeff> Jet<T> {
    pub fn constant(spec: JetSpec, value: T) -> Self {
        let tables = tables_for(spec);
        let mut coeffs = vec![T::zero(); tables.count(spec.max_order)];
        coeffs[0] = value;
        Self {
            tables,
            order: spec.max_order,
            coeffs,
        }
    }

    pub fn zero(spec: JetSpec) -> Self {
        Self::constant(spec, T::zero())
    }

    /// Jet of the coordinate function `index`, with value `value` at the base point.
    pub fn seed_variable(index: usize, value: T, spec: JetSpec) -> Result<Self, JetError> {
        if index >= spec.num_vars {
            return Err(JetError::VariableOutOfRange {
                index,
                num_vars: spec.num_vars,
            });
        }
        let mut jet = Self::constant(spec, value);
        if spec.max_order >= 1 {
            let mut m = vec![0u8; spec.num_vars];
            m[index] = 1;
            let i = jet.tables.index[&m] as usize;
            jet.coeffs[i] = T::one();
        }
        Ok(jet)
    }

    /// Builds a jet from raw graded coefficients.
    pub fn from_coeffs(spec: JetSpec, coeffs: Vec<T>) -> Result<Self, JetError> {
        if coeffs.len() != spec.num_coeffs() {
            return Err(JetError::InvalidSpec(format!(
                "expected {} coefficients, got {}",
                spec.num_coeffs(),
                coeffs.len()
            )));
        }
        Ok(Self {
            tables: tables_for(spec),
            order: spec.max_order,
            coeffs,
        })
    }

    pub fn spec(&self) -> JetSpec {
        JetSpec {
            num_vars: self.tables.num_vars,
            max_order: self.order,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_vars(&self) -> usize {
        self.tables.num_vars
    }

    pub fn value(&self) -> T {
        self.coeffs[0].clone()
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Multi-indices in storage order, up to this jet's order.
    pub fn multi_indices(&self) -> impl Iterator<Item = &[u8]> {
        self.tables.monomials[..self.coeffs.len()]
            .iter()
            .map(|m| m.as_slice())
    }

    fn lookup(&self, multi_index: &[u8]) -> Result<usize, JetError> {
        if multi_index.len() != self.tables.num_vars {
            return Err(JetError::MultiIndexLength {
                got: multi_index.len(),
                expected: self.tables.num_vars,
            });
        }
        let d = degree(multi_index);
        if d > self.order {
            return Err(JetError::DegreeOverflow {
                degree: d,
                order: self.order,
            });
        }
        Ok(self.tables.index[multi_index] as usize)
    }

    /// Stored coefficient `∂^m f / m!`.
    pub fn coeff(&self, multi_index: &[u8]) -> Result<T, JetError> {
        Ok(self.coeffs[self.lookup(multi_index)?].clone())
    }

    /// Mixed partial derivative `∂^m f` at the base point.
    pub fn extract_partial(&self, multi_index: &[u8]) -> Result<T, JetError> {
        let i = self.lookup(multi_index)?;
        let mut fact = T::one();
        for &e in multi_index {
            for k in 2..=e as u32 {
                fact = fact * T::from_u32(k).unwrap();
            }
        }
        Ok(self.coeffs[i].clone() * fact)
    }

    /// Drops all coefficients of degree above `order`.
    pub fn truncate(&self, order: usize) -> Self {
        let order = order.min(self.order);
        Self {
            tables: self.tables.clone(),
            order,
            coeffs: self.coeffs[..self.tables.count(order)].to_vec(),
        }
    }

    /// Exact partial derivative with respect to variable `var`; the result has order one lower.
    pub fn derivative(&self, var: usize) -> Result<Self, JetError> {
        if var >= self.tables.num_vars {
            return Err(JetError::VariableOutOfRange {
                index: var,
                num_vars: self.tables.num_vars,
            });
        }
        if self.order == 0 {
            return Err(JetError::OrderUnderflow);
        }
        Ok(self.d(var))
    }

    /// Unchecked [`derivative`](Self::derivative).
    pub(crate) fn d(&self, var: usize) -> Self {
        assert!(self.order > 0, "jet order underflow");
        let order = self.order - 1;
        let n = self.tables.count(order);
        let up = &self.tables.up[var];
        let coeffs = (0..n)
            .map(|j| {
                let e = self.tables.monomials[j][var] as u32 + 1;
                self.coeffs[up[j] as usize].clone() * T::from_u32(e).unwrap()
            })
            .collect();
        Self {
            tables: self.tables.clone(),
            order,
            coeffs,
        }
    }

    fn check_compatible(&self, other: &Self) {
        assert_eq!(
            self.tables.num_vars, other.tables.num_vars,
            "jets over different variable counts"
        );
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        self.check_compatible(other);
        let order = self.order.min(other.order);
        let tables = if self.tables.max_order >= other.tables.max_order {
            self.tables.clone()
        } else {
            other.tables.clone()
        };
        let n = tables.count(order);
        let coeffs = self.coeffs[..n]
            .iter()
            .zip(&other.coeffs[..n])
            .map(|(a, b)| f(a.clone(), b.clone()))
            .collect();
        Self {
            tables,
            order,
            coeffs,
        }
    }

    fn mul_jet(&self, other: &Self) -> Self {
        self.check_compatible(other);
        let order = self.order.min(other.order);
        let tables = if self.tables.max_order >= other.tables.max_order {
            self.tables.clone()
        } else {
            other.tables.clone()
        };
        let n = tables.count(order);
        let mut out = vec![T::zero(); n];
        for &(a, b, c) in &tables.mul[..tables.mul_end[order]] {
            let (a, b, c) = (a as usize, b as usize, c as usize);
            let x = &self.coeffs[a];
            if x.is_zero() {
                continue;
            }
            out[c] = out[c].clone() + x.clone() * other.coeffs[b].clone();
        }
        Self {
            tables,
            order,
            coeffs: out,
        }
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|c| c * k.clone())
    }

    fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            tables: self.tables.clone(),
            order: self.order,
            coeffs: self.coeffs.iter().cloned().map(f).collect(),
        }
    }

    /// `Σ c_k h^k` with `h = self - value`, i.e. composition with a univariate series.
    fn compose(&self, series: &[T]) -> Self {
        let mut h = self.clone();
        h.coeffs[0] = T::zero();
        let k = series.len() - 1;
        let mut acc = Self::constant(self.spec(), series[k].clone());
        for c in series[..k].iter().rev() {
            acc = acc.mul_jet(&h);
            acc.coeffs[0] = acc.coeffs[0].clone() + c.clone();
        }
        acc
    }

    /// Truncated reciprocal through the geometric series of `1/(c + t)`.
    pub fn recip(&self) -> Result<Self, JetError> {
        if self.coeffs[0].is_zero() {
            return Err(JetError::DivisionByZero);
        }
        Ok(self.recip_unchecked())
    }

    fn recip_unchecked(&self) -> Self {
        let a0 = self.coeffs[0].clone();
        let inv = T::one() / a0;
        let mut series = Vec::with_capacity(self.order + 1);
        let mut term = inv.clone();
        for _ in 0..=self.order {
            series.push(term.clone());
            term = -(term * inv.clone());
        }
        self.compose(&series)
    }

    pub fn powi(&self, e: i32) -> Result<Self, JetError> {
        let base = if e < 0 { self.recip()? } else { self.clone() };
        let mut k = e.unsigned_abs();
        let mut acc = Self::constant(self.spec(), T::one());
        let mut sq = base;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul_jet(&sq);
            }
            k >>= 1;
            if k > 0 {
                sq = sq.mul_jet(&sq);
            }
        }
        Ok(acc)
    }

    /// Re-expresses a jet over `num_vars` variables inside a larger spec;
    /// variable `i` of `self` becomes variable `var_map[i]` of the target.
    pub fn embed(&self, target: JetSpec, var_map: &[usize]) -> Result<Self, JetError> {
        if var_map.len() != self.tables.num_vars {
            return Err(JetError::MultiIndexLength {
                got: var_map.len(),
                expected: self.tables.num_vars,
            });
        }
        if let Some(&bad) = var_map.iter().find(|&&v| v >= target.num_vars) {
            return Err(JetError::VariableOutOfRange {
                index: bad,
                num_vars: target.num_vars,
            });
        }
        let order = self.order.min(target.max_order);
        let mut out = Self::zero(target).truncate(order);
        let mut m = vec![0u8; target.num_vars];
        for (src, c) in self.tables.monomials[..self.tables.count(order)]
            .iter()
            .zip(&self.coeffs)
        {
            m.iter_mut().for_each(|e| *e = 0);
            for (i, &e) in src.iter().enumerate() {
                m[var_map[i]] += e;
            }
            let j = out.tables.index[&m] as usize;
            out.coeffs[j] = c.clone();
        }
        Ok(out)
    }
}

/// Binary operation selector for [`arith`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Checked jet arithmetic: both operands must share the same spec.
pub fn arith<T: Coeff>(a: &Jet<T>, b: &Jet<T>, op: ArithOp) -> Result<Jet<T>, JetError> {
    if a.spec() != b.spec() {
        return Err(JetError::SpecMismatch {
            left: a.spec(),
            right: b.spec(),
        });
    }
    Ok(match op {
        ArithOp::Add => a + b,
        ArithOp::Sub => a - b,
        ArithOp::Mul => a * b,
        ArithOp::Div => a * &b.recip()?,
    })
}

/// Elementary function selector for [`Jet::apply`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementary<T> {
    Sqrt,
    Exp,
    Log,
    Pow(T),
    Sin,
    Cos,
}

impl<T: Real> Jet<T> {
    pub fn apply(&self, func: Elementary<T>) -> Result<Self, JetError> {
        match func {
            Elementary::Sqrt => self.sqrt(),
            Elementary::Exp => Ok(self.exp()),
            Elementary::Log => self.ln(),
            Elementary::Pow(r) => self.powf(r),
            Elementary::Sin => Ok(self.sin()),
            Elementary::Cos => Ok(self.cos()),
        }
    }

    fn domain(&self, func: &'static str) -> JetError {
        JetError::Domain {
            func,
            value: to_f64(self.value()),
        }
    }

    pub fn sqrt(&self) -> Result<Self, JetError> {
        if !(self.value() > T::zero()) {
            return Err(self.domain("sqrt"));
        }
        self.powf(T::from_f64(0.5).unwrap())
    }

    /// `a^r` for real `r`; requires a positive constant term.
    pub fn powf(&self, r: T) -> Result<Self, JetError> {
        let a0 = self.value();
        if !(a0 > T::zero()) {
            return Err(self.domain("pow"));
        }
        // binom(r, k) a0^(r-k)
        let mut series = Vec::with_capacity(self.order + 1);
        let mut term = a0.powf(r);
        for k in 0..=self.order {
            series.push(term);
            let kk = T::from_usize(k).unwrap();
            term = term * (r - kk) / ((kk + T::one()) * a0);
        }
        Ok(self.compose(&series))
    }

    pub fn exp(&self) -> Self {
        let mut series = Vec::with_capacity(self.order + 1);
        let mut term = self.value().exp();
        for k in 0..=self.order {
            series.push(term);
            term = term / T::from_usize(k + 1).unwrap();
        }
        self.compose(&series)
    }

    pub fn ln(&self) -> Result<Self, JetError> {
        let a0 = self.value();
        if !(a0 > T::zero()) {
            return Err(self.domain("log"));
        }
        let mut series = vec![a0.ln()];
        let mut p = T::one();
        for k in 1..=self.order {
            p = p / a0;
            let sign = if k % 2 == 1 { T::one() } else { -T::one() };
            series.push(sign * p / T::from_usize(k).unwrap());
        }
        Ok(self.compose(&series))
    }

    fn trig(&self, start: usize) -> Self {
        let a0 = self.value();
        let cycle = [a0.sin(), a0.cos(), -a0.sin(), -a0.cos()];
        let mut series = Vec::with_capacity(self.order + 1);
        let mut fact = T::one();
        for k in 0..=self.order {
            if k > 0 {
                fact = fact * T::from_usize(k).unwrap();
            }
            series.push(cycle[(start + k) % 4] / fact);
        }
        self.compose(&series)
    }

    pub fn sin(&self) -> Self {
        self.trig(0)
    }

    pub fn cos(&self) -> Self {
        self.trig(1)
    }

    /// Largest coefficient magnitude, as `f64`.
    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|c| to_f64(c.abs()))
            .fold(0.0, f64::max)
    }
}

macro_rules! jet_binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl<'a, 'b, T: Coeff> $trait<&'b Jet<T>> for &'a Jet<T> {
            type Output = Jet<T>;
            fn $method(self, rhs: &'b Jet<T>) -> Jet<T> {
                let f: fn(&Jet<T>, &Jet<T>) -> Jet<T> = $body;
                f(self, rhs)
            }
        }
        impl<T: Coeff> $trait<Jet<T>> for Jet<T> {
            type Output = Jet<T>;
            fn $method(self, rhs: Jet<T>) -> Jet<T> {
                (&self).$method(&rhs)
            }
        }
        impl<'b, T: Coeff> $trait<&'b Jet<T>> for Jet<T> {
            type Output = Jet<T>;
            fn $method(self, rhs: &'b Jet<T>) -> Jet<T> {
                (&self).$method(rhs)
            }
        }
        impl<'a, T: Coeff> $trait<Jet<T>> for &'a Jet<T> {
            type Output = Jet<T>;
            fn $method(self, rhs: Jet<T>) -> Jet<T> {
                self.$method(&rhs)
            }
        }
    };
}

jet_binop!(Add, add, |a, b| a.zip_with(b, |x, y| x + y));
jet_binop!(Sub, sub, |a, b| a.zip_with(b, |x, y| x - y));
jet_binop!(Mul, mul, |a, b| a.mul_jet(b));
jet_binop!(Div, div, |a, b| a.mul_jet(&b.recip_unchecked()));

macro_rules! jet_scalar_op {
    ($trait:ident, $method:ident, $body:expr) => {
        impl<'a, T: Coeff> $trait<T> for &'a Jet<T> {
            type Output = Jet<T>;
            fn $method(self, rhs: T) -> Jet<T> {
                let f: fn(&Jet<T>, T) -> Jet<T> = $body;
                f(self, rhs)
            }
        }
        impl<T: Coeff> $trait<T> for Jet<T> {
            type Output = Jet<T>;
            fn $method(self, rhs: T) -> Jet<T> {
                (&self).$method(rhs)
            }
        }
    };
}

jet_scalar_op!(Add, add, |a, k| {
    let mut out = a.clone();
    out.coeffs[0] = out.coeffs[0].clone() + k;
    out
});
jet_scalar_op!(Sub, sub, |a, k| {
    let mut out = a.clone();
    out.coeffs[0] = out.coeffs[0].clone() - k;
    out
});
jet_scalar_op!(Mul, mul, |a, k| a.scale(k));
jet_scalar_op!(Div, div, |a, k| a.map(|c| c / k.clone()));

impl<T: Coeff> Neg for &Jet<T> {
    type Output = Jet<T>;
    fn neg(self) -> Jet<T> {
        self.map(|c| -c)
    }
}

impl<T: Coeff> Neg for Jet<T> {
    type Output = Jet<T>;
    fn neg(self) -> Jet<T> {
        -&self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(nv: usize, k: usize) -> JetSpec {
        JetSpec::new(nv, k).unwrap()
    }

    #[test]
    fn coefficient_count_matches_binomial() {
        for (nv, k) in [(2, 1), (4, 6), (6, 6), (6, 3)] {
            let s = spec(nv, k);
            let j = Jet::<f64>::zero(s);
            assert_eq!(j.coeffs().len(), s.num_coeffs());
        }
        assert_eq!(spec(6, 6).num_coeffs(), 924);
    }

    #[test]
    fn spec_rejects_odd_or_zero() {
        assert!(JetSpec::new(3, 4).is_err());
        assert!(JetSpec::new(0, 4).is_err());
        assert!(JetSpec::new(4, 0).is_err());
    }

    #[test]
    fn seed_variable_definition() {
        let s = spec(2, 3);
        let x = Jet::<f64>::seed_variable(0, 3.0, s).unwrap();
        assert_eq!(x.value(), 3.0);
        assert_eq!(x.coeff(&[1, 0]).unwrap(), 1.0);
        assert_eq!(x.coeff(&[0, 1]).unwrap(), 0.0);
        assert!(Jet::<f64>::seed_variable(2, 1.0, s).is_err());
    }

    #[test]
    fn seeded_zero_squared() {
        let s = spec(2, 3);
        let y = Jet::<f64>::seed_variable(1, 0.0, s).unwrap();
        let sq = &y * &y;
        for (m, c) in sq.multi_indices().zip(sq.coeffs()) {
            let expect = if m == [0, 2] { 1.0 } else { 0.0 };
            assert_eq!(*c, expect, "{m:?}");
        }
    }

    #[test]
    fn cube_at_two() {
        // t^3 at t = 2: 8, 12, 12/2, 6/6
        let t = Jet::<f64>::seed_variable(0, 2.0, spec(2, 4)).unwrap();
        let c = &(&t * &t) * &t;
        assert_eq!(c.value(), 8.0);
        assert_eq!(c.coeff(&[1, 0]).unwrap(), 12.0);
        assert_eq!(c.coeff(&[2, 0]).unwrap(), 6.0);
        assert_eq!(c.coeff(&[3, 0]).unwrap(), 1.0);
        assert_eq!(c.coeff(&[4, 0]).unwrap(), 0.0);
    }

    #[test]
    fn one_plus_x_times_one_minus_x() {
        let s = spec(2, 2);
        let x = Jet::<f64>::seed_variable(0, 0.0, s).unwrap();
        let p = (&x + 1.0) * (-&x + 1.0);
        assert_eq!(p.value(), 1.0);
        assert_eq!(p.coeff(&[1, 0]).unwrap(), 0.0);
        assert_eq!(p.coeff(&[2, 0]).unwrap(), -1.0);
    }

    #[test]
    fn self_quotient_is_one() {
        let x = Jet::<f64>::seed_variable(0, 2.0, spec(2, 4)).unwrap();
        let q = arith(&x, &x, ArithOp::Div).unwrap();
        assert!((q.value() - 1.0).abs() < 1e-15);
        assert!(q.coeffs()[1..].iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn geometric_series_reciprocal() {
        let x = Jet::<f64>::seed_variable(0, 0.0, spec(2, 3)).unwrap();
        let r = (&x + 1.0).recip().unwrap();
        let expect = [1.0, -1.0, 1.0, -1.0];
        for (k, e) in expect.iter().enumerate() {
            assert!((r.coeff(&[k as u8, 0]).unwrap() - e).abs() < 1e-15);
        }
    }

    #[test]
    fn division_by_zero_constant_term() {
        let s = spec(2, 2);
        let x = Jet::<f64>::seed_variable(0, 0.0, s).unwrap();
        let one = Jet::<f64>::constant(s, 1.0);
        assert_eq!(arith(&one, &x, ArithOp::Div).unwrap_err(), JetError::DivisionByZero);
    }

    #[test]
    fn spec_mismatch_is_reported() {
        let a = Jet::<f64>::constant(spec(2, 2), 1.0);
        let b = Jet::<f64>::constant(spec(2, 3), 1.0);
        assert!(matches!(
            arith(&a, &b, ArithOp::Add),
            Err(JetError::SpecMismatch { .. })
        ));
    }

    #[test]
    fn sqrt_of_four() {
        let j = Jet::<f64>::constant(spec(2, 3), 4.0).sqrt().unwrap();
        assert_eq!(j.value(), 2.0);
        assert!(j.coeffs()[1..].iter().all(|c| *c == 0.0));
    }

    #[test]
    fn log_exp_round_trip() {
        let x = Jet::<f64>::seed_variable(0, 1.3, spec(2, 4)).unwrap();
        let r = x.exp().ln().unwrap();
        assert!((r.value() - 1.3).abs() < 1e-14);
        assert!((r.coeff(&[1, 0]).unwrap() - 1.0).abs() < 1e-14);
        for (m, c) in r.multi_indices().zip(r.coeffs()).skip(1) {
            if m != [1, 0] {
                assert!(c.abs() < 1e-14, "{m:?} {c}");
            }
        }
    }

    #[test]
    fn exp_series_at_zero() {
        let x = Jet::<f64>::seed_variable(0, 0.0, spec(2, 3)).unwrap();
        let e = x.exp();
        for (k, want) in [1.0, 1.0, 0.5, 1.0 / 6.0].iter().enumerate() {
            assert!((e.coeff(&[k as u8, 0]).unwrap() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn domain_errors() {
        let s = spec(2, 2);
        let neg = Jet::<f64>::constant(s, -1.0);
        assert!(matches!(neg.sqrt(), Err(JetError::Domain { func: "sqrt", .. })));
        assert!(matches!(neg.ln(), Err(JetError::Domain { func: "log", .. })));
        assert!(Jet::<f64>::constant(s, 0.0).powf(0.5).is_err());
    }

    #[test]
    fn extract_partials() {
        let s = spec(2, 3);
        let x = Jet::<f64>::seed_variable(0, 1.5, s).unwrap();
        let y = Jet::<f64>::seed_variable(1, -0.7, s).unwrap();
        assert_eq!(x.extract_partial(&[1, 0]).unwrap(), 1.0);
        let f = &(&x * &x) * &y;
        assert!((f.extract_partial(&[2, 1]).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(f.extract_partial(&[0, 0]).unwrap(), f.value());
        assert!(matches!(
            f.extract_partial(&[2, 2]),
            Err(JetError::DegreeOverflow { .. })
        ));
    }

    #[test]
    fn derivative_lowers_order() {
        let s = spec(2, 3);
        let x = Jet::<f64>::seed_variable(0, 2.0, s).unwrap();
        let c = &(&x * &x) * &x;
        let d = c.derivative(0).unwrap();
        assert_eq!(d.order(), 2);
        assert_eq!(d.value(), 12.0);
        assert_eq!(d.coeff(&[1, 0]).unwrap(), 12.0);
        assert_eq!(d.coeff(&[2, 0]).unwrap(), 3.0);
        let k = Jet::<f64>::constant(s.with_order(0), 1.0);
        assert_eq!(k.derivative(0).unwrap_err(), JetError::OrderUnderflow);
    }

    #[test]
    fn mixed_order_product_truncates() {
        let s = spec(2, 4);
        let x = Jet::<f64>::seed_variable(0, 1.0, s).unwrap();
        let low = x.truncate(2);
        let p = &x * &low;
        assert_eq!(p.order(), 2);
        assert_eq!(p.coeffs(), (&low * &low).coeffs());
    }

    #[test]
    fn embed_moves_variables() {
        let aux = JetSpec::auxiliary(1, 3);
        let t = Jet::<f64>::seed_variable(0, 2.0, aux).unwrap();
        let sq = &t * &t;
        let big = spec(4, 3);
        let e = sq.embed(big, &[2]).unwrap();
        assert_eq!(e.value(), 4.0);
        assert_eq!(e.coeff(&[0, 0, 1, 0]).unwrap(), 4.0);
        assert_eq!(e.coeff(&[0, 0, 2, 0]).unwrap(), 1.0);
    }
}
