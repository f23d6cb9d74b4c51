//! Lazily evaluated jet tower at one point `(x, y)`.
//!
//! Every quantity is a jet over the `2n` phase-space variables, so any
//! later stage can differentiate it further. Each stage loses one order per
//! derivative taken; [`Tower::new`] takes the order of `F`'s jet.

use std::cell::OnceCell;

use crate::error::{Error, Result};
use crate::jets::{Jet, JetSpec};
use crate::linalg::{invert_jets, sym_eigenvalues};
use crate::metricdef::{MetricSpec, VolumeDensity};
use crate::scalar::{lit, to_f64, Real};

pub type Mat<T> = Vec<Vec<T>>;
pub type Arr3<T> = Vec<Vec<Vec<T>>>;
pub type Arr4<T> = Vec<Vec<Vec<Vec<T>>>>;

/// Largest accepted condition number of `g`.
pub const MAX_CONDITION: f64 = 1e8;

fn cached<V>(cell: &OnceCell<V>, f: impl FnOnce() -> Result<V>) -> Result<&V> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = f()?;
    Ok(cell.get_or_init(|| v))
}

fn sum<T: Real>(spec: JetSpec, items: impl IntoIterator<Item = Jet<T>>) -> Jet<T> {
    items.into_iter().fold(Jet::zero(spec), |acc, j| acc + j)
}

/// Which linear connection to use for covariant derivatives and curvature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connection {
    Chern,
    Berwald,
}

pub struct Tower<'a, T: Real> {
    pub metric: &'a MetricSpec,
    pub vol: &'a VolumeDensity,
    pub n: usize,
    pub x: Vec<T>,
    pub y: Vec<T>,
    spec: JetSpec,
    ys: Vec<Jet<T>>,
    f: Jet<T>,
    f2: Jet<T>,
    g: Mat<Jet<T>>,
    ginv: Mat<Jet<T>>,
    detg: Jet<T>,
    density: Option<Jet<T>>,
    ln_sigma: OnceCell<Jet<T>>,
    tau: OnceCell<Jet<T>>,
    cartan: OnceCell<Arr3<Jet<T>>>,
    spray: OnceCell<Vec<Jet<T>>>,
    nonlinear: OnceCell<Mat<Jet<T>>>,
    berwald: OnceCell<Arr3<Jet<T>>>,
    bcurv: OnceCell<Arr4<Jet<T>>>,
    chern: OnceCell<Arr3<Jet<T>>>,
    s_big: OnceCell<Jet<T>>,
    landsberg: OnceCell<Arr3<Jet<T>>>,
    mean_landsberg: OnceCell<Vec<Jet<T>>>,
    e_tensor: OnceCell<Mat<Jet<T>>>,
    e_scalar: OnceCell<Jet<T>>,
    riemann: OnceCell<Mat<Jet<T>>>,
    hh_chern: OnceCell<Arr4<Jet<T>>>,
    hh_berwald: OnceCell<Arr4<Jet<T>>>,
}

impl<'a, T: Real> Tower<'a, T> {
    /// Builds the zeroth stage (`F`, `g`, `g^{-1}`) and validates the point.
    pub fn new(metric: &'a MetricSpec, vol: &'a VolumeDensity, x: &[T], y: &[T], order: usize) -> Result<Self> {
        Self::with_density(metric, vol, x, y, order, None)
    }

    /// As [`new`](Self::new), reusing a density jet from
    /// [`VolumeDensity::density`] computed at the same `x`.
    pub fn with_density(
        metric: &'a MetricSpec,
        vol: &'a VolumeDensity,
        x: &[T],
        y: &[T],
        order: usize,
        density: Option<Jet<T>>,
    ) -> Result<Self> {
        let n = metric.dim;
        if order < 2 {
            return Err(Error::OrderTooLow {
                needed: 2,
                have: order,
                what: "the fundamental tensor",
            });
        }
        let xf: Vec<f64> = x.iter().map(|v| to_f64(*v)).collect();
        metric.check_point(&xf)?;
        if y.len() != n {
            return Err(Error::InvalidMetric(format!("direction must have {n} components")));
        }
        let spec = JetSpec::phase_space(n, order)?;
        let f = metric.eval_f_jet(x, y, spec)?;
        let fv = to_f64(f.value());
        if !(fv > 0.0 && fv.is_finite()) {
            return Err(Error::NonPositiveF(fv));
        }
        let ys: Vec<Jet<T>> = (0..n)
            .map(|i| Jet::seed_variable(n + i, y[i], spec))
            .collect::<std::result::Result<_, _>>()?;
        let f2 = &f * &f;
        let half = lit::<T>(0.5);
        let g: Mat<Jet<T>> = (0..n)
            .map(|i| (0..n).map(|j| f2.d(n + i).d(n + j).scale(half)).collect())
            .collect();
        let gv: Vec<Vec<f64>> = g.iter().map(|r| r.iter().map(|e| to_f64(e.value())).collect()).collect();
        let ev = sym_eigenvalues(&gv);
        if ev[0] <= 0.0 || !ev[0].is_finite() {
            return Err(Error::NotPositiveDefinite(ev[0]));
        }
        let cond = ev[n - 1] / ev[0];
        if cond > MAX_CONDITION {
            return Err(Error::IllConditioned(cond));
        }
        let (ginv, detg) = invert_jets(&g)?;
        Ok(Self {
            metric,
            vol,
            n,
            x: x.to_vec(),
            y: y.to_vec(),
            spec,
            ys,
            f,
            f2,
            g,
            ginv,
            detg,
            density,
            ln_sigma: OnceCell::new(),
            tau: OnceCell::new(),
            cartan: OnceCell::new(),
            spray: OnceCell::new(),
            nonlinear: OnceCell::new(),
            berwald: OnceCell::new(),
            bcurv: OnceCell::new(),
            chern: OnceCell::new(),
            s_big: OnceCell::new(),
            landsberg: OnceCell::new(),
            mean_landsberg: OnceCell::new(),
            e_tensor: OnceCell::new(),
            e_scalar: OnceCell::new(),
            riemann: OnceCell::new(),
            hh_chern: OnceCell::new(),
            hh_berwald: OnceCell::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.spec.max_order()
    }

    fn need(&self, needed: usize, what: &'static str) -> Result<()> {
        if self.order() < needed {
            return Err(Error::OrderTooLow {
                needed,
                have: self.order(),
                what,
            });
        }
        Ok(())
    }

    fn zero(&self) -> Jet<T> {
        Jet::zero(self.spec)
    }

    pub fn spec(&self) -> JetSpec {
        self.spec
    }

    /// `∂/∂x^k`.
    pub fn dx(&self, j: &Jet<T>, k: usize) -> Jet<T> {
        j.d(k)
    }

    /// `∂/∂y^k`.
    pub fn dy(&self, j: &Jet<T>, k: usize) -> Jet<T> {
        j.d(self.n + k)
    }

    /// `δ/δx^k = ∂/∂x^k − N^p_k ∂/∂y^p`.
    pub fn delta(&self, j: &Jet<T>, k: usize) -> Result<Jet<T>> {
        let nl = self.nonlinear()?;
        Ok((0..self.n).fold(j.d(k), |acc, p| acc - &nl[p][k] * &j.d(self.n + p)))
    }

    /// Jets of the direction components `y^i`.
    pub fn y_jets(&self) -> &[Jet<T>] {
        &self.ys
    }

    pub fn f(&self) -> &Jet<T> {
        &self.f
    }

    pub fn f2(&self) -> &Jet<T> {
        &self.f2
    }

    pub fn g(&self) -> &Mat<Jet<T>> {
        &self.g
    }

    pub fn g_inv(&self) -> &Mat<Jet<T>> {
        &self.ginv
    }

    pub fn det_g(&self) -> &Jet<T> {
        &self.detg
    }

    /// `C_ijk = ½ ∂g_ij/∂y^k`.
    pub fn cartan(&self) -> Result<&Arr3<Jet<T>>> {
        cached(&self.cartan, || {
            self.need(3, "the Cartan tensor")?;
            let n = self.n;
            let half = lit::<T>(0.5);
            Ok((0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| (0..n).map(|k| self.dy(&self.g[i][j], k).scale(half)).collect())
                        .collect()
                })
                .collect())
        })
    }

    /// `I_k = g^{ij} C_ijk`.
    pub fn mean_cartan(&self) -> Result<Vec<Jet<T>>> {
        let c = self.cartan()?;
        let n = self.n;
        Ok((0..n)
            .map(|k| sum(self.spec, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| &self.ginv[i][j] * &c[i][j][k])))
            .collect())
    }

    /// `ln σ(x)` embedded as a phase-space jet.
    pub fn ln_sigma(&self) -> Result<&Jet<T>> {
        cached(&self.ln_sigma, || {
            let aux = match &self.density {
                Some(d) => d.clone(),
                None => self.vol.density(self.metric, &self.x, self.order())?,
            };
            let map: Vec<usize> = (0..self.n).collect();
            Ok(aux.ln()?.embed(self.spec, &map)?)
        })
    }

    /// Distortion `τ = ln(√det g / σ)`.
    pub fn tau(&self) -> Result<&Jet<T>> {
        cached(&self.tau, || Ok(self.detg.ln()?.scale(lit(0.5)) - self.ln_sigma()?))
    }

    /// Spray coefficients `G^i = ¼ g^{il}(y^k ∂²F²/∂x^k∂y^l − ∂F²/∂x^l)`.
    pub fn spray(&self) -> Result<&Vec<Jet<T>>> {
        cached(&self.spray, || {
            let n = self.n;
            let w: Vec<Jet<T>> = (0..n)
                .map(|l| {
                    let fy = self.dy(&self.f2, l);
                    let mixed = sum(self.spec, (0..n).map(|k| &self.ys[k] * &self.dx(&fy, k)));
                    mixed - self.dx(&self.f2, l)
                })
                .collect();
            Ok((0..n)
                .map(|i| sum(self.spec, (0..n).map(|l| &self.ginv[i][l] * &w[l])).scale(lit(0.25)))
                .collect())
        })
    }

    /// `N^i_j = ∂G^i/∂y^j`.
    pub fn nonlinear(&self) -> Result<&Mat<Jet<T>>> {
        cached(&self.nonlinear, || {
            self.need(3, "the nonlinear connection")?;
            let g = self.spray()?;
            Ok((0..self.n).map(|i| (0..self.n).map(|j| self.dy(&g[i], j)).collect()).collect())
        })
    }

    /// Berwald connection coefficients `G^i_jk = ∂²G^i/∂y^j∂y^k`.
    pub fn berwald(&self) -> Result<&Arr3<Jet<T>>> {
        cached(&self.berwald, || {
            self.need(4, "the Berwald connection")?;
            let nl = self.nonlinear()?;
            let n = self.n;
            Ok((0..n)
                .map(|i| (0..n).map(|j| (0..n).map(|k| self.dy(&nl[i][j], k)).collect()).collect())
                .collect())
        })
    }

    /// Berwald curvature `B^i_jkl = ∂³G^i/∂y^j∂y^k∂y^l`.
    pub fn berwald_curvature(&self) -> Result<&Arr4<Jet<T>>> {
        cached(&self.bcurv, || {
            self.need(5, "the Berwald curvature")?;
            let bw = self.berwald()?;
            let n = self.n;
            Ok((0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| (0..n).map(|k| (0..n).map(|l| self.dy(&bw[i][j][k], l)).collect()).collect())
                        .collect()
                })
                .collect())
        })
    }

    /// Chern connection coefficients
    /// `Γ^i_jk = ½ g^{il}(δ_k g_lj + δ_j g_lk − δ_l g_jk)`.
    pub fn chern(&self) -> Result<&Arr3<Jet<T>>> {
        cached(&self.chern, || {
            self.need(3, "the Chern connection")?;
            let n = self.n;
            let mut dg: Arr3<Jet<T>> = vec![vec![Vec::with_capacity(n); n]; n];
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let v = if b < a { dg[b][a][c].clone() } else { self.delta(&self.g[a][b], c)? };
                        dg[a][b].push(v);
                    }
                }
            }
            let half = lit::<T>(0.5);
            Ok((0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            (0..n)
                                .map(|k| {
                                    sum(
                                        self.spec,
                                        (0..n).map(|l| {
                                            &self.ginv[i][l] * &(&(&dg[l][j][k] + &dg[l][k][j]) - &dg[j][k][l])
                                        }),
                                    )
                                    .scale(half)
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect())
        })
    }

    pub fn connection(&self, which: Connection) -> Result<&Arr3<Jet<T>>> {
        match which {
            Connection::Chern => self.chern(),
            Connection::Berwald => self.berwald(),
        }
    }

    /// S-curvature through the distortion: `𝐒 = y^i ∂τ/∂x^i − 2G^i ∂τ/∂y^i`.
    pub fn s_big(&self) -> Result<&Jet<T>> {
        cached(&self.s_big, || {
            self.need(3, "the S-curvature")?;
            let tau = self.tau()?;
            let g = self.spray()?;
            let n = self.n;
            let along = sum(self.spec, (0..n).map(|i| &self.ys[i] * &self.dx(tau, i)));
            let vert = sum(self.spec, (0..n).map(|i| &g[i] * &self.dy(tau, i)));
            Ok(along - vert.scale(lit(2.0)))
        })
    }

    /// S-curvature through the divergence: `𝐒 = ∂G^m/∂y^m − y^m ∂ ln σ/∂x^m`.
    pub fn s_big_divergence(&self) -> Result<Jet<T>> {
        self.need(3, "the S-curvature")?;
        let g = self.spray()?;
        let ls = self.ln_sigma()?;
        let n = self.n;
        let div = sum(self.spec, (0..n).map(|m| self.dy(&g[m], m)));
        let along = sum(self.spec, (0..n).map(|m| &self.ys[m] * &self.dx(ls, m)));
        Ok(div - along)
    }

    /// `E_jk = ½ B^m_jkm`.
    pub fn e_tensor(&self) -> Result<&Mat<Jet<T>>> {
        cached(&self.e_tensor, || {
            let b = self.berwald_curvature()?;
            let n = self.n;
            Ok((0..n)
                .map(|j| (0..n).map(|k| sum(self.spec, (0..n).map(|m| b[m][j][k][m].clone())).scale(lit(0.5))).collect())
                .collect())
        })
    }

    /// Berwald scalar curvature `𝖾 = 2F g^{jk} E_jk`.
    pub fn e_scalar(&self) -> Result<&Jet<T>> {
        cached(&self.e_scalar, || {
            let e = self.e_tensor()?;
            let n = self.n;
            let tr = sum(
                self.spec,
                (0..n).flat_map(|j| (0..n).map(move |k| (j, k))).map(|(j, k)| &self.ginv[j][k] * &e[j][k]),
            );
            Ok((&self.f * &tr).scale(lit(2.0)))
        })
    }

    /// `y_m = g_mj y^j`.
    pub fn y_lower(&self) -> Vec<Jet<T>> {
        (0..self.n)
            .map(|m| sum(self.spec, (0..self.n).map(|j| &self.g[m][j] * &self.ys[j])))
            .collect()
    }

    /// Landsberg curvature `L_jkl = −½ y_m B^m_jkl`.
    pub fn landsberg(&self) -> Result<&Arr3<Jet<T>>> {
        cached(&self.landsberg, || {
            let b = self.berwald_curvature()?;
            let yl = self.y_lower();
            let n = self.n;
            let mhalf = lit::<T>(-0.5);
            Ok((0..n)
                .map(|j| {
                    (0..n)
                        .map(|k| {
                            (0..n)
                                .map(|l| sum(self.spec, (0..n).map(|m| &yl[m] * &b[m][j][k][l])).scale(mhalf))
                                .collect()
                        })
                        .collect()
                })
                .collect())
        })
    }

    /// Mean Landsberg curvature `J_k = g^{ij} L_ijk`.
    pub fn mean_landsberg(&self) -> Result<&Vec<Jet<T>>> {
        cached(&self.mean_landsberg, || {
            let l = self.landsberg()?;
            let n = self.n;
            Ok((0..n)
                .map(|k| {
                    sum(
                        self.spec,
                        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| &self.ginv[i][j] * &l[i][j][k]),
                    )
                })
                .collect())
        })
    }

    /// Spray curvature
    /// `R^i_k = 2∂_{x^k}G^i − y^j ∂_{x^j}∂_{y^k}G^i + 2G^j ∂_{y^j}∂_{y^k}G^i − N^i_j N^j_k`.
    pub fn riemann(&self) -> Result<&Mat<Jet<T>>> {
        cached(&self.riemann, || {
            self.need(4, "the spray curvature")?;
            let g = self.spray()?;
            let nl = self.nonlinear()?;
            let bw = self.berwald()?;
            let n = self.n;
            Ok((0..n)
                .map(|i| {
                    (0..n)
                        .map(|k| {
                            let a = self.dx(&g[i], k).scale(lit(2.0));
                            let b = sum(self.spec, (0..n).map(|j| &self.ys[j] * &self.dx(&nl[i][k], j)));
                            let c = sum(self.spec, (0..n).map(|j| &g[j] * &bw[i][k][j])).scale(lit(2.0));
                            let d = sum(self.spec, (0..n).map(|j| &nl[i][j] * &nl[j][k]));
                            a - b + c - d
                        })
                        .collect()
                })
                .collect())
        })
    }

    pub fn ricci(&self) -> Result<Jet<T>> {
        let r = self.riemann()?;
        Ok(sum(self.spec, (0..self.n).map(|m| r[m][m].clone())))
    }

    /// `Ric / ((n − 1) F²)`: the flag curvature when it is scalar.
    pub fn scalar_flag_curvature(&self) -> Result<Jet<T>> {
        let ric = self.ricci()?;
        let denom = self.f2.scale(lit((self.n - 1) as f64));
        Ok(ric * denom.recip()?)
    }

    /// Raw hh-curvature
    /// `X^i_jkl = δ_l Λ^i_jk − δ_k Λ^i_jl + Λ^m_jk Λ^i_ml − Λ^m_jl Λ^i_mk`.
    pub fn hh_curvature(&self, which: Connection) -> Result<&Arr4<Jet<T>>> {
        let cell = match which {
            Connection::Chern => &self.hh_chern,
            Connection::Berwald => &self.hh_berwald,
        };
        cached(cell, || {
            self.need(if which == Connection::Chern { 4 } else { 5 }, "the hh-curvature")?;
            let lam = self.connection(which)?;
            let n = self.n;
            let mut dl: Arr4<Jet<T>> = Vec::with_capacity(n);
            for i in 0..n {
                let mut a = Vec::with_capacity(n);
                for j in 0..n {
                    let mut b = Vec::with_capacity(n);
                    for k in 0..n {
                        b.push((0..n).map(|l| self.delta(&lam[i][j][k], l)).collect::<Result<Vec<_>>>()?);
                    }
                    a.push(b);
                }
                dl.push(a);
            }
            Ok((0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            (0..n)
                                .map(|k| {
                                    (0..n)
                                        .map(|l| {
                                            let quad = sum(
                                                self.spec,
                                                (0..n).map(|m| {
                                                    &(&lam[m][j][k] * &lam[i][m][l]) - &(&lam[m][j][l] * &lam[i][m][k])
                                                }),
                                            );
                                            &(&dl[i][j][k][l] - &dl[i][j][l][k]) + &quad
                                        })
                                        .collect()
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect())
        })
    }

    /// Trace over the first two slots, `X^m_mkl`.
    pub fn hh_trace(&self, which: Connection) -> Result<Mat<Jet<T>>> {
        let x = self.hh_curvature(which)?;
        let n = self.n;
        Ok((0..n)
            .map(|k| (0..n).map(|l| sum(self.spec, (0..n).map(|m| x[m][m][k][l].clone()))).collect())
            .collect())
    }

    /// Horizontal covariant derivative `T_{k|m} = δ_m T_k − Λ^p_km T_p` of a covector field.
    pub fn covector_derivative(&self, t: &[Jet<T>], which: Connection) -> Result<Mat<Jet<T>>> {
        let lam = self.connection(which)?;
        let n = self.n;
        (0..n)
            .map(|k| {
                (0..n)
                    .map(|m| {
                        let corr = sum(self.spec, (0..n).map(|p| &lam[p][k][m] * &t[p]));
                        Ok(self.delta(&t[k], m)? - corr)
                    })
                    .collect()
            })
            .collect()
    }

    /// Horizontal derivative of a scalar field, `δ_m φ`.
    pub fn scalar_derivative(&self, phi: &Jet<T>) -> Result<Vec<Jet<T>>> {
        (0..self.n).map(|m| self.delta(phi, m)).collect()
    }

    /// Horizontal covariant derivative of a covariant 2-tensor field:
    /// `T_{ab|m} = δ_m T_ab − Λ^p_am T_pb − Λ^p_bm T_ap`.
    pub fn two_tensor_derivative(&self, t: &Mat<Jet<T>>, which: Connection) -> Result<Arr3<Jet<T>>> {
        let lam = self.connection(which)?;
        let n = self.n;
        (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| {
                        (0..n)
                            .map(|m| {
                                let c1 = sum(self.spec, (0..n).map(|p| &lam[p][a][m] * &t[p][b]));
                                let c2 = sum(self.spec, (0..n).map(|p| &lam[p][b][m] * &t[a][p]));
                                Ok(self.delta(&t[a][b], m)? - c1 - c2)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn zero_jet(&self) -> Jet<T> {
        self.zero()
    }
}

pub fn values<T: Real>(v: &[Jet<T>]) -> Vec<T> {
    v.iter().map(|j| j.value()).collect()
}

pub fn values2<T: Real>(m: &Mat<Jet<T>>) -> Mat<T> {
    m.iter().map(|r| values(r)).collect()
}

pub fn values3<T: Real>(m: &Arr3<Jet<T>>) -> Arr3<T> {
    m.iter().map(values2).collect()
}

pub fn values4<T: Real>(m: &Arr4<Jet<T>>) -> Arr4<T> {
    m.iter().map(values3).collect()
}
