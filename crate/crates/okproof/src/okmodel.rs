//! The Ohta-Kawasaki model in symmetry-reduced Fourier variables.
//!
//! Unknowns are ordered as `x = (kappa_1..kappa_J, b_1..b_N)` where `b_i` is
//! the coefficient of entry `i` of a [`ReducedSet`] (entry 0 is the zero mode,
//! fixed to `m`).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::interval::DomainError;
use crate::interval::Interval;
use crate::seqspace::{sigma_expand, sigma_neg, Field, Full, Real};
use crate::spacegroup::ReducedSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub gamma: f64,
    pub m: f64,
}

impl Model {
    pub fn new(gamma: f64, m: f64) -> Self {
        Model { gamma, m }
    }

    /// `P^(order)(y)` with `P(y) = y/gamma^2 - 1 + 1/y`.
    pub fn p<R: Real>(&self, y: R, order: u8) -> R {
        let g2 = R::of(self.gamma) * R::of(self.gamma);
        match order {
            0 => y / g2 - R::of(1.0) + y.recip(),
            1 => g2.recip() - y.powi(2).recip(),
            2 => R::of(2.0) * y.powi(3).recip(),
            3 => -(R::of(6.0) * y.powi(4).recip()),
            _ => panic!("P derivative of order {order} not supported"),
        }
    }

    /// Checked scalar evaluation, rejecting `y <= 0`.
    pub fn p_checked(&self, y: f64, order: u8) -> Result<f64, DomainError> {
        if y <= 0.0 {
            return Err(DomainError::Domain { op: "P", arg: Interval::point(y) });
        }
        Ok(self.p(y, order))
    }

    pub fn y_p(&self) -> f64 {
        y_p(self.gamma)
    }

    /// Energy of the uniform state, `(1 - m^2)^2 / 4`.
    pub fn trivial_energy(&self) -> f64 {
        let a = 1.0 - self.m * self.m;
        a * a / 4.0
    }

    pub fn trivial_energy_iv(&self) -> Interval {
        let m = Interval::point(self.m);
        (Interval::ONE - m.sqr()).sqr() / Interval::point(4.0)
    }
}

/// Threshold above which `P` and `P'` are positive.
pub fn y_p(gamma: f64) -> f64 {
    if gamma <= 2.0 {
        gamma
    } else {
        let g2 = gamma * gamma;
        (g2 + (g2 * g2 - 4.0 * g2).sqrt()) / 2.0
    }
}

/// Rigorous enclosure of `y_P`.
pub fn y_p_iv(gamma: f64) -> Interval {
    let g = Interval::point(gamma);
    if gamma <= 2.0 {
        g
    } else {
        let g2 = g.sqr();
        (g2 + (g2.sqr() - Interval::point(4.0) * g2).sqrt().unwrap()) / Interval::point(2.0)
    }
}

/// Closed form of the mixed-state stability curve `sqrt((gamma - 2) / (3 gamma))`.
pub fn m_star(gamma: f64) -> Result<f64, DomainError> {
    if gamma < 2.0 {
        return Err(DomainError::Domain { op: "m_star", arg: Interval::point(gamma) });
    }
    Ok(((gamma - 2.0) / (3.0 * gamma)).sqrt())
}

/// Linearization threshold found numerically: minimize `P` over `y > 0` and
/// return the `m` at which `min P + 3 m^2` crosses zero.
pub fn linearization_threshold(gamma: f64) -> Result<f64, DomainError> {
    let model = Model::new(gamma, 0.0);
    // bracket the minimum of the convex function P on (0, inf)
    let (mut a, mut b) = (1e-3, 1.0);
    while model.p(b, 1) < 0.0 {
        b *= 2.0;
    }
    // bisection on P' keeps full double accuracy in the root
    for _ in 0..200 {
        let c = 0.5 * (a + b);
        if c <= a || c >= b {
            break;
        }
        if model.p(c, 1) < 0.0 {
            a = c;
        } else {
            b = c;
        }
    }
    let pmin = model.p(0.5 * (a + b), 0);
    if pmin > 0.0 {
        return Err(DomainError::Domain { op: "linearization_threshold", arg: Interval::point(gamma) });
    }
    Ok((-pmin / 3.0).sqrt())
}

/// `Delta_k kappa` for entry `i`.
pub fn delta_kappa<R: Real>(set: &ReducedSet, i: usize, kappa: &[R]) -> R {
    let d = &set.entries[i].delta;
    (0..kappa.len()).map(|j| R::of(d[j] as f64) * kappa[j]).sum()
}

/// `P^(order)(Delta_k kappa)` for entry `i`.
fn p_at<F: Field>(model: &Model, set: &ReducedSet, i: usize, kappa: &[F::R], order: u8) -> F::R {
    model.p(delta_kappa(set, i, kappa), order)
}

/// Full coefficients `c = sigma(m e_0 + b)` with their square.
pub struct Expanded<F> {
    pub c: Full<F>,
    pub c2: Full<F>,
}

pub fn expand<F: Field>(model: &Model, set: &ReducedSet, b: &[F]) -> Expanded<F> {
    let m = F::real(<F::R as Real>::of(model.m));
    let c = sigma_expand(set, m, b);
    let c2 = c.conv(&c);
    Expanded { c, c2 }
}

/// `E(kappa, sigma(m e_0 + b))`.
pub fn energy<F: Field>(model: &Model, set: &ReducedSet, kappa: &[F::R], b: &[F]) -> F {
    let ex = expand(model, set, b);
    energy_with(model, set, kappa, b, &ex)
}

pub fn energy_with<F: Field>(model: &Model, set: &ReducedSet, kappa: &[F::R], b: &[F], ex: &Expanded<F>) -> F {
    let r = <F::R as Real>::of;
    let mut quad = F::zero();
    for i in 1..b.len() {
        let g = r(set.entries[i].orbit_size as f64);
        let p = p_at::<F>(model, set, i, kappa, 0);
        quad += (b[i] * sigma_neg(set, b, i)).scale(p * g);
    }
    let quart: F = ex.c2.iter().map(|(k, v)| v * ex.c2.get(crate::seqspace::neg(k))).sum();
    let m = r(model.m);
    let cst = (r(1.0) - r(2.0) * m * m) / r(4.0);
    quad.scale(r(0.5)) + quart.scale(r(0.25)) + F::real(cst)
}

/// `H_j = 1/2 sum_{k in Z_0} P'(Delta_k kappa) Delta_k^j |G.k| b_k sigma(b)_{-k}`.
pub fn residual_h<F: Field>(model: &Model, set: &ReducedSet, kappa: &[F::R], b: &[F]) -> Vec<F> {
    let r = <F::R as Real>::of;
    let jn = kappa.len();
    let mut h = vec![F::zero(); jn];
    for i in 1..b.len() {
        let e = &set.entries[i];
        let w = (b[i] * sigma_neg(set, b, i)).scale(p_at::<F>(model, set, i, kappa, 1) * r(e.orbit_size as f64));
        for j in 0..jn {
            if e.delta[j] != 0 {
                h[j] += w.scale(r(e.delta[j] as f64));
            }
        }
    }
    h.into_iter().map(|x| x.scale(r(0.5))).collect()
}

/// `F_k = P(Delta_k kappa) |G.k| b_k + |G.k| <c^3>_k` for entries `0..n_out`
/// (slot 0 is left zero).
pub fn residual_f<F: Field>(
    model: &Model,
    set: &ReducedSet,
    kappa: &[F::R],
    b: &[F],
    ex: &Expanded<F>,
    n_out: usize,
) -> Vec<F> {
    let r = <F::R as Real>::of;
    let mut f = vec![F::zero(); n_out];
    for (i, fi) in f.iter_mut().enumerate().skip(1) {
        let e = &set.entries[i];
        let g = r(e.orbit_size as f64);
        let lin = if i < b.len() { b[i].scale(p_at::<F>(model, set, i, kappa, 0)) } else { F::zero() };
        let cube = ex.c.conv_at(&ex.c2, e.k);
        *fi = (lin + cube).scale(g);
    }
    f
}

/// `(H, F)` on the first `n` entries.
pub fn residual<F: Field>(model: &Model, set: &ReducedSet, kappa: &[F::R], b: &[F]) -> (Vec<F>, Vec<F>) {
    let ex = expand(model, set, b);
    (residual_h(model, set, kappa, b), residual_f(model, set, kappa, b, &ex, b.len()))
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Copy> Mat<F> {
    pub fn filled(rows: usize, cols: usize, v: F) -> Self {
        Mat { rows, cols, data: vec![v; rows * cols] }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }
}

impl Mat<Complex64> {
    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<Complex64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &nalgebra::DMatrix<Complex64>) -> Self {
        let mut out = Mat::filled(m.nrows(), m.ncols(), Complex64::new(0.0, 0.0));
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.set(i, j, m[(i, j)]);
            }
        }
        out
    }
}

/// `D_b F_{k,k'}` for entry `i` (row) and entry `l` (column).
pub fn dbf_entry<F: Field>(
    model: &Model,
    set: &ReducedSet,
    kappa: &[F::R],
    c2: &Full<F>,
    i: usize,
    l: usize,
) -> F {
    let r = <F::R as Real>::of;
    let e = &set.entries[i];
    let mut v = dphi_entry(set, c2, i, l);
    if i == l {
        v += F::real(p_at::<F>(model, set, i, kappa, 0) * r(e.orbit_size as f64));
    }
    v
}

/// Nonlinear part of `D_b F_{k,k'}`: `3 |G.k| sum_{k'' in G.k'} alpha~(k', k'') <c^2>_{k-k''}`.
pub fn dphi_entry<F: Field>(set: &ReducedSet, c2: &Full<F>, i: usize, l: usize) -> F {
    let e = &set.entries[i];
    let mut s = F::zero();
    for (kk, ph) in &set.entries[l].orbit {
        s += F::phase(ph) * c2.get(crate::seqspace::sub(e.k, *kk));
    }
    s.scale(<F::R as Real>::of(3.0 * e.orbit_size as f64))
}

/// Jacobian blocks of `(H, F)` restricted to the first `n` entries.
pub struct Blocks<F> {
    /// `D_kappa H`, J x J
    pub dkh: Mat<F>,
    /// `D_b H`, J x N
    pub dbh: Mat<F>,
    /// `D_kappa F`, N x J
    pub dkf: Mat<F>,
    /// `D_b F`, N x N
    pub dbf: Mat<F>,
}

pub fn jacobian_blocks<F: Field>(model: &Model, set: &ReducedSet, kappa: &[F::R], b: &[F]) -> Blocks<F> {
    let r = <F::R as Real>::of;
    let jn = kappa.len();
    let n = b.len() - 1;
    let ex = expand(model, set, b);
    let mut dkh = Mat::filled(jn, jn, F::zero());
    let mut dbh = Mat::filled(jn, n, F::zero());
    let mut dkf = Mat::filled(n, jn, F::zero());
    let mut dbf = Mat::filled(n, n, F::zero());
    for i in 1..=n {
        let e = &set.entries[i];
        let g = r(e.orbit_size as f64);
        let p1 = p_at::<F>(model, set, i, kappa, 1);
        let p2 = p_at::<F>(model, set, i, kappa, 2);
        let sn = sigma_neg(set, b, i);
        for j in 0..jn {
            let dj = r(e.delta[j] as f64);
            dkf.set(i - 1, j, b[i].scale(p1 * dj * g));
            dbh.set(j, i - 1, sn.scale(p1 * dj * g));
            for j2 in 0..jn {
                let add = (b[i] * sn).scale(p2 * dj * r(e.delta[j2] as f64) * g * r(0.5));
                let cur = dkh.at(j, j2);
                dkh.set(j, j2, cur + add);
            }
        }
        for l in 1..=n {
            dbf.set(i - 1, l - 1, dbf_entry(model, set, kappa, &ex.c2, i, l));
        }
    }
    Blocks { dkh, dbh, dkf, dbf }
}

impl<F: Field> Blocks<F> {
    /// Assemble `M = [[DkH, DbH], [DkF, DbF]]`.
    pub fn assemble(&self) -> Mat<F> {
        let jn = self.dkh.rows;
        let n = self.dbf.rows;
        let mut m = Mat::filled(jn + n, jn + n, F::zero());
        for i in 0..jn {
            for j in 0..jn {
                m.set(i, j, self.dkh.at(i, j));
            }
            for j in 0..n {
                m.set(i, jn + j, self.dbh.at(i, j));
            }
        }
        for i in 0..n {
            for j in 0..jn {
                m.set(jn + i, j, self.dkf.at(i, j));
            }
            for j in 0..n {
                m.set(jn + i, jn + j, self.dbf.at(i, j));
            }
        }
        m
    }
}

/// Energy of a state on real `kappa` as `f64`, for the solver.
pub fn energy_f64(model: &Model, set: &ReducedSet, kappa: &[f64], b: &[Complex64]) -> f64 {
    energy(model, set, kappa, b).re
}
