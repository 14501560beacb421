//! Symmetry-reduced coefficient vectors, their expansion to full Fourier
//! coefficients, weighted norms and convolutions.
//!
//! Arithmetic is generic over [`Field`], implemented by `Complex64` for the
//! solver and by [`CInterval`] for rigorous bounds.

use std::collections::HashMap;
use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::interval::{CInterval, Interval};
use crate::spacegroup::{Index, Phase, ReducedSet};

pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Sum
{
    fn of(x: f64) -> Self;
    fn mid(self) -> f64;
    fn recip(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// `self^e` for `self > 0`.
    fn powr(self, e: Self) -> Self;
    fn abs(self) -> Self;
    /// Upper bound of `|self|`.
    fn mag(self) -> f64;
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn mid(self) -> f64 {
        self
    }
    fn recip(self) -> Self {
        1.0 / self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powr(self, e: Self) -> Self {
        self.powf(e)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn mag(self) -> f64 {
        f64::abs(self)
    }
}

impl Real for Interval {
    fn of(x: f64) -> Self {
        Interval::point(x)
    }
    fn mid(self) -> f64 {
        Interval::mid(&self)
    }
    fn recip(self) -> Self {
        Interval::recip(self).expect("reciprocal of an interval containing zero")
    }
    fn sqrt(self) -> Self {
        Interval::sqrt(self).expect("sqrt of a negative interval")
    }
    fn powi(self, n: i32) -> Self {
        self.pow_int(n).expect("integer power")
    }
    fn powr(self, e: Self) -> Self {
        self.pow_real(e).expect("real power of a nonpositive base")
    }
    fn abs(self) -> Self {
        Interval::abs(self)
    }
    fn mag(self) -> f64 {
        Interval::mag(&self)
    }
}

pub trait Field:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Sum
{
    type R: Real;
    fn zero() -> Self;
    fn real(r: Self::R) -> Self;
    fn from_c(z: Complex64) -> Self;
    fn phase(p: &Phase) -> Self;
    fn conj(self) -> Self;
    fn scale(self, r: Self::R) -> Self;
    fn re(self) -> Self::R;
    fn im(self) -> Self::R;
    fn abs(self) -> Self::R;
    fn mid(self) -> Complex64;
}

impl Field for Complex64 {
    type R = f64;
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn real(r: f64) -> Self {
        Complex64::new(r, 0.0)
    }
    fn from_c(z: Complex64) -> Self {
        z
    }
    fn phase(p: &Phase) -> Self {
        p.to_complex()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn scale(self, r: f64) -> Self {
        self * r
    }
    fn re(self) -> f64 {
        self.re
    }
    fn im(self) -> f64 {
        self.im
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn mid(self) -> Complex64 {
        self
    }
}

impl Field for CInterval {
    type R = Interval;
    fn zero() -> Self {
        CInterval::ZERO
    }
    fn real(r: Interval) -> Self {
        CInterval::from(r)
    }
    fn from_c(z: Complex64) -> Self {
        CInterval::point(z)
    }
    fn phase(p: &Phase) -> Self {
        p.enclose()
    }
    fn conj(self) -> Self {
        CInterval::conj(self)
    }
    fn scale(self, r: Interval) -> Self {
        CInterval::scale(self, r)
    }
    fn re(self) -> Interval {
        self.re
    }
    fn im(self) -> Interval {
        self.im
    }
    fn abs(self) -> Interval {
        CInterval::abs(self)
    }
    fn mid(self) -> Complex64 {
        CInterval::mid(&self)
    }
}

/// Finite-support full Fourier coefficients in deterministic insertion order.
#[derive(Clone, Debug)]
pub struct Full<F> {
    pub ks: Vec<Index>,
    pub vals: Vec<F>,
    pos: HashMap<Index, usize>,
}

impl<F: Field> Default for Full<F> {
    fn default() -> Self {
        Full { ks: Vec::new(), vals: Vec::new(), pos: HashMap::new() }
    }
}

impl<F: Field> Full<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }

    pub fn get(&self, k: Index) -> F {
        self.pos.get(&k).map_or(F::zero(), |&i| self.vals[i])
    }

    pub fn add_at(&mut self, k: Index, v: F) {
        match self.pos.get(&k) {
            Some(&i) => self.vals[i] += v,
            None => {
                self.pos.insert(k, self.ks.len());
                self.ks.push(k);
                self.vals.push(v);
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Index, F)> + '_ {
        self.ks.iter().copied().zip(self.vals.iter().copied())
    }

    /// `(c * c')_k = sum_{k1 + k2 = k} c_k1 c'_k2`.
    pub fn conv(&self, other: &Full<F>) -> Full<F> {
        let mut out = Full::new();
        for (k1, a) in self.iter() {
            for (k2, b) in other.iter() {
                out.add_at(add(k1, k2), a * b);
            }
        }
        out
    }

    /// One coefficient of the convolution.
    pub fn conv_at(&self, other: &Full<F>, k: Index) -> F {
        let mut s = F::zero();
        for (k1, a) in self.iter() {
            if let Some(&j) = other.pos.get(&sub(k, k1)) {
                s += a * other.vals[j];
            }
        }
        s
    }

    /// `sum_k |c_k| nu^||k||` with the norm computed by `norm_of`.
    pub fn norm_nu(&self, nu: f64, norm_of: impl Fn(Index) -> f64) -> f64 {
        self.iter().map(|(k, v)| v.abs().mid() * nu.powf(norm_of(k))).sum()
    }

    pub fn to_c64(&self) -> Full<Complex64> {
        let mut out = Full::new();
        for (k, v) in self.iter() {
            out.add_at(k, v.mid());
        }
        out
    }
}

pub fn add(a: Index, b: Index) -> Index {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Index, b: Index) -> Index {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn neg(a: Index) -> Index {
    [-a[0], -a[1], -a[2]]
}

/// `sigma(m e_0 + b)`, where `b[i]` is the coefficient of entry `i` (entry 0
/// is ignored; the zero mode is `m`). Shorter `b` means zero beyond.
pub fn sigma_expand<F: Field>(set: &ReducedSet, m: F, b: &[F]) -> Full<F> {
    let mut out = Full::new();
    out.add_at([0, 0, 0], m);
    for (i, e) in set.entries.iter().enumerate().skip(1).take(b.len().saturating_sub(1)) {
        for (kk, ph) in &e.orbit {
            out.add_at(*kk, F::phase(ph) * b[i]);
        }
    }
    out
}

/// `sigma(b)_{-k}` for entry `i` of the set: `phi_k b_{tau(k)}`.
pub fn sigma_neg<F: Field>(set: &ReducedSet, b: &[F], i: usize) -> F {
    let e = &set.entries[i];
    let t = e.tau;
    if t < b.len() { F::phase(&e.phi) * b[t] } else { F::zero() }
}

/// `||b||_{X_0} = sum_{k != 0} |b_k| omega_k`.
pub fn norm_x0(set: &ReducedSet, b: &[Complex64]) -> f64 {
    b.iter().enumerate().skip(1).map(|(i, v)| v.norm() * set.entries[i].weight).sum()
}

/// Rigorous upper bound of `||b||_{X_0}`.
pub fn norm_x0_iv(set: &ReducedSet, b: &[CInterval]) -> f64 {
    let s: Interval = b.iter().enumerate().skip(1).map(|(i, v)| v.abs() * set.weight_iv(i)).sum();
    s.hi()
}

/// Full-lattice `||c||_nu`.
pub fn norm_nu(set: &ReducedSet, c: &Full<Complex64>) -> f64 {
    let kb = &set.kappa_bar;
    let lat = set.lattice;
    c.norm_nu(set.nu, |k| {
        let d = lat.delta(k);
        (0..kb.len()).map(|j| d[j] as f64 * kb[j]).sum::<f64>().sqrt()
    })
}

/// `|v|_{F^J} = max_j |v_j| / kappa_bar_j`.
pub fn norm_kappa(kappa_bar: &[f64], v: &[Complex64]) -> f64 {
    v.iter().zip(kappa_bar).map(|(x, k)| x.norm() / k).fold(0.0, f64::max)
}

/// Dual norm `sum_j |q_j| kappa_bar_j`.
pub fn dual_norm(kappa_bar: &[f64], q: &[Complex64]) -> f64 {
    q.iter().zip(kappa_bar).map(|(x, k)| x.norm() * k).sum()
}

/// `1/2 (b + I_* b)`, the nearest conjugate-symmetric vector.
pub fn conj_symmetrize(set: &ReducedSet, b: &[Complex64]) -> Vec<Complex64> {
    let mut full = b.to_vec();
    full.resize(set.len(), Complex64::new(0.0, 0.0));
    let c = set.conj_apply(&full);
    let mut out: Vec<Complex64> = full.iter().zip(&c).map(|(x, y)| (x + y) * 0.5).collect();
    out.truncate(b.len());
    out
}

/// Serialized coefficient record.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CoeffRecord {
    pub group: String,
    pub k_cut: f64,
    pub nu: f64,
    pub kappa_bar: Vec<f64>,
    /// `(k, re, im)` for each nonzero reduced coefficient.
    pub coeffs: Vec<(Index, f64, f64)>,
}

impl CoeffRecord {
    pub fn from_reduced(set: &ReducedSet, k_cut: f64, b: &[Complex64]) -> CoeffRecord {
        let coeffs = b
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, v)| v.re != 0.0 || v.im != 0.0)
            .map(|(i, v)| (set.entries[i].k, v.re, v.im))
            .collect();
        CoeffRecord { group: set.group_name.clone(), k_cut, nu: set.nu, kappa_bar: set.kappa_bar.clone(), coeffs }
    }

    /// Places the coefficients on `set`; indices must be reduced representatives in it.
    pub fn to_reduced(&self, set: &ReducedSet, len: usize) -> Result<Vec<Complex64>, String> {
        let mut b = vec![Complex64::new(0.0, 0.0); len];
        for &(k, re, im) in &self.coeffs {
            let i = set.position(k).ok_or_else(|| format!("index {k:?} is not a reduced representative"))?;
            if i == 0 || i >= len {
                return Err(format!("index {k:?} outside the truncation"));
            }
            b[i] = Complex64::new(re, im);
        }
        Ok(b)
    }
}
