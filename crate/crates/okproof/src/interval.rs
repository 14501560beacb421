//! Outward-rounded interval arithmetic over `f64`.
//!
//! Basic operations use error-free transformations (TwoSum, FMA-based
//! TwoProd) to decide the exact rounding direction, which yields the tightest
//! enclosure representable with directed rounding. Library transcendental
//! functions are widened by two ulps on each side.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("division by an interval containing zero: {0}")]
    DivByZero(Interval),
    #[error("{op} undefined on {arg}")]
    Domain { op: &'static str, arg: Interval },
}

/// Below this magnitude the error terms of TwoProd/division can underflow, so
/// we stop trusting them and inflate unconditionally.
const TINY: f64 = 1e-290;

#[inline]
fn down(x: f64) -> f64 {
    if x.is_nan() { f64::NEG_INFINITY } else { x.next_down() }
}

#[inline]
fn up(x: f64) -> f64 {
    if x.is_nan() { f64::INFINITY } else { x.next_up() }
}

/// Rounded sum plus sign of the rounding error (exact − rounded).
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    if !s.is_finite() {
        return (s, 0.0);
    }
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn add_down(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if s.is_nan() {
        f64::NEG_INFINITY
    } else if e < 0.0 {
        s.next_down()
    } else {
        s
    }
}

#[inline]
fn add_up(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if s.is_nan() {
        f64::INFINITY
    } else if e > 0.0 {
        s.next_up()
    } else {
        s
    }
}

/// Product with zero times anything equal to zero (interval convention).
#[inline]
fn mul_err(a: f64, b: f64) -> (f64, Option<f64>) {
    if a == 0.0 || b == 0.0 {
        return (0.0, Some(0.0));
    }
    let p = a * b;
    if !p.is_finite() || p.abs() < TINY {
        return (p, None);
    }
    (p, Some(a.mul_add(b, -p)))
}

#[inline]
fn mul_down(a: f64, b: f64) -> f64 {
    match mul_err(a, b) {
        (p, Some(e)) => if e < 0.0 { p.next_down() } else { p },
        (p, None) => if p.is_infinite() { p } else { down(p) },
    }
}

#[inline]
fn mul_up(a: f64, b: f64) -> f64 {
    match mul_err(a, b) {
        (p, Some(e)) => if e > 0.0 { p.next_up() } else { p },
        (p, None) => if p.is_infinite() { p } else { up(p) },
    }
}

/// Quotient and sign of (exact − rounded).
#[inline]
fn div_err(a: f64, b: f64) -> (f64, Option<f64>) {
    if a == 0.0 {
        return (0.0, Some(0.0));
    }
    let q = a / b;
    if !q.is_finite() || q.abs() < TINY || b.is_infinite() {
        if b.is_infinite() && a.is_finite() {
            return (0.0, None);
        }
        return (q, None);
    }
    let r = (-q).mul_add(b, a);
    (q, Some(r * b.signum()))
}

#[inline]
fn div_down(a: f64, b: f64) -> f64 {
    match div_err(a, b) {
        (q, Some(e)) => if e < 0.0 { q.next_down() } else { q },
        (q, None) => if q.is_infinite() { q } else { down(q) },
    }
}

#[inline]
fn div_up(a: f64, b: f64) -> f64 {
    match div_err(a, b) {
        (q, Some(e)) => if e > 0.0 { q.next_up() } else { q },
        (q, None) => if q.is_infinite() { q } else { up(q) },
    }
}

#[inline]
fn sqrt_down(x: f64) -> f64 {
    let s = x.sqrt();
    if s == 0.0 || !s.is_finite() {
        return s;
    }
    let r = (-s).mul_add(s, x);
    if r < 0.0 { s.next_down() } else { s }
}

#[inline]
fn sqrt_up(x: f64) -> f64 {
    let s = x.sqrt();
    if s == 0.0 || !s.is_finite() {
        return s;
    }
    let r = (-s).mul_add(s, x);
    if r > 0.0 { s.next_up() } else { s }
}

#[inline]
fn widen_down(x: f64) -> f64 {
    down(down(x))
}

#[inline]
fn widen_up(x: f64) -> f64 {
    up(up(x))
}

#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

impl Default for Interval {
    fn default() -> Self {
        Interval::ZERO
    }
}

impl From<f64> for Interval {
    fn from(x: f64) -> Self {
        Interval::point(x)
    }
}

impl Interval {
    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };
    pub const ONE: Interval = Interval { lo: 1.0, hi: 1.0 };
    pub const ENTIRE: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    /// Panics if `lo > hi` or either bound is NaN.
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "invalid interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        assert!(!x.is_nan(), "NaN point interval");
        Interval { lo: x, hi: x }
    }

    /// Smallest interval containing both values, in any order.
    pub fn hull_of(a: f64, b: f64) -> Self {
        Interval::new(a.min(b), a.max(b))
    }

    /// `[x - r, x + r]` rounded outward.
    pub fn ball(x: f64, r: f64) -> Self {
        let r = r.abs();
        Interval { lo: add_down(x, -r), hi: add_up(x, r) }
    }

    /// Enclosure of the rational `p/q`.
    pub fn ratio(p: i64, q: i64) -> Self {
        Interval::point(p as f64) / Interval::point(q as f64)
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn mid(&self) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        let m = 0.5 * self.lo + 0.5 * self.hi;
        if m.is_finite() { m } else { 0.0 }
    }

    /// Upper bound on the radius around `mid()`.
    pub fn rad(&self) -> f64 {
        let m = self.mid();
        add_up(self.hi, -m).max(add_up(m, -self.lo))
    }

    pub fn width(&self) -> f64 {
        add_up(self.hi, -self.lo)
    }

    /// Upper bound on `|x|` over the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Lower bound on `|x|` over the interval.
    pub fn mig(&self) -> f64 {
        if self.contains_zero() { 0.0 } else { self.lo.abs().min(self.hi.abs()) }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn is_positive(&self) -> bool {
        self.lo > 0.0
    }

    pub fn is_negative(&self) -> bool {
        self.hi < 0.0
    }

    pub fn try_div(self, rhs: Interval) -> Result<Interval, DomainError> {
        if rhs.contains_zero() {
            return Err(DomainError::DivByZero(rhs));
        }
        let (a, b) = (self, rhs);
        let lo = div_down(a.lo, b.lo)
            .min(div_down(a.lo, b.hi))
            .min(div_down(a.hi, b.lo))
            .min(div_down(a.hi, b.hi));
        let hi = div_up(a.lo, b.lo)
            .max(div_up(a.lo, b.hi))
            .max(div_up(a.hi, b.lo))
            .max(div_up(a.hi, b.hi));
        Ok(Interval { lo, hi })
    }

    pub fn recip(self) -> Result<Interval, DomainError> {
        Interval::ONE.try_div(self)
    }

    pub fn sqr(self) -> Interval {
        let a = self.abs();
        Interval { lo: mul_down(a.lo, a.lo), hi: mul_up(a.hi, a.hi) }
    }

    pub fn sqrt(self) -> Result<Interval, DomainError> {
        if self.lo < 0.0 {
            return Err(DomainError::Domain { op: "sqrt", arg: self });
        }
        Ok(Interval { lo: sqrt_down(self.lo), hi: sqrt_up(self.hi) })
    }

    pub fn abs(self) -> Interval {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            -self
        } else {
            Interval { lo: 0.0, hi: (-self.lo).max(self.hi) }
        }
    }

    pub fn max(self, other: Interval) -> Interval {
        Interval { lo: self.lo.max(other.lo), hi: self.hi.max(other.hi) }
    }

    pub fn min(self, other: Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.min(other.hi) }
    }

    pub fn pow_int(self, n: i32) -> Result<Interval, DomainError> {
        if n < 0 {
            return self.pow_int(-n)?.recip();
        }
        if n == 0 {
            return Ok(Interval::ONE);
        }
        // Even powers depend only on |x|; odd powers are monotone so working
        // on |x| of each endpoint separately keeps the result tight.
        if n % 2 == 0 {
            let a = self.abs();
            Ok(Interval { lo: pow_pos_down(a.lo, n as u32), hi: pow_pos_up(a.hi, n as u32) })
        } else {
            let lo = if self.lo >= 0.0 {
                pow_pos_down(self.lo, n as u32)
            } else {
                -pow_pos_up(-self.lo, n as u32)
            };
            let hi = if self.hi >= 0.0 {
                pow_pos_up(self.hi, n as u32)
            } else {
                -pow_pos_down(-self.hi, n as u32)
            };
            Ok(Interval { lo, hi })
        }
    }

    pub fn exp(self) -> Interval {
        let lo = if self.lo == 0.0 { 1.0 } else { widen_down(self.lo.exp()).max(0.0) };
        let hi = if self.hi == 0.0 { 1.0 } else { widen_up(self.hi.exp()) };
        Interval { lo, hi }
    }

    pub fn log(self) -> Result<Interval, DomainError> {
        if self.lo <= 0.0 {
            return Err(DomainError::Domain { op: "log", arg: self });
        }
        let lo = if self.lo == 1.0 { 0.0 } else { widen_down(self.lo.ln()) };
        let hi = if self.hi == 1.0 { 0.0 } else { widen_up(self.hi.ln()) };
        Ok(Interval { lo, hi })
    }

    /// `self^e` for a positive base. Integer point exponents go through
    /// `pow_int`; everything else through `exp(e log x)`.
    pub fn pow_real(self, e: Interval) -> Result<Interval, DomainError> {
        if self.lo <= 0.0 {
            return Err(DomainError::Domain { op: "pow_real", arg: self });
        }
        if e.is_point() && e.lo.fract() == 0.0 && e.lo.abs() <= 1024.0 {
            return self.pow_int(e.lo as i32);
        }
        Ok((e * self.log()?).exp())
    }

    /// Convenience for `x^e` with a real point exponent.
    pub fn powf(self, e: f64) -> Result<Interval, DomainError> {
        self.pow_real(Interval::point(e))
    }

    /// Enclosure of Euler's number.
    pub fn e() -> Interval {
        Interval::ONE.exp()
    }

    pub fn scale(self, s: f64) -> Interval {
        self * Interval::point(s)
    }

    pub fn sum<I: IntoIterator<Item = Interval>>(it: I) -> Interval {
        it.into_iter().fold(Interval::ZERO, |a, b| a + b)
    }
}

fn pow_pos_down(x: f64, n: u32) -> f64 {
    debug_assert!(x >= 0.0);
    let mut acc = 1.0;
    let mut base = x;
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            acc = mul_down(acc, base);
        }
        k >>= 1;
        if k > 0 {
            base = mul_down(base, base);
        }
    }
    acc.max(0.0)
}

fn pow_pos_up(x: f64, n: u32) -> f64 {
    debug_assert!(x >= 0.0);
    let mut acc = 1.0;
    let mut base = x;
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            acc = mul_up(acc, base);
        }
        k >>= 1;
        if k > 0 {
            base = mul_up(base, base);
        }
    }
    acc
}

impl Add for Interval {
    type Output = Interval;
    #[inline]
    fn add(self, rhs: Interval) -> Interval {
        Interval { lo: add_down(self.lo, rhs.lo), hi: add_up(self.hi, rhs.hi) }
    }
}

impl Sub for Interval {
    type Output = Interval;
    #[inline]
    fn sub(self, rhs: Interval) -> Interval {
        Interval { lo: add_down(self.lo, -rhs.hi), hi: add_up(self.hi, -rhs.lo) }
    }
}

impl Neg for Interval {
    type Output = Interval;
    #[inline]
    fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }
}

impl Mul for Interval {
    type Output = Interval;
    #[inline]
    fn mul(self, rhs: Interval) -> Interval {
        let (a, b) = (self, rhs);
        if a.lo >= 0.0 && b.lo >= 0.0 {
            return Interval { lo: mul_down(a.lo, b.lo), hi: mul_up(a.hi, b.hi) };
        }
        let lo = mul_down(a.lo, b.lo)
            .min(mul_down(a.lo, b.hi))
            .min(mul_down(a.hi, b.lo))
            .min(mul_down(a.hi, b.hi));
        let hi = mul_up(a.lo, b.lo)
            .max(mul_up(a.lo, b.hi))
            .max(mul_up(a.hi, b.lo))
            .max(mul_up(a.hi, b.hi));
        Interval { lo, hi }
    }
}

/// Panics on a divisor containing zero; use [`Interval::try_div`] when that
/// can happen.
impl Div for Interval {
    type Output = Interval;
    fn div(self, rhs: Interval) -> Interval {
        match self.try_div(rhs) {
            Ok(v) => v,
            Err(e) => panic!("{e}"),
        }
    }
}

impl Add<f64> for Interval {
    type Output = Interval;
    fn add(self, rhs: f64) -> Interval {
        self + Interval::point(rhs)
    }
}

impl Sub<f64> for Interval {
    type Output = Interval;
    fn sub(self, rhs: f64) -> Interval {
        self - Interval::point(rhs)
    }
}

impl Mul<f64> for Interval {
    type Output = Interval;
    fn mul(self, rhs: f64) -> Interval {
        self * Interval::point(rhs)
    }
}

impl Div<f64> for Interval {
    type Output = Interval;
    fn div(self, rhs: f64) -> Interval {
        self / Interval::point(rhs)
    }
}

impl AddAssign for Interval {
    fn add_assign(&mut self, rhs: Interval) {
        *self = *self + rhs;
    }
}

impl SubAssign for Interval {
    fn sub_assign(&mut self, rhs: Interval) {
        *self = *self - rhs;
    }
}

impl MulAssign for Interval {
    fn mul_assign(&mut self, rhs: Interval) {
        *self = *self * rhs;
    }
}

impl std::iter::Sum for Interval {
    fn sum<I: Iterator<Item = Interval>>(iter: I) -> Interval {
        iter.fold(Interval::ZERO, |a, b| a + b)
    }
}

/// Upward-rounded sum of nonnegative floats.
pub fn sum_up<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, add_up)
}

/// Upward-rounded product of two floats.
pub fn prod_up(a: f64, b: f64) -> f64 {
    mul_up(a, b)
}

/// Upward-rounded sum of two floats.
pub fn plus_up(a: f64, b: f64) -> f64 {
    add_up(a, b)
}

/// Complex interval as a rectangle.
#[derive(Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CInterval {
    pub re: Interval,
    pub im: Interval,
}

impl fmt::Debug for CInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} + i{:?}", self.re, self.im)
    }
}

impl From<Complex64> for CInterval {
    fn from(z: Complex64) -> Self {
        CInterval::point(z)
    }
}

impl From<Interval> for CInterval {
    fn from(x: Interval) -> Self {
        CInterval { re: x, im: Interval::ZERO }
    }
}

impl CInterval {
    pub const ZERO: CInterval = CInterval { re: Interval::ZERO, im: Interval::ZERO };
    pub const ONE: CInterval = CInterval { re: Interval::ONE, im: Interval::ZERO };

    pub fn new(re: Interval, im: Interval) -> Self {
        CInterval { re, im }
    }

    pub fn point(z: Complex64) -> Self {
        CInterval { re: Interval::point(z.re), im: Interval::point(z.im) }
    }

    pub fn mid(&self) -> Complex64 {
        Complex64::new(self.re.mid(), self.im.mid())
    }

    pub fn conj(self) -> CInterval {
        CInterval { re: self.re, im: -self.im }
    }

    pub fn scale(self, s: Interval) -> CInterval {
        CInterval { re: self.re * s, im: self.im * s }
    }

    pub fn norm_sqr(self) -> Interval {
        self.re.sqr() + self.im.sqr()
    }

    /// Enclosure of `|z|`.
    pub fn abs(self) -> Interval {
        if self.im.is_point() && self.im.lo() == 0.0 {
            return self.re.abs();
        }
        if self.re.is_point() && self.re.lo() == 0.0 {
            return self.im.abs();
        }
        self.norm_sqr().sqrt().expect("nonnegative")
    }

    /// Upper bound on `|z|` over the rectangle.
    pub fn mag(self) -> f64 {
        self.abs().hi()
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.re.contains(z.re) && self.im.contains(z.im)
    }

    pub fn hull(&self, other: &CInterval) -> CInterval {
        CInterval { re: self.re.hull(&other.re), im: self.im.hull(&other.im) }
    }

    /// `exp(2 pi i p/q)` from an exact rational angle. Angles with
    /// denominators dividing 24 get enclosures built from exact algebraic
    /// values; anything else falls back to widened library trig.
    pub fn unit_phase(p: i64, q: i64) -> CInterval {
        assert!(q > 0, "phase denominator must be positive");
        let p = p.rem_euclid(q);
        if 24 % q == 0 {
            let step = (p * (24 / q)) as usize;
            return phase24(step);
        }
        let t = 2.0 * std::f64::consts::PI * (p as f64) / (q as f64);
        let (s, c) = t.sin_cos();
        // The float angle carries its own error of a few ulps of 2π; four ulps
        // of inflation around the library values covers that comfortably.
        let w = 8.0 * f64::EPSILON;
        CInterval { re: Interval::ball(c, w).min(Interval::ONE).max(-Interval::ONE), im: Interval::ball(s, w).min(Interval::ONE).max(-Interval::ONE) }
    }

    /// True when both parts are exact points.
    pub fn is_point(&self) -> bool {
        self.re.is_point() && self.im.is_point()
    }
}

/// cos/sin of 2π·step/24 from exact algebraic expressions.
fn phase24(step: usize) -> CInterval {
    let half = Interval::point(0.5);
    let s2 = Interval::point(2.0).sqrt().unwrap();
    let s3 = Interval::point(3.0).sqrt().unwrap();
    let s6 = Interval::point(6.0).sqrt().unwrap();
    // cos(k·15°) for k = 0..=6; the rest follows by symmetry.
    let quarter = Interval::point(0.25);
    let c15 = (s6 + s2) * quarter;
    let c75 = (s6 - s2) * quarter;
    let c30 = s3 * half;
    let c45 = s2 * half;
    let table = [Interval::ONE, c15, c30, c45, half, c75, Interval::ZERO];
    let cos_k = |k: usize| -> Interval {
        // k in 0..24, in units of 15 degrees
        let k = k % 24;
        match k {
            0..=6 => table[k],
            7..=12 => -table[12 - k],
            13..=18 => -table[k - 12],
            _ => table[24 - k],
        }
    };
    let re = cos_k(step);
    let im = cos_k((step + 18) % 24);
    CInterval { re, im }
}

impl Add for CInterval {
    type Output = CInterval;
    #[inline]
    fn add(self, rhs: CInterval) -> CInterval {
        CInterval { re: self.re + rhs.re, im: self.im + rhs.im }
    }
}

impl Sub for CInterval {
    type Output = CInterval;
    #[inline]
    fn sub(self, rhs: CInterval) -> CInterval {
        CInterval { re: self.re - rhs.re, im: self.im - rhs.im }
    }
}

impl Neg for CInterval {
    type Output = CInterval;
    fn neg(self) -> CInterval {
        CInterval { re: -self.re, im: -self.im }
    }
}

impl Mul for CInterval {
    type Output = CInterval;
    #[inline]
    fn mul(self, rhs: CInterval) -> CInterval {
        // Skip the cross terms when a factor is real; keeps exact phases ±1
        // from smearing.
        if rhs.im.is_point() && rhs.im.lo() == 0.0 {
            return self.scale(rhs.re);
        }
        if self.im.is_point() && self.im.lo() == 0.0 {
            return rhs.scale(self.re);
        }
        if rhs.re.is_point() && rhs.re.lo() == 0.0 {
            return CInterval { re: -(self.im * rhs.im), im: self.re * rhs.im };
        }
        if self.re.is_point() && self.re.lo() == 0.0 {
            return CInterval { re: -(self.im * rhs.im), im: self.im * rhs.re };
        }
        CInterval {
            re: self.re * rhs.re - self.im * rhs.im,
            im: self.re * rhs.im + self.im * rhs.re,
        }
    }
}

impl Mul<Interval> for CInterval {
    type Output = CInterval;
    fn mul(self, rhs: Interval) -> CInterval {
        self.scale(rhs)
    }
}

impl AddAssign for CInterval {
    fn add_assign(&mut self, rhs: CInterval) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for CInterval {
    fn sum<I: Iterator<Item = CInterval>>(iter: I) -> CInterval {
        iter.fold(CInterval::ZERO, |a, b| a + b)
    }
}
