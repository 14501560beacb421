//! Rigorous existence proofs: tail operators, the ten Y/Z/W bounds, radii
//! polynomials, the search for a validated radius, and certificates.
//!
//! Notation: `x = (kappa, b)` with `|kappa|_{C^J} = max_j |kappa_j| / kappa_bar_j`
//! and `||b|| = sum_k |b_k| omega_k`, `omega_k = |G.k| nu^{||k||}`. Unknowns are
//! ordered `(kappa_1..kappa_J, b_1..b_N)`; `jn = 0` when `kappa` is frozen.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::energy_cert::EnergyEnclosure;
use crate::interval::{CInterval, Interval};
use crate::morse::MorseResult;
use crate::okmodel::{self, dphi_entry, jacobian_blocks, Model};
use crate::seqspace::{sigma_neg, Full};
use crate::solver::{self, Candidate, State};
use crate::spacegroup::{group_dir, GroupError, ReducedSet, SpaceGroup};

#[derive(Debug, Error)]
pub enum ValidatorError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Upper bounds of the tail constants `C_P^[0]`, `C_P^[1]`, `D_P^[0..2]`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct TailConstants {
    pub c_p0: f64,
    pub c_p1: f64,
    pub d_p0: f64,
    pub d_p1: f64,
    pub d_p2: f64,
}

fn iv(x: f64) -> Interval {
    Interval::point(x)
}

/// Checks `K^2 > max{y_P, gamma/(1-r1), 1/(1-r1), 2}` rigorously.
pub fn check_k_restrictions(gamma: f64, k: f64, r1: f64) -> Result<(), ValidatorError> {
    let k2 = iv(k).sqr();
    let om = iv(1.0) - iv(r1);
    let need = [
        ("y_P", okmodel::y_p_iv(gamma)),
        ("gamma/(1-r1)", iv(gamma) / om),
        ("1/(1-r1)", iv(1.0) / om),
        ("2", iv(2.0)),
    ];
    for (what, v) in need {
        if k2.lo() <= v.hi() {
            return Err(ValidatorError::Config(format!("K^2 = {} does not exceed {what} = {}", k2.lo(), v.hi())));
        }
    }
    Ok(())
}

/// Tail constants for `gamma`, cutoff `K`, weight `nu` and `r1 = r1*`.
pub fn aux_tail_constants(gamma: f64, k: f64, nu: f64, r1: f64) -> Result<TailConstants, ValidatorError> {
    if !(0.0..1.0).contains(&r1) || nu <= 1.0 {
        return Err(ValidatorError::Config(format!("need 0 <= r1 < 1 and nu > 1 (r1 = {r1}, nu = {nu})")));
    }
    let model = Model::new(gamma, 0.0);
    let k2 = iv(k).sqr();
    let yp = okmodel::y_p_iv(gamma);
    if k2.lo() <= yp.hi().max(2.0) {
        return Err(ValidatorError::Config(format!("K^2 = {} must exceed max(y_P, 2)", k2.lo())));
    }
    let om = iv(1.0) - iv(r1);
    if (k2 * om).lo() < gamma.max(1.0) {
        return Err(ValidatorError::Config("K^2 (1 - r1) must be at least max(1, gamma)".into()));
    }
    let g = iv(gamma);
    let g2 = g.sqr();
    let pk = model.p(k2, 0);
    let c_p0 = (iv(1.0) / pk).hi();
    let c_p1 = if gamma <= 2.0 {
        (k2 / (g2 * pk)).hi()
    } else {
        (k2 * model.p(k2 * (iv(1.0) + iv(r1)), 1) / pk).hi()
    };
    let lnu = iv(nu).log().map_err(|e| ValidatorError::Config(e.to_string()))?;
    let nu_2k = iv(nu).pow_real(iv(-2.0 * k)).expect("nu > 0");
    let peak = (g2 * (Interval::e() * lnu).sqr()).recip().expect("positive").hi();
    let decayed = (k2 * nu_2k / g2).hi();
    let inv_ln = lnu.recip().expect("positive");
    let d_p1 = if k <= inv_ln.lo() {
        peak
    } else if k > inv_ln.hi() {
        decayed
    } else {
        peak.max(decayed)
    };
    let d_p0 = ((iv(1.0) + iv(r1)) * iv(d_p1)).hi();
    let d_p2 = (iv(2.0) * nu_2k / (om.pow_int(3).expect("positive") * k2)).hi();
    Ok(TailConstants { c_p0, c_p1, d_p0, d_p1, d_p2 })
}

/// `(Lambda b)_k = P(Delta_k kappa_bar) |G.k| b_k` for every entry of the set,
/// as rigorous enclosures; tail entries must be positive.
pub fn tail_ops(model: &Model, set: &ReducedSet, k_cut: f64) -> Result<Vec<Interval>, ValidatorError> {
    if iv(k_cut).sqr().lo() <= okmodel::y_p_iv(model.gamma).hi() {
        return Err(ValidatorError::Config(format!("K = {k_cut} must exceed sqrt(y_P)")));
    }
    let n = set.count_within(k_cut);
    let mut lam = vec![Interval::ZERO];
    for i in 1..set.len() {
        let l = model.p(set.dk_iv(i), 0) * iv(set.entries[i].orbit_size as f64);
        if i >= n && !l.is_positive() {
            return Err(ValidatorError::Config(format!("P not positive at tail index {:?}", set.entries[i].k)));
        }
        lam.push(l);
    }
    Ok(lam)
}

/// `Lambda^{-1}` as a diagonal: zero on `||k|| <= K`, reciprocal beyond.
pub fn tail_inverse(lam: &[Interval], n: usize) -> Vec<Interval> {
    lam.iter().enumerate().map(|(i, l)| if i < n { Interval::ZERO } else { l.recip().expect("positive tail") }).collect()
}

/// Upward-rounded bounds. `w[i][c][v]` is `W^{[i]}_{c v}`: row block `i`
/// (kappa, b), column block `c` (kappa, b), variation `v` (`r1`, `r2`).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RadiiBounds {
    pub y: [f64; 2],
    pub z: [[f64; 2]; 2],
    pub w: [[[f64; 2]; 2]; 2],
    pub r_star: [f64; 2],
}

impl RadiiBounds {
    /// `M(r)` entries as intervals.
    fn m_of(&self, r: [f64; 2]) -> [[Interval; 2]; 2] {
        let mut m = [[Interval::ZERO; 2]; 2];
        for i in 0..2 {
            for c in 0..2 {
                m[i][c] = iv(self.z[i][c]) + iv(self.w[i][c][0]) * iv(r[0]) + iv(self.w[i][c][1]) * iv(r[1]);
            }
        }
        m
    }

    pub fn contraction_matrix(&self, r: [f64; 2]) -> [[f64; 2]; 2] {
        let m = self.m_of(r);
        [[m[0][0].hi(), m[0][1].hi()], [m[1][0].hi(), m[1][1].hi()]]
    }
}

/// Which polynomials decide success.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyMode {
    /// `p1, p2, pt3, pt4 < 0`.
    Full,
    /// The stronger two-inequality form (W without the factor 1/2, no pt3/pt4).
    StrictSimple,
    /// `kappa` frozen: only `p2, pt3, pt4` (the kappa row is void).
    FrozenKappa,
}

/// `(p1, p2, pt3, pt4)` at `r`, upward rounded. In strict-simple mode the
/// third and fourth entries are zero and the first two are the strong forms.
pub fn radii_polynomials(b: &RadiiBounds, r: [f64; 2], mode: PolyMode) -> Result<[f64; 4], ValidatorError> {
    if r[0] > b.r_star[0] || r[1] > b.r_star[1] || r[0] < 0.0 || r[1] < 0.0 {
        return Err(ValidatorError::Config(format!("r = {r:?} outside [0, r*] with r* = {:?}", b.r_star)));
    }
    let ri = [iv(r[0]), iv(r[1])];
    let half = if mode == PolyMode::StrictSimple { iv(1.0) } else { iv(0.5) };
    let wr = |i: usize, c: usize| iv(b.w[i][c][0]) * ri[0] + iv(b.w[i][c][1]) * ri[1];
    let p1 = iv(b.y[0]) + ri[0] * (iv(b.z[0][0]) + half * wr(0, 0) - iv(1.0)) + ri[1] * (iv(b.z[0][1]) + half * wr(0, 1));
    let p2 = iv(b.y[1]) + ri[0] * (iv(b.z[1][0]) + half * wr(1, 0)) + ri[1] * (iv(b.z[1][1]) + half * wr(1, 1) - iv(1.0));
    if mode == PolyMode::StrictSimple {
        return Ok([p1.hi(), p2.hi(), 0.0, 0.0]);
    }
    let m = b.m_of(r);
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let p3 = tr - iv(2.0);
    let p4 = tr - det - iv(1.0);
    Ok([p1.hi(), p2.hi(), p3.hi(), p4.hi()])
}

fn all_negative(p: &[f64; 4], mode: PolyMode) -> bool {
    match mode {
        PolyMode::Full => p.iter().all(|&v| v < 0.0),
        PolyMode::StrictSimple => p[0] < 0.0 && p[1] < 0.0,
        PolyMode::FrozenKappa => p[1] < 0.0 && p[2] < 0.0 && p[3] < 0.0,
    }
}

const R_FLOOR: f64 = 1e-14;
const GRID: usize = 80;

fn log_grid(hi: f64) -> Vec<f64> {
    if hi <= R_FLOOR {
        return vec![hi];
    }
    let (a, b) = (R_FLOOR.ln(), hi.ln());
    (0..GRID).map(|i| if i + 1 == GRID { hi } else { (a + (b - a) * i as f64 / (GRID - 1) as f64).exp() }).collect()
}

/// Search `(0, r*]` for `r_hat` with all deciding polynomials negative: a
/// logarithmic grid scan in order of increasing radius, then shrinking each
/// component toward the minimal corner. Every acceptance uses the interval
/// evaluation of `radii_polynomials`.
pub fn find_r_hat(b: &RadiiBounds, mode: PolyMode) -> Option<([f64; 2], [f64; 4])> {
    let ok = |r: [f64; 2]| -> Option<[f64; 4]> {
        let p = radii_polynomials(b, r, mode).ok()?;
        all_negative(&p, mode).then_some(p)
    };
    let g2 = log_grid(b.r_star[1]);
    let mut found = None;
    if mode == PolyMode::FrozenKappa {
        found = g2.iter().find(|&&r2| ok([0.0, r2]).is_some()).map(|&r2| [0.0, r2]);
    } else {
        let g1 = log_grid(b.r_star[0]);
        'outer: for s in 0..(g1.len() + g2.len() - 1) {
            for i in 0..g1.len() {
                if s < i || s - i >= g2.len() {
                    continue;
                }
                let r = [g1[i], g2[s - i]];
                if ok(r).is_some() {
                    found = Some(r);
                    break 'outer;
                }
            }
        }
    }
    let mut r = found?;
    let comps: &[usize] = if mode == PolyMode::FrozenKappa { &[1] } else { &[0, 1] };
    for _ in 0..2 {
        for &c in comps {
            // bisection in log scale between the floor and the current value
            let mut hi = r[c];
            let mut lo = (R_FLOOR * 1e-2).min(hi);
            for _ in 0..60 {
                let mid = (lo * hi).sqrt();
                let mut t = r;
                t[c] = mid;
                if ok(t).is_some() {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi / lo < 1.0 + 1e-6 {
                    break;
                }
            }
            r[c] = hi;
        }
    }
    ok(r).map(|p| (r, p))
}

/// Perron eigenvector of a nonnegative 2x2 matrix, normalized to sum 1.
pub fn perron_vector(m: [[f64; 2]; 2]) -> [f64; 2] {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let tr = a + d;
    let disc = ((a - d) * (a - d) + 4.0 * b * c).max(0.0).sqrt();
    let s = 0.5 * (tr + disc);
    let v = if b > 0.0 {
        [b, s - a]
    } else if c > 0.0 {
        [s - d, c]
    } else if a >= d {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let t = v[0].abs() + v[1].abs();
    if t > 0.0 { [v[0].abs() / t, v[1].abs() / t] } else { [0.5, 0.5] }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProofOptions {
    pub r1_star: f64,
    /// `None`: `100 * max(residual_norm, Y2)` with a floor of `1e-12`.
    pub r2_star: Option<f64>,
    pub strict_simple: bool,
    /// Freeze `kappa` (proof within a fixed periodicity domain).
    pub fixed_domain: bool,
}

impl Default for ProofOptions {
    fn default() -> Self {
        ProofOptions { r1_star: 1e-4, r2_star: None, strict_simple: false, fixed_domain: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Status {
    Proved,
    Failed(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    /// The certified center (conjugate-symmetrized candidate).
    pub candidate: Candidate,
    pub options: ProofOptions,
    pub poly_mode: PolyMode,
    pub n_unknowns: usize,
    pub tail: Option<TailConstants>,
    pub bounds: Option<RadiiBounds>,
    pub r_hat: [f64; 2],
    pub polys_at_r_hat: [f64; 4],
    pub rho: [f64; 2],
    pub status: Status,
    /// `kappa_bar_j * r_hat_1`, the error bar on each length scale.
    pub kappa_error: Vec<f64>,
    /// Exactly the uniform state, which needs no contraction argument.
    pub exact_uniform: bool,
    /// Invertibility of `A` is implied by the contraction inequalities, not checked separately.
    pub invertibility_from_contraction: bool,
    pub candidate_hash: String,
    pub group_hash: String,
    pub energy: Option<EnergyEnclosure>,
    pub morse: Option<MorseResult>,
}

impl Certificate {
    pub fn is_proved(&self) -> bool {
        self.status == Status::Proved
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn candidate_hash(c: &Candidate) -> String {
    sha256_hex(&serde_json::to_vec(c).expect("candidate serializes"))
}

pub fn group_hash(name: &str) -> Result<String, ValidatorError> {
    let bytes = std::fs::read(group_dir().join(format!("{name}.grp")))?;
    Ok(sha256_hex(&bytes))
}

/// Everything the bounds need, evaluated once.
struct Setup<'a> {
    model: Model,
    set: &'a ReducedSet,
    jn: usize,
    /// finite part: entries `1..n`
    n: usize,
    /// entries with `||k|| <= 3K` (slightly generous)
    n3: usize,
    /// entries with `||k|| <= 5K` (slightly generous), the set length
    n5: usize,
    kb: Vec<Interval>,
    omega: Vec<Interval>,
    nu_neg: Vec<Interval>,
    lam: Vec<Interval>,
    b: Vec<CInterval>,
    c2: Full<CInterval>,
    c_full: Full<CInterval>,
}

impl Setup<'_> {
    fn ux(&self, i: usize) -> usize {
        self.jn + i - 1
    }

    fn nx(&self) -> usize {
        self.jn + self.n - 1
    }

    fn sig_neg(&self, i: usize) -> CInterval {
        sigma_neg(self.set, &self.b, i)
    }

    /// `|v|_{C^J}` of an enclosure.
    fn kappa_norm(&self, v: &[Interval]) -> Interval {
        v.iter().zip(&self.kb).map(|(x, k)| *x / *k).fold(Interval::ZERO, |a, b| a.max(b))
    }
}

pub fn full_norm_nu(set: &ReducedSet, c: &Full<CInterval>) -> Interval {
    let lat = set.lattice;
    let nu = iv(set.nu);
    c.iter()
        .map(|(k, v)| {
            let d = lat.delta(k);
            let dk: Interval = (0..set.j()).map(|j| iv(d[j] as f64) * iv(set.kappa_bar[j])).sum();
            v.abs() * nu.pow_real(dk.sqrt().expect("nonnegative")).expect("nu > 0")
        })
        .sum()
}

fn cabs(z: Complex64) -> f64 {
    CInterval::point(z).abs().hi()
}

fn a_mul(a: &DMatrix<Complex64>, r: usize, v: &[(usize, CInterval)]) -> CInterval {
    let mut s = CInterval::ZERO;
    for (t, x) in v {
        s += CInterval::point(a[(r, *t)]) * *x;
    }
    s
}

fn bound_y(s: &Setup, a: &DMatrix<Complex64>) -> [f64; 2] {
    let kappa: Vec<Interval> = s.kb.clone();
    let h = okmodel::residual_h(&s.model, s.set, &kappa, &s.b);
    let ex = okmodel::Expanded { c: s.c_full.clone(), c2: s.c2.clone() };
    let f = okmodel::residual_f(&s.model, s.set, &kappa, &s.b, &ex, s.n3);
    let mut g: Vec<(usize, CInterval)> = Vec::new();
    for j in 0..s.jn {
        g.push((j, h[j]));
    }
    for i in 1..s.n {
        g.push((s.ux(i), f[i]));
    }
    let v: Vec<CInterval> = (0..s.nx()).map(|r| a_mul(a, r, &g)).collect();
    let y1 = s.kappa_norm(&v[..s.jn].iter().map(|z| z.abs()).collect::<Vec<_>>());
    let mut y2 = Interval::ZERO;
    for i in 1..s.n {
        y2 += v[s.ux(i)].abs() * s.omega[i];
    }
    for i in s.n..s.n3 {
        y2 += f[i].abs() / s.lam[i] * s.omega[i];
    }
    [y1.hi(), y2.hi()]
}

/// Nonlinear column `k_i` of `D_b F` on rows `rows`.
fn dphi_column(s: &Setup, i: usize, rows: std::ops::Range<usize>) -> Vec<CInterval> {
    rows.map(|l| dphi_entry(s.set, &s.c2, l, i)).collect()
}

fn bound_z(s: &Setup, a: &DMatrix<Complex64>, m_iv: &[Vec<CInterval>], c_p0: f64) -> [[f64; 2]; 2] {
    let nx = s.nx();
    let jn = s.jn;
    // Q = I - A M on the finite part, column by column
    let q: Vec<Vec<CInterval>> = (0..nx)
        .into_par_iter()
        .map(|c| {
            let col: Vec<(usize, CInterval)> = (0..nx).map(|t| (t, m_iv[t][c])).collect();
            (0..nx)
                .map(|r| {
                    let am = a_mul(a, r, &col);
                    if r == c { CInterval::ONE - am } else { -am }
                })
                .collect()
        })
        .collect();
    // Z11 and Z21 from the kappa columns
    let mut z11 = Interval::ZERO;
    for j in 0..jn {
        let row: Interval = (0..jn).map(|c| q[c][j].abs() * s.kb[c]).sum();
        z11 = z11.max(row / s.kb[j]);
    }
    let mut z21 = Interval::ZERO;
    if jn > 0 {
        for mask in 0..(1u32 << jn) {
            let mut tot = Interval::ZERO;
            for i in 1..s.n {
                let mut acc = CInterval::ZERO;
                for j in 0..jn {
                    let sgn = if mask >> j & 1 == 1 { -1.0 } else { 1.0 };
                    acc += q[j][s.ux(i)].scale(s.kb[j] * iv(sgn));
                }
                tot += acc.abs() * s.omega[i];
            }
            z21 = z21.max(tot);
        }
    }
    // finite b columns: U1 and V1
    let fin: Vec<(Interval, Interval)> = (1..s.n)
        .into_par_iter()
        .map(|i| {
            let c = s.ux(i);
            let u1 = s.kappa_norm(&(0..jn).map(|j| q[c][j].abs()).collect::<Vec<_>>()) / s.omega[i];
            let mut v = Interval::ZERO;
            for l in 1..s.n {
                v += q[c][s.ux(l)].abs() * s.omega[l];
            }
            let tail = dphi_column(s, i, s.n..s.n3);
            for (t, l) in (s.n..s.n3).enumerate() {
                v += tail[t].abs() / s.lam[l] * s.omega[l];
            }
            (u1, v / s.omega[i])
        })
        .collect();
    // tail b columns with K < ||k|| <= 3K: U2 and V2
    let tail: Vec<(Interval, Interval)> = (s.n..s.n3)
        .into_par_iter()
        .map(|i| {
            let col = dphi_column(s, i, 1..s.n5);
            let fin_col: Vec<(usize, CInterval)> = (1..s.n).map(|l| (s.ux(l), col[l - 1])).collect();
            let ak: Vec<Interval> = (0..jn).map(|j| a_mul(a, j, &fin_col).abs()).collect();
            let u2 = s.kappa_norm(&ak) / s.omega[i];
            let mut v = Interval::ZERO;
            for l in 1..s.n {
                v += a_mul(a, s.ux(l), &fin_col).abs() * s.omega[l];
            }
            for l in s.n..s.n5 {
                v += col[l - 1].abs() / s.lam[l] * s.omega[l];
            }
            (u2, v / s.omega[i])
        })
        .collect();
    let mut z12 = Interval::ZERO;
    let mut z22 = Interval::ZERO;
    for (u, v) in fin.iter().chain(tail.iter()) {
        z12 = z12.max(*u);
        z22 = z22.max(*v);
    }
    let v3 = iv(3.0) * iv(c_p0) * full_norm_nu(s.set, &s.c2);
    z22 = z22.max(v3);
    [[z11.hi(), z12.hi()], [z21.hi(), z22.hi()]]
}

/// `sup` of `|P^(order)(Delta_k kappa)|` over the box `kappa_bar (1 +- r1)`.
fn p_box(s: &Setup, i: usize, r1: f64, order: u8) -> Interval {
    let d = &s.set.entries[i].delta;
    let y: Interval = (0..s.set.j())
        .map(|j| iv(d[j] as f64) * Interval::new(1.0 - r1, 1.0 + r1) * iv(s.set.kappa_bar[j]))
        .sum();
    Interval::point(s.model.p(y, order).abs().hi())
}

struct AbsA {
    m: DMatrix<f64>,
}

impl AbsA {
    /// `(|A| v)_r` with `v` given on unknown indices.
    fn row(&self, r: usize, v: &[Interval]) -> Interval {
        v.iter().enumerate().map(|(t, x)| iv(self.m[(r, t)]) * *x).sum()
    }
}

fn bound_w(s: &Setup, a: &DMatrix<Complex64>, r_star: [f64; 2], tc: &TailConstants) -> [[[f64; 2]; 2]; 2] {
    let jn = s.jn;
    let nx = s.nx();
    let r1 = r_star[0];
    let absa = AbsA { m: DMatrix::from_fn(nx, nx, |i, j| cabs(a[(i, j)])) };
    let gsz = |i: usize| iv(s.set.entries[i].orbit_size as f64);
    let dkb = |i: usize| s.set.dk_iv(i);
    let delta = |i: usize, j: usize| iv(s.set.entries[i].delta[j] as f64);
    let bnorm: Interval = (1..s.n).map(|i| s.b[i].abs() * s.omega[i]).sum();
    let m_abs = iv(s.model.m.abs());
    let prod = iv(6.0) * (m_abs + bnorm + iv(r_star[1]));

    // norms of A12 Gamma and A22 Gamma
    let mut a12g = Interval::ZERO;
    let mut a22g = Interval::ZERO;
    for i in 1..s.n {
        let c = s.ux(i);
        let col12: Vec<Interval> = (0..jn).map(|j| iv(absa.m[(j, c)])).collect();
        a12g = a12g.max(s.kappa_norm(&col12) * gsz(i) / s.omega[i]);
        let col22: Interval = (1..s.n).map(|l| iv(absa.m[(s.ux(l), c)]) * s.omega[l]).sum();
        a22g = a22g.max(col22 * gsz(i) / s.omega[i]);
    }
    let tail22 = a22g.max(iv(tc.c_p0));

    let mut w = [[[0.0; 2]; 2]; 2];
    // apply |A| to (kappa-part, b-part) and take both norms
    let finish = |kpart: &[Interval], bpart: &[Interval], tail_add: f64| -> (f64, f64) {
        let mut v = vec![Interval::ZERO; nx];
        v[..jn].copy_from_slice(kpart);
        for i in 1..s.n {
            v[s.ux(i)] = bpart[i];
        }
        let out: Vec<Interval> = (0..nx).map(|r| absa.row(r, &v)).collect();
        let w1 = s.kappa_norm(&out[..jn]);
        let w2: Interval = (1..s.n).map(|i| out[s.ux(i)] * s.omega[i]).sum::<Interval>() + iv(tail_add);
        (w1.hi(), w2.hi())
    };

    if jn == 0 {
        // frozen kappa: only the b-columns under r2 survive
        w[1][1][1] = (prod * tail22).hi();
        return w;
    }

    let p1: Vec<Interval> = (0..s.n).map(|i| if i == 0 { Interval::ZERO } else { p_box(s, i, r1, 1) }).collect();
    let p2: Vec<Interval> = (0..s.n).map(|i| if i == 0 { Interval::ZERO } else { p_box(s, i, r1, 2) }).collect();
    let p3: Vec<Interval> = (0..s.n).map(|i| if i == 0 { Interval::ZERO } else { p_box(s, i, r1, 3) }).collect();

    // W_11: kappa columns, r1 variation
    let mut r1v = vec![Interval::ZERO; jn];
    let mut rt1 = vec![Interval::ZERO; s.n];
    for i in 1..s.n {
        let bb = s.b[i].abs();
        let sn = s.sig_neg(i).abs();
        for j in 0..jn {
            r1v[j] += iv(0.5) * p3[i] * delta(i, j) * dkb(i).sqr() * gsz(i) * bb * sn;
        }
        rt1[i] = p2[i] * dkb(i).sqr() * gsz(i) * bb;
    }
    let (a, b) = finish(&r1v, &rt1, 0.0);
    w[0][0][0] = a;
    w[1][0][0] = b;

    // W_21: b columns, r1 variation; R3 (kappa columns, r2) has the same form
    let mut r2v = vec![Interval::ZERO; jn];
    let mut rt2 = vec![Interval::ZERO; s.n];
    let mut u1 = vec![Interval::ZERO; jn];
    let mut u2 = vec![Interval::ZERO; jn];
    for i in 1..s.n {
        let sn = s.sig_neg(i).abs();
        for j in 0..jn {
            r2v[j] = r2v[j].max(p2[i] * delta(i, j) * dkb(i) * sn * s.nu_neg[i]);
            u1[j] = u1[j].max(p1[i] * delta(i, j) * gsz(i) / s.omega[i].sqr());
            u2[j] = u2[j].max(iv(0.5) * p2[i] * dkb(i) * delta(i, j) * gsz(i) / s.omega[i].sqr());
        }
        rt2[i] = p1[i] * dkb(i) * s.nu_neg[i];
    }
    for j in 0..jn {
        u1[j] = u1[j].max(iv(tc.d_p1) / s.kb[j]);
        u2[j] = u2[j].max(iv(0.5) * iv(tc.d_p2) / s.kb[j]);
    }
    let (a, b) = finish(&r2v, &rt2, tc.c_p1);
    w[0][1][0] = a;
    w[1][1][0] = b;

    // W_12: kappa columns, r2 variation
    let r3u: Vec<Interval> = (0..jn).map(|j| r2v[j] + iv(r_star[1]) * u2[j]).collect();
    let (a, b) = finish(&r3u, &rt2, tc.c_p1);
    w[0][0][1] = a;
    w[1][0][1] = b;

    // W_22: b columns, r2 variation
    let zero_b = vec![Interval::ZERO; s.n];
    let (a, b) = finish(&u1, &zero_b, 0.0);
    w[0][1][1] = (iv(a) + prod * a12g).hi();
    w[1][1][1] = (iv(b) + prod * tail22).hi();
    w
}

fn failed(
    cand: Candidate,
    opts: &ProofOptions,
    mode: PolyMode,
    reason: String,
    hashes: (String, String),
) -> Certificate {
    Certificate {
        kappa_error: vec![0.0; cand.kappa.len()],
        candidate: cand,
        options: opts.clone(),
        poly_mode: mode,
        n_unknowns: 0,
        tail: None,
        bounds: None,
        r_hat: [0.0; 2],
        polys_at_r_hat: [0.0; 4],
        rho: [0.5, 0.5],
        status: Status::Failed(reason),
        exact_uniform: false,
        invertibility_from_contraction: true,
        candidate_hash: hashes.0,
        group_hash: hashes.1,
        energy: None,
        morse: None,
    }
}

/// Everything `prove` computes besides the verdict; reused by the energy
/// enclosure, the Morse index and the sampling tests.
pub struct ProofData {
    pub state: State,
    pub a: DMatrix<Complex64>,
    pub jn: usize,
    pub n: usize,
}

/// Rebuilds the proof inputs of a certificate (the state on the `5K` set and `A`).
pub fn proof_data(g: &SpaceGroup, cert: &Certificate) -> Result<ProofData, ValidatorError> {
    let cand = &cert.candidate;
    let st = cand.state(g, 5.0 * cand.k_cut * (1.0 + 1e-9))?;
    let frozen = cert.poly_mode == PolyMode::FrozenKappa;
    let jn = if frozen { 0 } else { cand.kappa.len() };
    let n = st.n();
    if cert.exact_uniform {
        return Ok(ProofData { state: st, a: DMatrix::zeros(0, 0), jn, n });
    }
    let model = cand.model();
    let m = solver::jacobian(&model, &st, frozen);
    let conj = conjugation(&st, jn);
    let a = solver::build_a(&m, &conj)?;
    Ok(ProofData { state: st, a, jn, n })
}

fn conjugation(st: &State, jn: usize) -> Vec<(usize, Complex64)> {
    solver::unknown_conjugation(&st.set, jn, st.n())
}

/// Certificate for the exactly uniform state: it solves the equations for
/// every `kappa`, so no radius is needed.
pub fn trivial_certificate(cand: &Candidate, opts: &ProofOptions) -> Result<Certificate, ValidatorError> {
    let hashes = (candidate_hash(cand), group_hash(&cand.group)?);
    let mut c = failed(cand.clone(), opts, PolyMode::Full, String::new(), hashes);
    c.status = Status::Proved;
    c.exact_uniform = true;
    c.invertibility_from_contraction = false;
    c.kappa_error = vec![0.0; cand.kappa.len()];
    Ok(c)
}

/// Attempts the existence proof around `cand`.
pub fn prove(g: &SpaceGroup, cand: &Candidate, opts: &ProofOptions) -> Result<Certificate, ValidatorError> {
    let model = cand.model();
    if cand.coeffs.is_empty() {
        return trivial_certificate(cand, opts);
    }
    let mode = if opts.fixed_domain {
        PolyMode::FrozenKappa
    } else if opts.strict_simple {
        PolyMode::StrictSimple
    } else {
        PolyMode::Full
    };
    let hashes = (candidate_hash(cand), group_hash(&cand.group)?);
    let fail = |reason: String| Ok(failed(cand.clone(), opts, mode, reason, hashes.clone()));
    let frozen = opts.fixed_domain;
    if frozen && g.translation_freedom() > 0 {
        return fail(format!("group {} admits translations; fixed-domain proofs need a group without them", g.name));
    }
    let r1s = if frozen { 0.0 } else { opts.r1_star };
    if !(0.0..1.0).contains(&r1s) {
        return fail(format!("r1* = {r1s} must lie in [0, 1)"));
    }
    let k_cut = cand.k_cut;
    if let Err(e) = check_k_restrictions(model.gamma, k_cut, r1s) {
        return fail(e.to_string());
    }
    let tc = match aux_tail_constants(model.gamma, k_cut, cand.nu, r1s) {
        Ok(t) => t,
        Err(e) => return fail(e.to_string()),
    };
    let radius = 5.0 * k_cut * (1.0 + 1e-9);
    let st = cand.state(g, radius)?;
    let set = &st.set;
    // every phase is a quarter turn so the symmetrization below is exact
    if set.entries.iter().any(|e| !e.phi.is_quarter() || e.orbit.iter().any(|(_, p)| !p.is_quarter())) {
        return fail("group phases are not quarter turns; exact conjugate symmetry unavailable".into());
    }
    let n = st.n();
    let mut padded = st.b.clone();
    padded.resize(set.len(), Complex64::new(0.0, 0.0));
    let sym = set.conj_apply(&padded);
    if padded.iter().zip(&sym).any(|(x, y)| x != y) {
        return fail("candidate is not conjugate symmetric".into());
    }
    if n < set.len() && set.dk_iv(n).lo() <= iv(k_cut).sqr().hi() {
        return fail("cutoff K sits on a shell".into());
    }
    let lam = match tail_ops(&model, set, k_cut) {
        Ok(l) => l,
        Err(e) => return fail(e.to_string()),
    };
    let jn = if frozen { 0 } else { g.j() };
    let m = solver::jacobian(&model, &st, frozen);
    let conj = conjugation(&st, jn);
    let a = match solver::build_a(&m, &conj) {
        Ok(a) => a,
        Err(e) => return fail(e.to_string()),
    };
    if !solver::a_invariants_hold(&a, &conj) {
        return fail("A is not exactly self-adjoint and conjugation-equivariant".into());
    }

    let kb: Vec<Interval> = cand.kappa.iter().map(|&k| iv(k)).collect();
    let b: Vec<CInterval> = st.b.iter().map(|&z| CInterval::point(z)).collect();
    let ex = okmodel::expand(&model, set, &b);
    let omega: Vec<Interval> = (0..set.len()).map(|i| set.weight_iv(i)).collect();
    let nu_neg: Vec<Interval> =
        (0..set.len()).map(|i| iv(cand.nu).pow_real(set.norm_iv(i)).expect("nu > 0").recip().expect("nonzero")).collect();
    let n3 = set.count_within(3.0 * k_cut * (1.0 + 1e-9));
    let setup = Setup {
        model,
        set,
        jn,
        n,
        n3,
        n5: set.len(),
        kb: kb.clone(),
        omega,
        nu_neg,
        lam,
        b: b.clone(),
        c2: ex.c2,
        c_full: ex.c,
    };
    let blocks = jacobian_blocks(&setup.model, set, &kb, &b);
    let m_iv_mat = if frozen { blocks.dbf } else { blocks.assemble() };
    let nx = setup.nx();
    let m_iv: Vec<Vec<CInterval>> = (0..nx).map(|r| (0..nx).map(|c| m_iv_mat.at(r, c)).collect()).collect();

    let y = bound_y(&setup, &a);
    let z = bound_z(&setup, &a, &m_iv, tc.c_p0);
    let r2s = opts.r2_star.unwrap_or_else(|| (100.0 * cand.residual_norm.max(y[1]).max(y[0])).max(1e-12));
    let r_star = [r1s, r2s];
    let w = bound_w(&setup, &a, r_star, &tc);
    let bounds = RadiiBounds { y, z, w, r_star };

    let mut cert = failed(cand.clone(), opts, mode, String::new(), hashes);
    cert.n_unknowns = nx;
    cert.tail = Some(tc);
    cert.bounds = Some(bounds.clone());
    match find_r_hat(&bounds, mode) {
        Some((r, p)) => {
            cert.r_hat = r;
            cert.polys_at_r_hat = p;
            cert.rho = perron_vector(bounds.contraction_matrix(r));
            cert.kappa_error = cand.kappa.iter().map(|k| (iv(*k) * iv(r[0])).hi()).collect();
            cert.status = Status::Proved;
        }
        None => {
            let p = radii_polynomials(&bounds, r_star, mode).unwrap_or([f64::NAN; 4]);
            let names = ["p1", "p2", "pt3", "pt4"];
            let bad: Vec<&str> =
                (0..4).filter(|&i| !(p[i] < 0.0) && !(mode == PolyMode::StrictSimple && i >= 2)).map(|i| names[i]).collect();
            cert.polys_at_r_hat = p;
            cert.status = Status::Failed(format!("no radius in (0, r*] makes all polynomials negative ({} nonnegative at r*)", bad.join(", ")));
        }
    }
    Ok(cert)
}

/// Recomputes hashes and the proof; `Ok(false)` on any mismatch.
pub fn recheck(g: &SpaceGroup, cert: &Certificate) -> Result<bool, ValidatorError> {
    if candidate_hash(&cert.candidate) != cert.candidate_hash || group_hash(&cert.candidate.group)? != cert.group_hash {
        return Ok(false);
    }
    let again = prove(g, &cert.candidate, &cert.options)?;
    Ok(again.status == cert.status && again.r_hat == cert.r_hat && again.bounds == cert.bounds)
}
