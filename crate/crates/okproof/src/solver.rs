//! Non-rigorous numerics: candidate search by energy descent, Newton
//! refinement, the approximate inverse `A`, and continuation in `m` or `gamma`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::okmodel::{self, jacobian_blocks, residual, Mat, Model};
use crate::seqspace::{conj_symmetrize, CoeffRecord, Field};
use crate::spacegroup::{nudge_cutoff, Index, ReducedSet, SpaceGroup};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("descent did not converge: {0}")]
    Convergence(String),
    #[error("singular Jacobian: {0}")]
    Singular(String),
    #[error("branch ended: {0}")]
    BranchEnd(String),
    #[error("candidate does not match its group: {0}")]
    Mismatch(String),
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A numerically converged, conjugate-symmetric critical point.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Candidate {
    pub group: String,
    pub gamma: f64,
    pub m: f64,
    pub k_cut: f64,
    pub nu: f64,
    pub kappa: Vec<f64>,
    /// Nonzero reduced coefficients as `(k, re, im)`.
    pub coeffs: Vec<(Index, f64, f64)>,
    pub residual_norm: f64,
    pub energy: f64,
    /// `energy - (1 - m^2)^2 / 4`
    pub energy_offset: f64,
}

/// In-memory form of a candidate: the index set at `kappa_bar` and the coefficients.
#[derive(Clone, Debug)]
pub struct State {
    pub set: ReducedSet,
    pub kappa: Vec<f64>,
    /// Length `n = count_within(k_cut)`; slot 0 unused.
    pub b: Vec<Complex64>,
}

impl State {
    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.b.iter().all(|z| z.norm() == 0.0)
    }
}

impl Candidate {
    pub fn model(&self) -> Model {
        Model::new(self.gamma, self.m)
    }

    /// Rebuild the index set at `kappa_bar = kappa` with cutoff `radius`
    /// (at least `k_cut`) and place the coefficients.
    pub fn state(&self, g: &SpaceGroup, radius: f64) -> Result<State, SolverError> {
        if g.name != self.group || g.j() != self.kappa.len() {
            return Err(SolverError::Mismatch(format!("group {} vs {}", g.name, self.group)));
        }
        let set = ReducedSet::build(g, &self.kappa, radius.max(self.k_cut), self.nu);
        let n = set.count_within(self.k_cut);
        let rec = CoeffRecord {
            group: self.group.clone(),
            k_cut: self.k_cut,
            nu: self.nu,
            kappa_bar: self.kappa.clone(),
            coeffs: self.coeffs.clone(),
        };
        let b = rec.to_reduced(&set, n).map_err(SolverError::Mismatch)?;
        Ok(State { set, kappa: self.kappa.clone(), b })
    }

    pub fn from_state(model: &Model, k_cut: f64, st: &State) -> Candidate {
        let rec = CoeffRecord::from_reduced(&st.set, k_cut, &st.b);
        let energy = okmodel::energy_f64(model, &st.set, &st.kappa, &st.b);
        Candidate {
            group: st.set.group_name.clone(),
            gamma: model.gamma,
            m: model.m,
            k_cut,
            nu: st.set.nu,
            kappa: st.kappa.clone(),
            coeffs: rec.coeffs,
            residual_norm: residual_norm(model, st, false),
            energy,
            energy_offset: energy - model.trivial_energy(),
        }
    }
}

/// `sum_j |H_j| kappa_j + sum_k |F_k| nu^||k||`; with `frozen` the `H` part is dropped.
pub fn residual_norm(model: &Model, st: &State, frozen: bool) -> f64 {
    let (h, f) = residual(model, &st.set, &st.kappa, &st.b);
    let hn: f64 = if frozen { 0.0 } else { h.iter().zip(&st.kappa).map(|(x, k)| x.norm() * k).sum() };
    let fnorm: f64 = f.iter().enumerate().skip(1).map(|(i, x)| x.norm() * st.set.nu.powf(st.set.entries[i].norm)).sum();
    hn + fnorm
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub descent_tol: f64,
    pub max_descent: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { descent_tol: 1e-7, max_descent: 20000, newton_tol: 1e-12, max_newton: 40 }
    }
}

#[derive(Clone, Debug)]
pub enum Init {
    /// All coefficients zero.
    Zero,
    /// Small deterministic amplitude on the first symmetric shell.
    Perturbation(f64),
    /// Random conjugate-symmetric coefficients up to a radius, seeded.
    Random { seed: u64, amplitude: f64, radius: f64 },
}

/// `kappa` such that the first symmetric shell sits at `y = gamma`.
pub fn initial_kappa(g: &SpaceGroup, gamma: f64) -> Vec<f64> {
    let ones = vec![1.0; g.j()];
    let probe = ReducedSet::build(g, &ones, 6.0, 1.05);
    let first = probe.entries.get(1).map_or(1.0, |e| e.dk);
    vec![gamma / first; g.j()]
}

fn first_shell(set: &ReducedSet) -> Vec<usize> {
    if set.len() < 2 {
        return vec![];
    }
    let d = set.entries[1].dk;
    (1..set.len()).filter(|&i| (set.entries[i].dk - d).abs() <= 1e-9 * d).collect()
}

/// Initial state on the set at cutoff `k_cut`.
pub fn initial_state(g: &SpaceGroup, model: &Model, k_cut: f64, nu: f64, init: &Init) -> State {
    let kappa = initial_kappa(g, model.gamma);
    let set = ReducedSet::build(g, &kappa, k_cut, nu);
    let n = set.len();
    let mut b = vec![ZERO; n];
    match init {
        Init::Zero => {}
        Init::Perturbation(a) => {
            for i in first_shell(&set) {
                b[i] = Complex64::new(*a, 0.0);
            }
        }
        Init::Random { seed, amplitude, radius } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for (i, e) in set.entries.iter().enumerate().skip(1) {
                if e.norm <= *radius {
                    b[i] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * *amplitude;
                }
            }
        }
    }
    let mut b = conj_symmetrize(&set, &b);
    b[0] = ZERO;
    State { set, kappa, b }
}

/// Minimize `E(kappa, .)` over `kappa` for fixed `b` (the energy is convex in
/// `kappa` since `P'' > 0`).
fn optimize_kappa(model: &Model, st: &mut State) {
    if st.is_trivial() {
        return;
    }
    let jn = st.kappa.len();
    for _ in 0..50 {
        let blocks = jacobian_blocks(model, &st.set, &st.kappa, &st.b);
        let (h, _) = residual(model, &st.set, &st.kappa, &st.b);
        let hm = DMatrix::from_fn(jn, jn, |i, j| blocks.dkh.at(i, j).re);
        let hv = nalgebra::DVector::from_fn(jn, |i, _| h[i].re);
        let Some(step) = hm.clone().lu().solve(&hv) else { return };
        let mut t = 1.0;
        let mut done = false;
        while t > 1e-8 {
            let trial: Vec<f64> = (0..jn).map(|j| st.kappa[j] - t * step[j]).collect();
            if trial.iter().all(|&k| k > 0.0) {
                st.kappa = trial;
                done = true;
                break;
            }
            t *= 0.5;
        }
        if !done || step.iter().zip(&st.kappa).all(|(s, k)| (s / k).abs() < 1e-14) {
            return;
        }
    }
}

fn energy(model: &Model, st: &State) -> f64 {
    okmodel::energy_f64(model, &st.set, &st.kappa, &st.b)
}

/// Energy descent over conjugate-symmetric states with `b_0 = m`. Returns
/// the state and the energies of accepted iterates.
pub fn descend(model: &Model, mut st: State, opts: &SolverOptions) -> Result<(State, Vec<f64>), SolverError> {
    let n = st.n();
    let mut history = Vec::new();
    optimize_kappa(model, &mut st);
    let mut e = energy(model, &st);
    history.push(e);
    let precond = |st: &State| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let en = &st.set.entries[i];
                en.orbit_size as f64 * (model.p(okmodel::delta_kappa(&st.set, i, &st.kappa), 0).abs() + 1.0)
            })
            .collect()
    };
    let mut alpha = 1.0;
    let mut prev: Option<(Vec<Complex64>, Vec<Complex64>)> = None;
    for _ in 0..opts.max_descent {
        let (_, f) = residual(model, &st.set, &st.kappa, &st.b);
        let d = precond(&st);
        let g: Vec<Complex64> = (0..n).map(|i| if i == 0 { ZERO } else { f[i] / d[i] }).collect();
        let gnorm: f64 = (1..n).map(|i| f[i].norm() * st.set.nu.powf(st.set.entries[i].norm)).sum();
        if gnorm < opts.descent_tol {
            return Ok((st, history));
        }
        if let Some((pb, pg)) = &prev {
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 1..n {
                let s = st.b[i] - pb[i];
                let y = g[i] - pg[i];
                ss += s.norm_sqr();
                sy += (s.conj() * y).re;
            }
            if sy > 0.0 {
                alpha = (ss / sy).clamp(1e-4, 1e3);
            }
        }
        let slope: f64 = (1..n).map(|i| (f[i].conj() * g[i]).re).sum();
        let mut t = alpha;
        let mut accepted = false;
        while t > 1e-12 {
            let mut trial = st.clone();
            for i in 1..n {
                trial.b[i] = st.b[i] - g[i] * t;
            }
            trial.b = conj_symmetrize(&trial.set, &trial.b);
            let et = energy(model, &trial);
            if et <= e - 1e-4 * t * slope {
                prev = Some((st.b.clone(), g.clone()));
                st = trial;
                optimize_kappa(model, &mut st);
                let en = energy(model, &st);
                // kappa optimization is exact minimization, so it can only lower E
                e = en.min(et);
                history.push(e);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no descent possible at the resolution of the line search
            return Ok((st, history));
        }
        if st.kappa.iter().any(|k| !k.is_finite() || *k <= 0.0) {
            return Err(SolverError::Convergence("kappa left the positive orthant".into()));
        }
    }
    Err(SolverError::Convergence(format!("no convergence in {} descent steps", opts.max_descent)))
}

/// Full Jacobian `M` of `(H, F)` on the state's truncation; with `frozen`
/// only the `D_b F` block.
pub fn jacobian(model: &Model, st: &State, frozen: bool) -> DMatrix<Complex64> {
    let bl = jacobian_blocks(model, &st.set, &st.kappa, &st.b);
    if frozen { bl.dbf.to_nalgebra() } else { bl.assemble().to_nalgebra() }
}

fn stack(model: &Model, st: &State, frozen: bool) -> Vec<Complex64> {
    let (h, f) = residual(model, &st.set, &st.kappa, &st.b);
    let mut v = if frozen { vec![] } else { h };
    v.extend_from_slice(&f[1..]);
    v
}

fn apply_step(st: &mut State, dx: &[Complex64], frozen: bool, scale: f64) {
    let jn = if frozen { 0 } else { st.kappa.len() };
    for j in 0..jn {
        st.kappa[j] -= scale * dx[j].re;
    }
    for i in 1..st.n() {
        st.b[i] -= dx[jn + i - 1] * scale;
    }
    st.b = conj_symmetrize(&st.set, &st.b);
    st.b[0] = ZERO;
}

/// Newton on `(H, F) = 0` (or `F = 0` with `kappa` frozen). Returns the
/// residual history.
pub fn newton(model: &Model, st: &mut State, frozen: bool, opts: &SolverOptions) -> Result<Vec<f64>, SolverError> {
    let mut hist = vec![residual_norm(model, st, frozen)];
    for _ in 0..opts.max_newton {
        if *hist.last().unwrap() <= opts.newton_tol {
            break;
        }
        let m = jacobian(model, st, frozen);
        let rhs = nalgebra::DVector::from_vec(stack(model, st, frozen));
        let dx = m.lu().solve(&rhs).ok_or_else(|| SolverError::Singular("LU failed".into()))?;
        if dx.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SolverError::Singular("non-finite Newton step".into()));
        }
        let dx: Vec<Complex64> = dx.iter().copied().collect();
        let before = *hist.last().unwrap();
        let mut trial = st.clone();
        apply_step(&mut trial, &dx, frozen, 1.0);
        let mut r = residual_norm(model, &trial, frozen);
        // damp only when the full step makes things clearly worse
        let mut s = 1.0;
        while !(r < 2.0 * before) && s > 1e-3 {
            s *= 0.5;
            trial = st.clone();
            apply_step(&mut trial, &dx, frozen, s);
            r = residual_norm(model, &trial, frozen);
        }
        if trial.kappa.iter().any(|&k| k <= 0.0) {
            return Err(SolverError::Convergence("kappa left the positive orthant".into()));
        }
        *st = trial;
        hist.push(r);
        if r >= before && r <= 100.0 * opts.newton_tol {
            // stagnated at rounding level
            break;
        }
    }
    let last = *hist.last().unwrap();
    if last > opts.newton_tol && !(last <= 1e3 * opts.newton_tol) {
        return Err(SolverError::Convergence(format!("Newton residual {last:e}")));
    }
    Ok(hist)
}

/// Rebuild the set at `kappa_bar = kappa` with a nudged cutoff, transfer the
/// coefficients and polish with Newton. Repeats until the set is stable.
pub fn recenter(
    g: &SpaceGroup,
    model: &Model,
    st: &State,
    k_cut: f64,
    frozen: bool,
    opts: &SolverOptions,
) -> Result<(State, f64), SolverError> {
    let mut cur = st.clone();
    let mut kc = k_cut;
    for _ in 0..5 {
        kc = nudge_cutoff(g, &cur.kappa, k_cut, 1e-9);
        let set = ReducedSet::build(g, &cur.kappa, kc, cur.set.nu);
        let n = set.len();
        let mut b = vec![ZERO; n];
        for (i, e) in set.entries.iter().enumerate().skip(1) {
            if let Some(j) = cur.set.position(e.k) {
                if j < cur.n() {
                    b[i] = cur.b[j];
                }
            }
        }
        let same = set.len() == cur.set.len()
            && set.entries.iter().zip(&cur.set.entries).all(|(a, b)| a.k == b.k)
            && cur.n() == n;
        let mut next = State { set, kappa: cur.kappa.clone(), b };
        newton(model, &mut next, frozen, opts)?;
        let stable = same && next.kappa == cur.kappa;
        cur = next;
        if stable || frozen {
            break;
        }
    }
    Ok((cur, kc))
}

/// Descent from `init` followed by Newton polish and recentering.
pub fn find(
    g: &SpaceGroup,
    model: &Model,
    k_cut: f64,
    nu: f64,
    init: &Init,
    opts: &SolverOptions,
) -> Result<Candidate, SolverError> {
    let st = initial_state(g, model, k_cut, nu, init);
    let (mut st, _) = descend(model, st, opts)?;
    let frozen = st.b.iter().all(|z| z.norm() < 1e-10);
    if frozen {
        st.b.iter_mut().for_each(|z| *z = ZERO);
    } else {
        newton(model, &mut st, false, opts)?;
    }
    let (st, kc) = recenter(g, model, &st, k_cut, frozen, opts)?;
    Ok(Candidate::from_state(model, kc, &st))
}

/// The uniform state as a candidate.
pub fn trivial_candidate(g: &SpaceGroup, model: &Model, k_cut: f64, nu: f64) -> Candidate {
    let st = initial_state(g, model, k_cut, nu, &Init::Zero);
    let kc = nudge_cutoff(g, &st.kappa, k_cut, 1e-9);
    let set = ReducedSet::build(g, &st.kappa, kc, nu);
    let n = set.len();
    let st = State { set, kappa: st.kappa, b: vec![ZERO; n] };
    Candidate::from_state(model, kc, &st)
}

/// Newton refinement of a candidate (possibly with new parameters).
pub fn refine(g: &SpaceGroup, c: &Candidate, opts: &SolverOptions) -> Result<Candidate, SolverError> {
    let model = c.model();
    let mut st = c.state(g, c.k_cut)?;
    let frozen = st.is_trivial();
    newton(&model, &mut st, frozen, opts)?;
    let (st, kc) = recenter(g, &model, &st, c.k_cut, frozen, opts)?;
    Ok(Candidate::from_state(&model, kc, &st))
}

/// `tau` and `phi` extended to the unknown vector `(kappa, b_1..b_N)`.
pub fn unknown_conjugation(set: &ReducedSet, jn: usize, n: usize) -> Vec<(usize, Complex64)> {
    let mut out: Vec<(usize, Complex64)> = (0..jn).map(|j| (j, Complex64::new(1.0, 0.0))).collect();
    for i in 1..n {
        let e = &set.entries[i];
        assert!(e.tau < n, "tau leaves the truncation");
        out.push((jn + e.tau - 1, e.phi.to_complex()));
    }
    out
}

/// Numerical inverse of `M`, made Hermitian and then commuting with the
/// conjugation `I_*`.
pub fn build_a(m: &DMatrix<Complex64>, conj: &[(usize, Complex64)]) -> Result<DMatrix<Complex64>, SolverError> {
    let n = m.nrows();
    let a = m.clone().try_inverse().ok_or_else(|| SolverError::Singular("M is not invertible".into()))?;
    let mut h = DMatrix::from_element(n, n, ZERO);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
        }
    }
    let mut b = DMatrix::from_element(n, n, ZERO);
    for k in 0..n {
        let (tk, pk) = conj[k];
        for l in 0..n {
            let (tl, pl) = conj[l];
            let w = pk.conj() * pl;
            b[(k, l)] = (h[(k, l)] + w * h[(tk, tl)].conj()) * 0.5;
        }
    }
    Ok(b)
}

/// Exact checks of `A^H = A` and `A = conj(I) conj(A) I`.
pub fn a_invariants_hold(a: &DMatrix<Complex64>, conj: &[(usize, Complex64)]) -> bool {
    let n = a.nrows();
    for k in 0..n {
        for l in 0..n {
            if a[(k, l)] != a[(l, k)].conj() {
                return false;
            }
            let (tk, pk) = conj[k];
            let (tl, pl) = conj[l];
            if a[(k, l)] != pk.conj() * pl * a[(tk, tl)].conj() {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContParam {
    M,
    Gamma,
}

#[derive(Clone, Debug)]
pub struct ContOptions {
    pub param: ContParam,
    pub step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Stop once the parameter leaves `[lo, hi]`.
    pub bounds: (f64, f64),
    pub solver: SolverOptions,
}

fn set_param(model: &Model, p: ContParam, v: f64) -> Model {
    match p {
        ContParam::M => Model::new(model.gamma, v),
        ContParam::Gamma => Model::new(v, model.m),
    }
}

fn get_param(model: &Model, p: ContParam) -> f64 {
    match p {
        ContParam::M => model.m,
        ContParam::Gamma => model.gamma,
    }
}

fn pack(st: &State, frozen: bool) -> Vec<Complex64> {
    let mut v: Vec<Complex64> =
        if frozen { vec![] } else { st.kappa.iter().map(|&k| Complex64::new(k, 0.0)).collect() };
    v.extend_from_slice(&st.b[1..]);
    v
}

fn unpack(st: &mut State, v: &[Complex64], frozen: bool) {
    let jn = if frozen { 0 } else { st.kappa.len() };
    for j in 0..jn {
        st.kappa[j] = v[j].re;
    }
    for i in 1..st.n() {
        st.b[i] = v[jn + i - 1];
    }
    st.b = conj_symmetrize(&st.set, &st.b);
    st.b[0] = ZERO;
}

/// Weights for the product norm `|dkappa|_kappa + ||db||_X0 + |dp|`.
fn weights(st: &State, frozen: bool) -> Vec<f64> {
    let mut w: Vec<f64> = if frozen { vec![] } else { st.kappa.iter().map(|k| 1.0 / k).collect() };
    w.extend(st.set.entries[1..st.n()].iter().map(|e| e.weight));
    w
}

pub fn weighted_norm(v: &[Complex64], dp: f64, w: &[f64]) -> f64 {
    v.iter().zip(w).map(|(x, w)| x.norm() * w).sum::<f64>() + dp.abs()
}

/// Patterned states with `||b||_X0` below this have merged into the uniform state.
const COLLAPSE: f64 = 1e-7;

/// Pseudo-arclength continuation from a refined candidate. The first point of
/// the branch is the start itself.
pub fn continue_branch(g: &SpaceGroup, start: &Candidate, opts: &ContOptions) -> Result<Vec<Candidate>, SolverError> {
    let mut model = start.model();
    let mut st = start.state(g, start.k_cut)?;
    let k_cut = start.k_cut;
    let frozen = st.is_trivial();
    let sopts = &opts.solver;
    newton(&model, &mut st, frozen, sopts)?;
    let mut branch = vec![Candidate::from_state(&model, k_cut, &st)];
    let w = weights(&st, frozen);
    let nx = pack(&st, frozen).len();

    // initial tangent from M dx/dp = -dG/dp
    let dgdp = |model: &Model, st: &State| -> Vec<Complex64> {
        let h = 1e-7;
        let p = get_param(model, opts.param);
        let gp = stack(&set_param(model, opts.param, p + h), st, frozen);
        let gm = stack(&set_param(model, opts.param, p - h), st, frozen);
        gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    };
    let m0 = jacobian(&model, &st, frozen);
    let rhs = nalgebra::DVector::from_vec(dgdp(&model, &st).into_iter().map(|z| -z).collect());
    let dx = m0.lu().solve(&rhs).ok_or_else(|| SolverError::Singular("tangent solve".into()))?;
    let mut tx: Vec<Complex64> = dx.iter().copied().collect();
    let mut tp = 1.0;
    let nrm = weighted_norm(&tx, tp, &w);
    tx.iter_mut().for_each(|z| *z /= nrm);
    tp /= nrm;
    if opts.step < 0.0 {
        tx.iter_mut().for_each(|z| *z = -*z);
        tp = -tp;
    }
    let mut ds = opts.step.abs();

    while branch.len() < opts.max_steps {
        let x0 = pack(&st, frozen);
        let p0 = get_param(&model, opts.param);
        let xp: Vec<Complex64> = x0.iter().zip(&tx).map(|(a, t)| a + t * ds).collect();
        let pp = p0 + tp * ds;
        // corrector: bordered Newton with the arclength row
        let mut x = xp.clone();
        let mut p = pp;
        let mut ok = false;
        let mut trial = st.clone();
        for _ in 0..sopts.max_newton {
            let mdl = set_param(&model, opts.param, p);
            unpack(&mut trial, &x, frozen);
            x = pack(&trial, frozen);
            let gv = stack(&mdl, &trial, frozen);
            let arc: f64 = x.iter().zip(&xp).zip(&tx).map(|((a, b), t)| ((a - b) * t.conj()).re * 1.0).sum::<f64>()
                + (p - pp) * tp;
            let res = residual_norm(&mdl, &trial, frozen);
            if res <= sopts.newton_tol.max(1e-11) && arc.abs() < 1e-12 {
                ok = true;
                break;
            }
            let mj = jacobian(&mdl, &trial, frozen);
            let dp = dgdp(&mdl, &trial);
            let mut big = DMatrix::from_element(nx + 1, nx + 1, ZERO);
            for i in 0..nx {
                for j in 0..nx {
                    big[(i, j)] = mj[(i, j)];
                }
                big[(i, nx)] = dp[i];
                big[(nx, i)] = tx[i].conj();
            }
            big[(nx, nx)] = Complex64::new(tp, 0.0);
            let mut r = nalgebra::DVector::from_element(nx + 1, ZERO);
            for i in 0..nx {
                r[i] = gv[i];
            }
            r[nx] = Complex64::new(arc, 0.0);
            let Some(d) = big.lu().solve(&r) else { break };
            if d.iter().any(|z| !z.re.is_finite()) {
                break;
            }
            for i in 0..nx {
                x[i] -= d[i];
            }
            p -= d[nx].re;
            if trial.kappa.iter().any(|&k| k <= 0.0) {
                break;
            }
        }
        if !ok {
            ds *= 0.5;
            if ds < opts.min_step {
                return if branch.len() > 1 {
                    Ok(branch)
                } else {
                    Err(SolverError::BranchEnd(format!("step underflow at parameter {p0}")))
                };
            }
            continue;
        }
        unpack(&mut trial, &x, frozen);
        if !frozen && crate::seqspace::norm_x0(&trial.set, &trial.b) < COLLAPSE {
            // merged into the uniform branch
            break;
        }
        let new_model = set_param(&model, opts.param, p);
        // secant tangent for the next predictor
        let x1 = pack(&trial, frozen);
        let mut ntx: Vec<Complex64> = x1.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let mut ntp = p - p0;
        let nrm = weighted_norm(&ntx, ntp, &w);
        if nrm > 0.0 {
            ntx.iter_mut().for_each(|z| *z /= nrm);
            ntp /= nrm;
            tx = ntx;
            tp = ntp;
        }
        st = trial;
        model = new_model;
        branch.push(Candidate::from_state(&model, k_cut, &st));
        ds = (ds * 1.5).min(opts.max_step);
        if p < opts.bounds.0 || p > opts.bounds.1 {
            break;
        }
    }
    Ok(branch)
}

/// Converts a generic `Mat` into nalgebra form.
pub fn to_dmatrix(m: &Mat<Complex64>) -> DMatrix<Complex64> {
    m.to_nalgebra()
}

/// Scalar check that a candidate lies in the conjugate-symmetric set.
pub fn is_conjugate_symmetric(st: &State) -> bool {
    let c = st.set.conj_apply(&{
        let mut b = st.b.clone();
        b.resize(st.set.len(), ZERO);
        b
    });
    st.b.iter().zip(&c).all(|(a, b)| (a - b).norm() <= 1e-14 * (1.0 + a.norm()))
}

/// Mid-point helper used by interval code on float candidates.
pub fn b_mid<F: Field>(b: &[F]) -> Vec<Complex64> {
    b.iter().map(|z| z.mid()).collect()
}
