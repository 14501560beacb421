//! Batch front end: file formats, exit codes, phase-diagram sweeps, boundary
//! refinement between two branches, and profile export.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy_cert::{compare, compute_e2, EnergyEnclosure, Ordering};
use crate::okmodel::{self, Model};
use crate::solver::{self, continue_branch, find, refine, Candidate, ContOptions, ContParam, Init, SolverOptions};
use crate::spacegroup::SpaceGroup;
use crate::validator::{self, prove, Certificate, ProofOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("format: {0}")]
    Format(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("failed: {0}")]
    Failed(String),
    #[error("integrity: {0}")]
    Integrity(String),
}

impl CliError {
    /// 0 ok, 1 proof or computation failed, 2 malformed input or configuration, 3 integrity.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Format(_) | CliError::Config(_) => 2,
            CliError::Integrity(_) => 3,
        }
    }
}

impl From<solver::SolverError> for CliError {
    fn from(e: solver::SolverError) -> Self {
        match e {
            solver::SolverError::Mismatch(s) => CliError::Config(s),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<validator::ValidatorError> for CliError {
    fn from(e: validator::ValidatorError) -> Self {
        match e {
            validator::ValidatorError::Solver(s) => s.into(),
            validator::ValidatorError::Io(io) => CliError::Config(io.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<crate::energy_cert::EnergyError> for CliError {
    fn from(e: crate::energy_cert::EnergyError) -> Self {
        use crate::energy_cert::EnergyError as E;
        match e {
            E::State(s) => CliError::Failed(s),
            E::Config(s) => CliError::Config(s),
            E::Validator(v) => v.into(),
        }
    }
}

impl From<crate::morse::MorseError> for CliError {
    fn from(e: crate::morse::MorseError) -> Self {
        use crate::morse::MorseError as E;
        match e {
            E::Validator(v) => v.into(),
            other => CliError::Failed(other.to_string()),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn load_group(name: &str) -> Result<SpaceGroup, CliError> {
    SpaceGroup::load_named(name).map_err(|e| CliError::Config(e.to_string()))
}

/// Fails with an integrity error unless the stored hashes match and the
/// proof reproduces bit for bit.
pub fn verify_certificate(cert: &Certificate) -> Result<SpaceGroup, CliError> {
    if validator::candidate_hash(&cert.candidate) != cert.candidate_hash {
        return Err(CliError::Integrity("candidate hash mismatch".into()));
    }
    if validator::group_hash(&cert.candidate.group)? != cert.group_hash {
        return Err(CliError::Integrity(format!("group file {} changed since certification", cert.candidate.group)));
    }
    let g = load_group(&cert.candidate.group)?;
    if !validator::recheck(&g, cert)? {
        return Err(CliError::Integrity("proof does not reproduce".into()));
    }
    Ok(g)
}

/// Proves a candidate and attaches its energy enclosure.
pub fn prove_with_energy(g: &SpaceGroup, c: &Candidate, opts: &ProofOptions) -> Result<Certificate, CliError> {
    let mut cert = prove(g, c, opts)?;
    if cert.is_proved() {
        cert.energy = Some(compute_e2(g, &cert)?);
    }
    Ok(cert)
}

/// The uniform state on `group`'s lattice (the group only fixes `kappa`).
pub fn uniform_candidate(g: &SpaceGroup, gamma: f64, m: f64, k_cut: f64, nu: f64) -> Candidate {
    solver::trivial_candidate(g, &Model::new(gamma, m), k_cut, nu)
}

pub const UNIFORM: &str = "uniform";

/// Two branches whose rigorous energy ordering flips between `m_a` and `m_b`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub gamma: f64,
    pub m_a: f64,
    pub m_b: f64,
    pub m_c: f64,
    pub groups: (String, String),
    /// First group at `m_a`, second at `m_a`, first at `m_b`, second at `m_b`.
    pub certificates: [Certificate; 4],
    /// `(m_b - m_a) < 1e-3 m_c`
    pub converged: bool,
}

fn energy_of(cert: &Certificate) -> Result<&EnergyEnclosure, CliError> {
    cert.energy.as_ref().ok_or_else(|| CliError::Failed("certificate carries no energy enclosure".into()))
}

/// Strict order of the two energies at one `m`: `Some(true)` if the first is below.
fn order_at(a: &Certificate, b: &Certificate) -> Result<Option<bool>, CliError> {
    Ok(match compare(energy_of(a)?, energy_of(b)?)? {
        Ordering::ABelow => Some(true),
        Ordering::BBelow => Some(false),
        Ordering::Overlap => None,
    })
}

/// Re-verifies all four certificates from their serialized data, recomputes
/// the energy enclosures, and checks that the strict order flips.
pub fn verify_boundary(bp: &BoundaryPoint) -> Result<(), CliError> {
    let mut fresh = Vec::with_capacity(4);
    for c in &bp.certificates {
        if !c.is_proved() {
            return Err(CliError::Failed("boundary certificate is not proved".into()));
        }
        let g = verify_certificate(c)?;
        let mut c2 = c.clone();
        c2.energy = Some(compute_e2(&g, c)?);
        if c2.energy != c.energy {
            return Err(CliError::Integrity("stored energy enclosure does not reproduce".into()));
        }
        fresh.push(c2);
    }
    let [a_lo, b_lo, a_hi, b_hi] = [&fresh[0], &fresh[1], &fresh[2], &fresh[3]];
    if a_lo.candidate.m != bp.m_a || a_hi.candidate.m != bp.m_b || b_lo.candidate.m != bp.m_a || b_hi.candidate.m != bp.m_b {
        return Err(CliError::Integrity("certificate parameters do not match the bracket".into()));
    }
    let lo = order_at(a_lo, b_lo)?;
    let hi = order_at(a_hi, b_hi)?;
    match (lo, hi) {
        (Some(x), Some(y)) if x != y => Ok(()),
        _ => Err(CliError::Failed(format!("no strict order flip: {lo:?} at m_a, {hi:?} at m_b"))),
    }
}

#[derive(Clone, Debug)]
pub struct BoundaryOptions {
    pub proof: ProofOptions,
    pub solver: SolverOptions,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for BoundaryOptions {
    fn default() -> Self {
        BoundaryOptions { proof: ProofOptions::default(), solver: SolverOptions::default(), rel_tol: 1e-3, max_iter: 60 }
    }
}

fn at_m(g: &SpaceGroup, c: &Candidate, m: f64, opts: &SolverOptions) -> Result<Candidate, CliError> {
    if c.coeffs.is_empty() {
        return Ok(uniform_candidate(g, c.gamma, m, c.k_cut, c.nu));
    }
    let mut moved = c.clone();
    moved.m = m;
    let r = refine(g, &moved, opts)?;
    if r.coeffs.is_empty() || crate::seqspace::norm_x0(&r.state(g, r.k_cut)?.set, &r.state(g, r.k_cut)?.b) < 1e-7 {
        return Err(CliError::Failed(format!("branch of {} collapsed to the uniform state at m = {m}", c.group)));
    }
    Ok(r)
}

/// Bisection in `m` between two branches. `a` and `b` are candidates of the
/// two branches at (nearly) `m_a`, and `a2`, `b2` near `m_b`; the strict
/// order must differ at the two ends.
pub fn refine_boundary(
    pair: [&Candidate; 4],
    m_a: f64,
    m_b: f64,
    opts: &BoundaryOptions,
) -> Result<BoundaryPoint, CliError> {
    let [a, b, a2, b2] = pair;
    let ga = load_group(&a.group)?;
    let gb = load_group(&b.group)?;
    let mut lo_pair = (at_m(&ga, a, m_a, &opts.solver)?, at_m(&gb, b, m_a, &opts.solver)?);
    let mut hi_pair = (at_m(&ga, a2, m_b, &opts.solver)?, at_m(&gb, b2, m_b, &opts.solver)?);
    let certify = |c: &Candidate, g: &SpaceGroup| -> Result<Certificate, CliError> {
        let cert = prove_with_energy(g, c, &opts.proof)?;
        if !cert.is_proved() {
            return Err(CliError::Failed(format!("{} at m = {}: {:?}", c.group, c.m, cert.status)));
        }
        Ok(cert)
    };
    let mut certs_lo = (certify(&lo_pair.0, &ga)?, certify(&lo_pair.1, &gb)?);
    let mut certs_hi = (certify(&hi_pair.0, &ga)?, certify(&hi_pair.1, &gb)?);
    let o_lo = order_at(&certs_lo.0, &certs_lo.1)?;
    let o_hi = order_at(&certs_hi.0, &certs_hi.1)?;
    let (Some(s_lo), Some(s_hi)) = (o_lo, o_hi) else {
        return Err(CliError::Failed("energies overlap at an end of the bracket".into()));
    };
    if s_lo == s_hi {
        return Err(CliError::Failed("the order does not flip across the bracket".into()));
    }
    let (mut ma, mut mb) = (m_a, m_b);
    let done = |ma: f64, mb: f64| (mb - ma).abs() < opts.rel_tol * (0.5 * (ma + mb)).abs();
    for _ in 0..opts.max_iter {
        if done(ma, mb) {
            break;
        }
        let mc = 0.5 * (ma + mb);
        let near = if (mc - ma).abs() <= (mb - mc).abs() { &lo_pair } else { &hi_pair };
        let pa = at_m(&ga, &near.0, mc, &opts.solver)?;
        let pb = at_m(&gb, &near.1, mc, &opts.solver)?;
        let ca = certify(&pa, &ga)?;
        let cb = certify(&pb, &gb)?;
        match order_at(&ca, &cb)? {
            Some(s) if s == s_lo => {
                ma = mc;
                lo_pair = (pa, pb);
                certs_lo = (ca, cb);
            }
            Some(_) => {
                mb = mc;
                hi_pair = (pa, pb);
                certs_hi = (ca, cb);
            }
            None => break,
        }
    }
    Ok(BoundaryPoint {
        gamma: a.gamma,
        m_a: ma,
        m_b: mb,
        m_c: 0.5 * (ma + mb),
        groups: (a.group.clone(), b.group.clone()),
        certificates: [certs_lo.0, certs_lo.1, certs_hi.0, certs_hi.1],
        converged: done(ma, mb),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    /// Amplitude of the first-shell perturbation that seeds the branch.
    pub amplitude: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub gammas: Vec<f64>,
    /// Grid points in `m` per `gamma`, from 0 to `m_max_factor * m*(gamma)`.
    pub m_points: usize,
    pub m_max_factor: f64,
    /// Branches are seeded at `m_seed_factor * m*(gamma)` and continued both ways.
    pub m_seed_factor: f64,
    pub groups: Vec<GroupSpec>,
    pub k_cut: f64,
    pub nu: f64,
    pub step: f64,
    pub max_steps: usize,
    /// Prove every continuation point.
    pub prove_branches: bool,
    /// Rigorously bracket every crossing of two branches.
    pub refine_boundaries: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            gammas: vec![2.5],
            m_points: 1000,
            m_max_factor: 1.2,
            m_seed_factor: 0.4,
            groups: vec![
                GroupSpec { name: "lamellar".into(), amplitude: 0.1 },
                GroupSpec { name: "hex-columnar".into(), amplitude: -0.15 },
            ],
            k_cut: 12.0,
            nu: 1.05,
            step: 0.01,
            max_steps: 300,
            prove_branches: false,
            refine_boundaries: true,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.gammas.iter().any(|&g| !(g >= 2.0)) {
            return Err(CliError::Config("every gamma must be at least 2".into()));
        }
        if self.m_points < 2 {
            return Err(CliError::Config("m_points must be at least 2".into()));
        }
        for gs in &self.groups {
            if gs.name != UNIFORM {
                load_group(&gs.name)?;
            }
        }
        Ok(())
    }
}

/// One continued branch: points sorted by increasing `m`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Branch {
    pub gamma: f64,
    pub group: String,
    pub points: Vec<Candidate>,
    pub proved: Vec<bool>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub m: f64,
    pub group: String,
    pub energy: f64,
    pub energy_offset: f64,
    pub kappa: Vec<f64>,
    pub proved: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub boundaries: Vec<BoundaryPoint>,
    pub failures: Vec<String>,
}

fn trace_branch(cfg: &SweepConfig, gamma: f64, entry: &GroupSpec) -> Branch {
    let mut out = Branch { gamma, group: entry.name.clone(), points: vec![], proved: vec![], error: None };
    let run = || -> Result<(Vec<Candidate>, Vec<bool>), CliError> {
        let g = load_group(&entry.name)?;
        let m_star = okmodel::m_star(gamma).map_err(|e| CliError::Config(e.to_string()))?;
        let m_seed = cfg.m_seed_factor * m_star;
        let model = Model::new(gamma, m_seed);
        let sopts = SolverOptions::default();
        let start = find(&g, &model, cfg.k_cut, cfg.nu, &Init::Perturbation(entry.amplitude), &sopts)?;
        if start.coeffs.is_empty() {
            return Err(CliError::Failed(format!("{} descended to the uniform state at m = {m_seed}", entry.name)));
        }
        let m_hi = cfg.m_max_factor * m_star;
        let copts = |step: f64| ContOptions {
            param: ContParam::M,
            step,
            min_step: 1e-6,
            max_step: cfg.step.abs(),
            max_steps: cfg.max_steps,
            bounds: (-1e-12, m_hi),
            solver: sopts.clone(),
        };
        let up = continue_branch(&g, &start, &copts(cfg.step.abs()))?;
        let down = continue_branch(&g, &start, &copts(-cfg.step.abs()))?;
        let mut pts: Vec<Candidate> = down.into_iter().skip(1).rev().chain(up).collect();
        // keep a single-valued graph over m (drop anything past a fold)
        let mut mono: Vec<Candidate> = Vec::with_capacity(pts.len());
        for c in pts.drain(..) {
            if mono.last().is_none_or(|l: &Candidate| c.m > l.m) {
                mono.push(c);
            }
        }
        let proved = if cfg.prove_branches {
            mono.par_iter()
                .map(|c| prove(&g, c, &ProofOptions::default()).map(|x| x.is_proved()).unwrap_or(false))
                .collect()
        } else {
            vec![false; mono.len()]
        };
        Ok((mono, proved))
    };
    match run() {
        Ok((p, pr)) => {
            out.points = p;
            out.proved = pr;
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

/// Linear interpolation of the energy offset (and `kappa`) of a branch at `m`.
fn interpolate(b: &Branch, m: f64) -> Option<(f64, f64, Vec<f64>, bool)> {
    let p = &b.points;
    if p.len() < 2 || m < p[0].m || m > p[p.len() - 1].m {
        return None;
    }
    let i = p.partition_point(|c| c.m <= m).clamp(1, p.len() - 1);
    let (l, r) = (&p[i - 1], &p[i]);
    let t = if r.m > l.m { (m - l.m) / (r.m - l.m) } else { 0.0 };
    let lerp = |a: f64, b: f64| a + t * (b - a);
    let offset = lerp(l.energy_offset, r.energy_offset);
    let trivial = Model::new(b.gamma, m).trivial_energy();
    let kappa = l.kappa.iter().zip(&r.kappa).map(|(a, b)| lerp(*a, *b)).collect();
    Some((trivial + offset, offset, kappa, b.proved[i - 1] && b.proved[i]))
}

/// Non-rigorous ranking on the `m` grid plus rigorous brackets of every
/// crossing between two branches.
pub fn sweep(cfg: &SweepConfig) -> Result<SweepResult, CliError> {
    cfg.validate()?;
    let jobs: Vec<(f64, &GroupSpec)> =
        cfg.gammas.iter().flat_map(|&g| cfg.groups.iter().filter(|s| s.name != UNIFORM).map(move |s| (g, s))).collect();
    let branches: Vec<Branch> = jobs.par_iter().map(|(g, s)| trace_branch(cfg, *g, s)).collect();
    let mut failures: Vec<String> =
        branches.iter().filter_map(|b| b.error.as_ref().map(|e| format!("gamma {} {}: {e}", b.gamma, b.group))).collect();
    let mut rows = Vec::new();
    let mut crossings = Vec::new();
    for &gamma in &cfg.gammas {
        let m_star = okmodel::m_star(gamma).map_err(|e| CliError::Config(e.to_string()))?;
        let m_hi = cfg.m_max_factor * m_star;
        let mine: Vec<&Branch> = branches.iter().filter(|b| b.gamma == gamma && b.error.is_none()).collect();
        let mut prev: Option<(String, f64)> = None;
        for i in 0..cfg.m_points {
            let m = m_hi * i as f64 / (cfg.m_points - 1) as f64;
            let model = Model::new(gamma, m);
            let mut best = SweepRow {
                gamma,
                m,
                group: UNIFORM.into(),
                energy: model.trivial_energy(),
                energy_offset: 0.0,
                kappa: vec![],
                proved: true,
            };
            for b in &mine {
                if let Some((e, off, kappa, proved)) = interpolate(b, m) {
                    if off < best.energy_offset {
                        best = SweepRow { gamma, m, group: b.group.clone(), energy: e, energy_offset: off, kappa, proved };
                    }
                }
            }
            if let Some((pg, pm)) = &prev {
                if *pg != best.group && *pg != UNIFORM && best.group != UNIFORM {
                    let both = |name: &str| mine.iter().find(|b| b.group == name).copied();
                    if let (Some(ba), Some(bb)) = (both(pg), both(&best.group)) {
                        crossings.push((ba, bb, *pm, m));
                    }
                }
            }
            prev = Some((best.group.clone(), m));
            rows.push(best);
        }
    }
    let mut boundaries = Vec::new();
    if cfg.refine_boundaries {
        let nearest = |b: &Branch, m: f64| -> Candidate {
            b.points
                .iter()
                .min_by(|x, y| (x.m - m).abs().total_cmp(&(y.m - m).abs()))
                .cloned()
                .expect("nonempty branch")
        };
        let results: Vec<Result<BoundaryPoint, CliError>> = crossings
            .par_iter()
            .map(|(ba, bb, m0, m1)| {
                let (a0, b0, a1, b1) = (nearest(ba, *m0), nearest(bb, *m0), nearest(ba, *m1), nearest(bb, *m1));
                refine_boundary([&a0, &b0, &a1, &b1], *m0, *m1, &BoundaryOptions::default())
            })
            .collect();
        for (r, (ba, bb, m0, m1)) in results.into_iter().zip(&crossings) {
            match r {
                Ok(bp) => boundaries.push(bp),
                Err(e) => failures.push(format!("boundary {} / {} in [{m0}, {m1}]: {e}", ba.group, bb.group)),
            }
        }
    }
    Ok(SweepResult { rows, boundaries, failures })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("gamma,m,group,E,E_offset,kappa,proved\n");
    for r in rows {
        let kappa: Vec<String> = r.kappa.iter().map(|k| format!("{k:.17e}")).collect();
        let _ = writeln!(
            s,
            "{},{},{},{:.17e},{:.17e},{},{}",
            r.gamma,
            r.m,
            r.group,
            r.energy,
            r.energy_offset,
            kappa.join(";"),
            r.proved
        );
    }
    s
}

/// Samples of `u_bar` on an `n^3` grid of the periodicity cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileGrid {
    pub n: usize,
    /// Direct lattice vectors (rows) of the cell at `kappa_bar`.
    pub cell: [[f64; 3]; 3],
    pub kappa: Vec<f64>,
    /// `values[(i0 * n + i1) * n + i2]` at fractional position `(i0, i1, i2) / n`.
    pub values: Vec<f64>,
    /// Largest imaginary part met while summing (zero up to rounding).
    pub max_imag: f64,
    /// Sup-norm distance to the true profile, `r_hat_2`.
    pub sup_error: f64,
    /// Error bars on the length scales, `kappa_bar_j r_hat_1`.
    pub kappa_error: Vec<f64>,
}

pub fn export_profile(g: &SpaceGroup, cert: &Certificate, n: usize) -> Result<ProfileGrid, CliError> {
    if !cert.is_proved() {
        return Err(CliError::Failed("certificate is not proved".into()));
    }
    if n == 0 {
        return Err(CliError::Config("grid size must be positive".into()));
    }
    let c = &cert.candidate;
    let st = c.state(g, c.k_cut)?;
    let full = crate::seqspace::sigma_expand(&st.set, Complex64::new(c.m, 0.0), &st.b);
    let modes: Vec<([i32; 3], Complex64)> = full.iter().filter(|(_, v)| v.norm() > 0.0).map(|(k, v)| (k, v)).collect();
    let tau = std::f64::consts::TAU;
    let mut values = vec![0.0; n * n * n];
    let mut max_imag: f64 = 0.0;
    for i0 in 0..n {
        for i1 in 0..n {
            for i2 in 0..n {
                let x = [i0 as f64 / n as f64, i1 as f64 / n as f64, i2 as f64 / n as f64];
                let mut s = Complex64::new(0.0, 0.0);
                for (k, v) in &modes {
                    let ph = tau * (k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2]);
                    s += v * Complex64::from_polar(1.0, ph);
                }
                values[(i0 * n + i1) * n + i2] = s.re;
                max_imag = max_imag.max(s.im.abs());
            }
        }
    }
    // reciprocal basis columns L e_i with |L k|^2 = Delta_k kappa; direct cell = 2 pi L^{-T}
    let lt = st.set.lattice.ltilde();
    let axis = st.set.lattice.scale_of_axis();
    let mut l = [[0.0; 3]; 3];
    for r in 0..3 {
        for col in 0..3 {
            l[r][col] = lt[r][col] * c.kappa[axis[r]].sqrt();
        }
    }
    let m3 = nalgebra::Matrix3::from_fn(|r, col| l[r][col]);
    let inv_t = m3.try_inverse().ok_or_else(|| CliError::Failed("singular lattice map".into()))?.transpose();
    let mut cell = [[0.0; 3]; 3];
    for (i, row) in cell.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = tau * inv_t[(j, i)];
        }
    }
    Ok(ProfileGrid {
        n,
        cell,
        kappa: c.kappa.clone(),
        values,
        max_imag,
        sup_error: cert.r_hat[1],
        kappa_error: cert.kappa_error.clone(),
    })
}
