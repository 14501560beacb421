//! Morse index of proved critical points.
//!
//! The index equals the number of negative eigenvalues of the self-adjoint
//! approximate inverse `A` (its tail is positive, and the contraction bound
//! keeps eigenvalues from crossing zero along `(1-s) A + s DF^{-1}`). That
//! count is certified by Sylvester's law with numerical eigenvectors `V` and
//! Gershgorin discs of `V^H A V` in interval arithmetic.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{CInterval, Interval};
use crate::okmodel::Model;
use crate::spacegroup::{ReducedSet, SpaceGroup};
use crate::validator::{self, Certificate, ProofOptions};

pub const DEFAULT_MARGIN: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum MorseError {
    #[error("state: {0}")]
    State(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error(transparent)]
    Validator(#[from] validator::ValidatorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorseMode {
    WithinSymmetryClass,
    FixedDomain,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MorseResult {
    pub index: usize,
    pub mode: MorseMode,
    /// Distance from 0 of each Gershgorin disc, relative to its center.
    pub disc_margins: Vec<f64>,
    /// Directions with zero second variation. Zero for every proof by
    /// contraction; the uniform state is neutral in the `J` length scales.
    pub neutral: usize,
}

/// Certified number of negative eigenvalues of a Hermitian matrix, and the
/// relative disc margins. Every disc must clear 0 by `margin` of its center.
pub fn negative_count(a: &DMatrix<Complex64>, margin: f64) -> Result<(usize, Vec<f64>), MorseError> {
    let n = a.nrows();
    if n == 0 {
        return Ok((0, vec![]));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(MorseError::Numerical("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(a.clone());
    let v = eig.eigenvectors;
    let vi = to_iv(&v);
    // V nonsingular: Gershgorin on V^H V (near the identity)
    let gram = congruence(&vi, &DMatrix::identity(n, n).map(|x: f64| CInterval::point(Complex64::new(x, 0.0))));
    for (c, _) in discs(&gram) {
        if c <= 0.0 {
            return Err(MorseError::Numerical("eigenvector matrix not provably nonsingular".into()));
        }
    }
    let b = congruence(&vi, &to_iv(a));
    let mut neg = 0;
    let mut margins = Vec::with_capacity(n);
    for (i, (lo_gap, sign)) in discs(&b).into_iter().enumerate() {
        let center = b[(i, i)].re.mag();
        let rel = if center > 0.0 { lo_gap / center } else { f64::NEG_INFINITY };
        if !(rel >= margin) {
            return Err(MorseError::Inconclusive(format!("Gershgorin disc {i} does not clear 0 (relative margin {rel:e})")));
        }
        if sign < 0.0 {
            neg += 1;
        }
        margins.push(rel);
    }
    Ok((neg, margins))
}

fn to_iv(m: &DMatrix<Complex64>) -> DMatrix<CInterval> {
    m.map(CInterval::point)
}

/// Encloses `V^H A V`, column by column in parallel.
fn congruence(v: &DMatrix<CInterval>, a: &DMatrix<CInterval>) -> DMatrix<CInterval> {
    let n = v.nrows();
    let cols: Vec<Vec<CInterval>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let av: Vec<CInterval> = (0..n).map(|r| (0..n).map(|t| a[(r, t)] * v[(t, j)]).sum()).collect();
            (0..n).map(|i| (0..n).map(|r| v[(r, i)].conj() * av[r]).sum()).collect()
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| cols[j][i])
}

/// For each row: (guaranteed gap between the disc and 0, sign of the disc).
/// The imaginary part of the diagonal enclosure counts toward the radius.
fn discs(b: &DMatrix<CInterval>) -> Vec<(f64, f64)> {
    let n = b.nrows();
    (0..n)
        .map(|i| {
            let d = b[(i, i)];
            let radius: Interval = (0..n).filter(|&j| j != i).map(|j| b[(i, j)].abs()).sum::<Interval>() + d.im.abs();
            let re = d.re;
            if re.lo() > 0.0 {
                ((re - radius).lo(), 1.0)
            } else if re.hi() < 0.0 {
                ((-re - radius).lo(), -1.0)
            } else {
                (f64::NEG_INFINITY, 0.0)
            }
        })
        .collect()
}

/// Index of the uniform state: reduced modes with `P(Delta_k kappa) + 3 m^2 < 0`.
/// Beyond `y = gamma^2 (1 + 3m^2)` the factor is positive, so the scan is complete.
fn uniform_index(g: &SpaceGroup, cert: &Certificate, mode: MorseMode, margin: f64) -> Result<MorseResult, MorseError> {
    let c = &cert.candidate;
    let model = Model::new(c.gamma, c.m);
    let y_max = c.gamma * c.gamma * (1.0 + 3.0 * c.m * c.m);
    let set = ReducedSet::build(g, &c.kappa, y_max.sqrt() * (1.0 + 1e-9) + 1e-9, c.nu);
    let three_m2 = Interval::point(3.0) * Interval::point(c.m).sqr();
    let mut index = 0;
    let mut margins = Vec::new();
    for i in 1..set.len() {
        let v = model.p(set.dk_iv(i), 0) + three_m2;
        let rel = v.mig() / v.mag();
        if v.contains_zero() || rel < margin {
            return Err(MorseError::Inconclusive(format!("mode {:?} is (nearly) neutral", set.entries[i].k)));
        }
        if v.is_negative() {
            index += 1;
        }
        margins.push(rel);
    }
    let neutral = if mode == MorseMode::WithinSymmetryClass { c.kappa.len() } else { 0 };
    Ok(MorseResult { index, mode, disc_margins: margins, neutral })
}

/// Morse index of the critical point in `cert`, with or without variations
/// of the length scales.
pub fn morse_index(g: &SpaceGroup, cert: &Certificate, mode: MorseMode, margin: f64) -> Result<MorseResult, MorseError> {
    if !cert.is_proved() {
        return Err(MorseError::State("certificate is not proved".into()));
    }
    if cert.exact_uniform {
        return uniform_index(g, cert, mode, margin);
    }
    let fixed = mode == MorseMode::FixedDomain;
    let cert = if fixed != cert.options.fixed_domain {
        if fixed && g.translation_freedom() > 0 {
            return Err(MorseError::State(format!(
                "group {} admits translations of the profile; fixed-domain index needs a group without them",
                g.name
            )));
        }
        let opts = ProofOptions { fixed_domain: fixed, ..cert.options.clone() };
        let again = validator::prove(g, &cert.candidate, &opts)?;
        if !again.is_proved() {
            return Err(MorseError::State(format!("proof in the requested mode failed: {:?}", again.status)));
        }
        again
    } else {
        cert.clone()
    };
    let data = validator::proof_data(g, &cert)?;
    let (index, disc_margins) = negative_count(&data.a, margin)?;
    Ok(MorseResult { index, mode, disc_margins, neutral: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<Complex64> {
        DMatrix::from_fn(v.len(), v.len(), |i, j| if i == j { Complex64::new(v[i], 0.0) } else { Complex64::new(0.0, 0.0) })
    }

    #[test]
    fn diagonal_examples() {
        assert_eq!(negative_count(&diag(&[-1.0, 2.0, 3.0]), DEFAULT_MARGIN).unwrap().0, 1);
        assert_eq!(negative_count(&DMatrix::identity(4, 4), DEFAULT_MARGIN).unwrap().0, 0);
        assert!(matches!(negative_count(&diag(&[0.0, 1.0]), DEFAULT_MARGIN), Err(MorseError::Inconclusive(_))));
    }

    #[test]
    fn hermitian_with_coupling() {
        // eigenvalues 1 +- |z| with |z| = 2: one negative
        let z = Complex64::new(1.2, 1.6);
        let a = DMatrix::from_row_slice(2, 2, &[Complex64::new(1.0, 0.0), z, z.conj(), Complex64::new(1.0, 0.0)]);
        assert_eq!(negative_count(&a, DEFAULT_MARGIN).unwrap().0, 1);
    }

    #[test]
    fn lamellar_index() {
        use crate::solver::{find, trivial_candidate, Init, SolverOptions};
        let g = SpaceGroup::load_named("lamellar").unwrap();
        let model = Model::new(2.5, 0.0);
        let c = find(&g, &model, 16.0, 1.05, &Init::Perturbation(0.1), &SolverOptions::default()).unwrap();
        let cert = validator::prove(&g, &c, &ProofOptions::default()).unwrap();
        let r = morse_index(&g, &cert, MorseMode::WithinSymmetryClass, DEFAULT_MARGIN).unwrap();
        assert_eq!(r.index, 0);
        let r = morse_index(&g, &cert, MorseMode::FixedDomain, DEFAULT_MARGIN).unwrap();
        assert_eq!(r.index, 0);
        // the uniform state at m = 0 is unstable in every mode with P(Delta_k kappa) < 0
        let t = validator::prove(&g, &trivial_candidate(&g, &model, 16.0, 1.05), &ProofOptions::default()).unwrap();
        let r = morse_index(&g, &t, MorseMode::FixedDomain, DEFAULT_MARGIN).unwrap();
        let set = ReducedSet::build(&g, &c.kappa, 10.0, 1.05);
        let expect = (1..set.len()).filter(|&i| model.p(set.entries[i].dk, 0) < 0.0).count();
        assert!(expect > 0);
        assert_eq!(r.index, expect);
    }
}
