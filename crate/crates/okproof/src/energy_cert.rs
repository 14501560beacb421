//! Energy enclosures of proved critical points and rigorous energy ordering.
//!
//! Along the segment from the true zero `x_hat` to the center `x_bar` the
//! energy is `E(s)`, with `E'(0) = 0`, so `|E(x_hat) - E(x_bar)| <= E2 / 2`
//! whenever `E2 >= max |E''(s)|`. `E2` is the upward-rounded sum of eight
//! terms `Phi_1..Phi_8`; every term carries a factor of `r_hat_1` or `r_hat_2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{CInterval, Interval};
use crate::okmodel::{self, Model};
use crate::seqspace::sigma_neg;
use crate::spacegroup::{ReducedSet, SpaceGroup};
use crate::validator::{self, full_norm_nu, Certificate, TailConstants};

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("state: {0}")]
    State(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Validator(#[from] validator::ValidatorError),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EnergyEnclosure {
    pub gamma: f64,
    pub m: f64,
    /// `E(kappa_bar, sigma(m e_0 + b_bar))` in interval arithmetic.
    pub center: Interval,
    /// Upward-rounded `E2 / 2`.
    pub half_width: f64,
    /// `Phi_1..Phi_8`.
    pub terms: [f64; 8],
    /// Encloses the energy of the true critical point.
    pub enclosure: Interval,
    /// `enclosure - (1 - m^2)^2 / 4`.
    pub offset: Interval,
}

impl EnergyEnclosure {
    /// A point enclosure with zero error, for an exact state.
    pub fn exact(model: &Model, center: Interval) -> Self {
        EnergyEnclosure {
            gamma: model.gamma,
            m: model.m,
            center,
            half_width: 0.0,
            terms: [0.0; 8],
            enclosure: center,
            offset: center - model.trivial_energy_iv(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    ABelow,
    BBelow,
    Overlap,
}

/// `A_below` iff the upper end of `A` lies strictly below the lower end of `B`.
pub fn compare(a: &EnergyEnclosure, b: &EnergyEnclosure) -> Result<Ordering, EnergyError> {
    if a.gamma != b.gamma || a.m != b.m {
        return Err(EnergyError::Config(format!(
            "enclosures at different parameters: (gamma, m) = ({}, {}) vs ({}, {})",
            a.gamma, a.m, b.gamma, b.m
        )));
    }
    Ok(if a.enclosure.hi() < b.enclosure.lo() {
        Ordering::ABelow
    } else if b.enclosure.hi() < a.enclosure.lo() {
        Ordering::BBelow
    } else {
        Ordering::Overlap
    })
}

/// `sup |P^(order)|` over `Delta_k kappa` for `kappa` in the box `kappa_bar (1 +- r1)`.
fn p_box(model: &Model, set: &ReducedSet, i: usize, r1: f64, order: u8) -> Interval {
    let d = &set.entries[i].delta;
    let y: Interval =
        (0..set.j()).map(|j| Interval::point(d[j] as f64) * Interval::new(1.0 - r1, 1.0 + r1) * Interval::point(set.kappa_bar[j])).sum();
    Interval::point(model.p(y, order).abs().hi())
}

/// The eight terms, given the center on its finite index set.
pub fn phi_terms(
    model: &Model,
    set: &ReducedSet,
    b: &[CInterval],
    r_hat: [f64; 2],
    tc: &TailConstants,
) -> [Interval; 8] {
    let iv = Interval::point;
    let (r1, r2) = (iv(r_hat[0]), iv(r_hat[1]));
    let nu = iv(set.nu);
    let mut phi = [Interval::ZERO; 8];
    let mut max2 = Interval::ZERO;
    let mut max3 = Interval::ZERO;
    let mut max4 = Interval::ZERO;
    let mut max5 = Interval::ZERO;
    let mut max6 = Interval::ZERO;
    for i in 1..b.len() {
        let g = iv(set.entries[i].orbit_size as f64);
        let dk = set.dk_iv(i);
        let om2 = set.weight_iv(i).sqr();
        let nu_neg = nu.pow_real(set.norm_iv(i)).expect("nu > 0").recip().expect("nonzero");
        let (p0, p1, p2) = (p_box(model, set, i, r_hat[0], 0), p_box(model, set, i, r_hat[0], 1), p_box(model, set, i, r_hat[0], 2));
        let bb = b[i].abs();
        let sn = sigma_neg(set, b, i).abs();
        phi[0] += p2 * dk.sqr() * g * bb * sn;
        max2 = max2.max(p2 * dk.sqr() * bb * nu_neg);
        max3 = max3.max(p2 * dk.sqr() * g / om2);
        max4 = max4.max(p1 * dk * sn * nu_neg);
        max5 = max5.max(p1 * dk * g / om2);
        max6 = max6.max(p0 * g / om2);
    }
    let half = iv(0.5);
    phi[0] = half * r1.sqr() * phi[0];
    phi[1] = r1.sqr() * r2 * max2;
    phi[2] = half * r1.sqr() * r2.sqr() * max3.max(iv(tc.d_p2));
    phi[3] = r1 * r2 * max4;
    phi[4] = r1 * r2.sqr() * max5.max(iv(tc.d_p1));
    phi[5] = r2.sqr() * max6.max(iv(tc.d_p0));
    let ex = okmodel::expand(model, set, b);
    phi[6] = iv(3.0) * r2.sqr() * full_norm_nu(set, &ex.c2);
    phi[7] = iv(6.0) * r2.pow_int(3).expect("finite") * (full_norm_nu(set, &ex.c) + r2);
    phi
}

/// `E2 = sum Phi_n` with the mixed terms counted twice, upward rounded.
pub fn e2_of(phi: &[Interval; 8]) -> f64 {
    let two = Interval::point(2.0);
    (phi[0] + phi[1] + phi[2] + two * (phi[3] + phi[4]) + phi[5] + phi[6] + phi[7]).hi()
}

/// Encloses the energy of the critical point certified by `cert`.
pub fn compute_e2(g: &SpaceGroup, cert: &Certificate) -> Result<EnergyEnclosure, EnergyError> {
    if !cert.is_proved() {
        return Err(EnergyError::State("certificate is not proved".into()));
    }
    let cand = &cert.candidate;
    let model = cand.model();
    let st = cand.state(g, cand.k_cut).map_err(validator::ValidatorError::from)?;
    let kappa: Vec<Interval> = st.kappa.iter().map(|&k| Interval::point(k)).collect();
    let b: Vec<CInterval> = st.b.iter().map(|&z| CInterval::point(z)).collect();
    let center = okmodel::energy::<CInterval>(&model, &st.set, &kappa, &b).re;
    if cert.exact_uniform || cert.r_hat == [0.0, 0.0] {
        return Ok(EnergyEnclosure::exact(&model, center));
    }
    let tc = validator::aux_tail_constants(model.gamma, cand.k_cut, cand.nu, cert.r_hat[0])?;
    let phi = phi_terms(&model, &st.set, &b, cert.r_hat, &tc);
    let e2 = e2_of(&phi);
    let half_width = (Interval::point(0.5) * Interval::point(e2)).hi();
    let enclosure = center + Interval::new(-half_width, half_width);
    Ok(EnergyEnclosure {
        gamma: model.gamma,
        m: model.m,
        center,
        half_width,
        terms: phi.map(|p| p.hi()),
        enclosure,
        offset: enclosure - model.trivial_energy_iv(),
    })
}
