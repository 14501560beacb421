//! Space groups acting on Fourier indices, orbits, and the symmetry-reduced
//! index sets together with the conjugation data (tau, phi).

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{CInterval, Interval};

pub type Index = [i32; 3];

/// Hard cap on the number of group elements (modulo lattice translations).
pub const MAX_ORDER: usize = 192;

/// Environment variable naming the directory holding `*.grp` files.
pub const GROUP_DIR_ENV: &str = "OKPROOF_GROUP_DIR";

#[derive(Debug, Error)]
pub enum GroupError {
    #[error("format error in {path}: {msg}")]
    Format { path: String, msg: String },
    #[error("invalid group: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Angle of a unit complex number in turns, kept exactly as a rational in [0, 1).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct Phase(Ratio<i64>);

impl Phase {
    pub fn zero() -> Phase {
        Phase(Ratio::zero())
    }

    pub fn new(r: Ratio<i64>) -> Phase {
        let f = r - r.floor();
        Phase(f)
    }

    pub fn turns(&self) -> Ratio<i64> {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn add(self, o: Phase) -> Phase {
        Phase::new(self.0 + o.0)
    }

    pub fn neg(self) -> Phase {
        Phase::new(-self.0)
    }

    /// True when the phase is ±1 or ±i, so products with it are exact.
    pub fn is_quarter(&self) -> bool {
        4 % *self.0.denom() == 0
    }

    pub fn to_complex(&self) -> Complex64 {
        let (p, q) = (*self.0.numer(), *self.0.denom());
        if 4 % q == 0 {
            return match p * (4 / q) {
                0 => Complex64::new(1.0, 0.0),
                1 => Complex64::new(0.0, 1.0),
                2 => Complex64::new(-1.0, 0.0),
                _ => Complex64::new(0.0, -1.0),
            };
        }
        if 24 % q == 0 {
            return CInterval::unit_phase(p, q).mid();
        }
        let t = 2.0 * std::f64::consts::PI * (p as f64) / (q as f64);
        Complex64::new(t.cos(), t.sin())
    }

    pub fn enclose(&self) -> CInterval {
        CInterval::unit_phase(*self.0.numer(), *self.0.denom())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeType {
    Orthorhombic,
    Tetragonal,
    Trigonal,
    Hexagonal,
    Cubic,
    #[serde(rename = "lamellar-1D")]
    Lamellar1D,
    #[serde(rename = "columnar-2D")]
    Columnar2D,
}

impl FromStr for LatticeType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "orthorhombic" => LatticeType::Orthorhombic,
            "tetragonal" => LatticeType::Tetragonal,
            "trigonal" => LatticeType::Trigonal,
            "hexagonal" => LatticeType::Hexagonal,
            "cubic" => LatticeType::Cubic,
            "lamellar-1d" | "lamellar" => LatticeType::Lamellar1D,
            "columnar-2d" | "columnar" => LatticeType::Columnar2D,
            _ => return Err(format!("unknown lattice type '{s}'")),
        })
    }
}

impl fmt::Display for LatticeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LatticeType::Orthorhombic => "orthorhombic",
            LatticeType::Tetragonal => "tetragonal",
            LatticeType::Trigonal => "trigonal",
            LatticeType::Hexagonal => "hexagonal",
            LatticeType::Cubic => "cubic",
            LatticeType::Lamellar1D => "lamellar-1D",
            LatticeType::Columnar2D => "columnar-2D",
        };
        f.write_str(s)
    }
}

impl LatticeType {
    /// Number of independent length scales.
    pub fn j(&self) -> usize {
        match self {
            LatticeType::Orthorhombic => 3,
            LatticeType::Tetragonal | LatticeType::Trigonal | LatticeType::Hexagonal => 2,
            LatticeType::Cubic | LatticeType::Lamellar1D | LatticeType::Columnar2D => 1,
        }
    }

    /// Number of spatial dimensions the profile varies in.
    pub fn dim(&self) -> usize {
        match self {
            LatticeType::Lamellar1D => 1,
            LatticeType::Columnar2D => 2,
            _ => 3,
        }
    }

    fn triangular(&self) -> bool {
        matches!(self, LatticeType::Trigonal | LatticeType::Hexagonal | LatticeType::Columnar2D)
    }

    /// Whether `k` lies in the index subspace used by this lattice.
    pub fn admits(&self, k: Index) -> bool {
        match self {
            LatticeType::Lamellar1D => k[1] == 0 && k[2] == 0,
            LatticeType::Columnar2D => k[2] == 0,
            _ => true,
        }
    }

    /// The integer forms `Delta_k^j`, padded with zeros beyond `J`.
    pub fn delta(&self, k: Index) -> [i64; 3] {
        let [a, b, c] = [k[0] as i64, k[1] as i64, k[2] as i64];
        let hex = a * a + a * b + b * b;
        match self {
            LatticeType::Orthorhombic => [a * a, b * b, c * c],
            LatticeType::Tetragonal => [a * a + b * b, c * c, 0],
            LatticeType::Trigonal | LatticeType::Hexagonal => [hex, c * c, 0],
            LatticeType::Cubic => [a * a + b * b + c * c, 0, 0],
            LatticeType::Lamellar1D => [a * a, 0, 0],
            LatticeType::Columnar2D => [hex, 0, 0],
        }
    }

    /// `L~`, the scale-free factor of the reciprocal lattice map.
    pub fn ltilde(&self) -> [[f64; 3]; 3] {
        if self.triangular() {
            [[1.0, 0.5, 0.0], [0.0, 3f64.sqrt() / 2.0, 0.0], [0.0, 0.0, 1.0]]
        } else {
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        }
    }

    /// Which independent scale each Cartesian coordinate uses.
    pub fn scale_of_axis(&self) -> [usize; 3] {
        match self.j() {
            3 => [0, 1, 2],
            2 => [0, 0, 1],
            _ => [0, 0, 0],
        }
    }

    /// Bound on |k_i| for all admitted k with `Delta_k kappa <= r2`.
    fn component_bounds(&self, kappa: &[f64], r2: f64) -> [i32; 3] {
        let axis = self.scale_of_axis();
        // smallest eigenvalue of the per-axis form: 1 for sums of squares,
        // 1/2 for k1^2 + k1 k2 + k2^2
        let lam = if self.triangular() { 0.5 } else { 1.0 };
        let mut out = [0i32; 3];
        for i in 0..3 {
            let l = if i < 2 { lam } else { 1.0 };
            let b = (r2 / (l * kappa[axis[i]])).sqrt().floor() as i32 + 1;
            out[i] = b;
        }
        match self {
            LatticeType::Lamellar1D => [out[0], 0, 0],
            LatticeType::Columnar2D => [out[0], out[1], 0],
            _ => out,
        }
    }
}

fn ratio_parse(s: &str) -> Result<Ratio<i64>, String> {
    if let Some((p, q)) = s.split_once('/') {
        let p: i64 = p.trim().parse().map_err(|e| format!("bad numerator '{p}': {e}"))?;
        let q: i64 = q.trim().parse().map_err(|e| format!("bad denominator '{q}': {e}"))?;
        if q == 0 {
            return Err("zero denominator".into());
        }
        Ok(Ratio::new(p, q))
    } else {
        let p: i64 = s.trim().parse().map_err(|e| format!("bad rational '{s}': {e}"))?;
        Ok(Ratio::from_integer(p))
    }
}

fn frac(r: Ratio<i64>) -> Ratio<i64> {
    r - r.floor()
}

pub type Mat3 = [[i32; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|l| a[i][l] * b[l][j]).sum();
        }
    }
    c
}

fn det(a: &Mat3) -> i32 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Inverse transpose of a unimodular matrix (the cofactor matrix times det).
fn inv_transpose(a: &Mat3) -> Mat3 {
    let d = det(a);
    let mut c = [[0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
            let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
            c[i][j] = (a[i1][j1] * a[i2][j2] - a[i1][j2] * a[i2][j1]) * d;
        }
    }
    c
}

/// A symmetry operation: Fourier-index action `beta` and fractional shift `D`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroupElement {
    pub beta: Mat3,
    pub shift: [Ratio<i64>; 3],
}

impl GroupElement {
    pub fn identity() -> Self {
        GroupElement { beta: [[1, 0, 0], [0, 1, 0], [0, 0, 1]], shift: [Ratio::zero(); 3] }
    }

    pub fn apply(&self, k: Index) -> Index {
        let b = &self.beta;
        [
            b[0][0] * k[0] + b[0][1] * k[1] + b[0][2] * k[2],
            b[1][0] * k[0] + b[1][1] * k[1] + b[1][2] * k[2],
            b[2][0] * k[0] + b[2][1] * k[1] + b[2][2] * k[2],
        ]
    }

    /// `alpha_g(k) = exp(2 pi i beta_g(k) . D_g)` as an exact angle.
    pub fn alpha(&self, k: Index) -> Phase {
        let bk = self.apply(k);
        let mut s = Ratio::zero();
        for i in 0..3 {
            s += self.shift[i] * Ratio::from_integer(bk[i] as i64);
        }
        Phase::new(s)
    }

    /// `self ∘ other`: the operation that first applies `other`, then `self`.
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        let beta = mat_mul(&self.beta, &other.beta);
        // the real-space point part is beta^-T
        let w = inv_transpose(&self.beta);
        let mut shift = [Ratio::zero(); 3];
        for i in 0..3 {
            let mut s = self.shift[i];
            for j in 0..3 {
                s += Ratio::from_integer(w[i][j] as i64) * other.shift[j];
            }
            shift[i] = frac(s);
        }
        GroupElement { beta, shift }
    }

    pub fn is_identity(&self) -> bool {
        *self == GroupElement::identity()
    }
}

#[derive(Clone, Debug)]
pub struct SpaceGroup {
    pub name: String,
    pub lattice: LatticeType,
    pub elements: Vec<GroupElement>,
}

impl SpaceGroup {
    /// Close `generators` under composition and validate.
    pub fn from_generators(
        name: &str,
        lattice: LatticeType,
        generators: Vec<GroupElement>,
    ) -> Result<SpaceGroup, GroupError> {
        let norm = |g: GroupElement| GroupElement { beta: g.beta, shift: g.shift.map(frac) };
        let gens: Vec<GroupElement> = generators.into_iter().map(norm).collect();
        for g in &gens {
            if det(&g.beta).abs() != 1 {
                return Err(GroupError::Invalid(format!("beta {:?} is not unimodular", g.beta)));
            }
        }
        let mut seen: HashSet<GroupElement> = HashSet::new();
        let mut elements = vec![GroupElement::identity()];
        seen.insert(GroupElement::identity());
        let mut queue = VecDeque::from([GroupElement::identity()]);
        while let Some(e) = queue.pop_front() {
            for g in &gens {
                let n = g.compose(&e);
                if seen.insert(n.clone()) {
                    if elements.len() >= MAX_ORDER {
                        return Err(GroupError::Invalid(format!(
                            "generators of '{name}' do not close within {MAX_ORDER} elements"
                        )));
                    }
                    elements.push(n.clone());
                    queue.push_back(n);
                }
            }
        }
        let g = SpaceGroup { name: name.to_string(), lattice, elements };
        g.validate()?;
        Ok(g)
    }

    /// Checks invariance of the `Delta^j` forms and of the lattice subspace.
    pub fn validate(&self) -> Result<(), GroupError> {
        let probes: Vec<Index> = {
            let mut v = Vec::new();
            for a in -2..=2 {
                for b in -2..=2 {
                    for c in -2..=2 {
                        let k = [a, b, c];
                        if self.lattice.admits(k) {
                            v.push(k);
                        }
                    }
                }
            }
            v
        };
        for g in &self.elements {
            for &k in &probes {
                let gk = g.apply(k);
                if !self.lattice.admits(gk) {
                    return Err(GroupError::Invalid(format!(
                        "element {:?} maps {:?} out of the {} index subspace",
                        g.beta, k, self.lattice
                    )));
                }
                if self.lattice.delta(gk) != self.lattice.delta(k) {
                    return Err(GroupError::Invalid(format!(
                        "element {:?} does not preserve the {} scale forms at {:?}",
                        g.beta, self.lattice, k
                    )));
                }
            }
        }
        for a in &self.elements {
            for b in &self.elements {
                if !self.elements.contains(&a.compose(b)) {
                    return Err(GroupError::Invalid("element set not closed".into()));
                }
            }
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn j(&self) -> usize {
        self.lattice.j()
    }

    pub fn parse(name: &str, text: &str, path: &str) -> Result<SpaceGroup, GroupError> {
        let ferr = |msg: String| GroupError::Format { path: path.to_string(), msg };
        let mut lattice = None;
        let mut gens = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("lattice") {
                let t = rest.trim().parse::<LatticeType>().map_err(|e| ferr(format!("line {}: {e}", ln + 1)))?;
                lattice = Some(t);
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 12 {
                return Err(ferr(format!("line {}: expected 12 fields, found {}", ln + 1, toks.len())));
            }
            let mut beta = [[0i32; 3]; 3];
            for i in 0..9 {
                beta[i / 3][i % 3] =
                    toks[i].parse().map_err(|e| ferr(format!("line {}: bad integer '{}': {e}", ln + 1, toks[i])))?;
            }
            let mut shift = [Ratio::zero(); 3];
            for i in 0..3 {
                shift[i] = ratio_parse(toks[9 + i]).map_err(|e| ferr(format!("line {}: {e}", ln + 1)))?;
            }
            gens.push(GroupElement { beta, shift });
        }
        let lattice = lattice.ok_or_else(|| ferr("missing 'lattice <type>' header".into()))?;
        SpaceGroup::from_generators(name, lattice, gens)
    }

    pub fn load(path: &Path) -> Result<SpaceGroup, GroupError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| GroupError::Io { path: p.clone(), source: e })?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        SpaceGroup::parse(&name, &text, &p)
    }

    /// Loads `<name>.grp` from the group directory.
    pub fn load_named(name: &str) -> Result<SpaceGroup, GroupError> {
        SpaceGroup::load(&group_dir().join(format!("{name}.grp")))
    }

    pub fn orbit_and_stabilizer(&self, k: Index) -> (Vec<Index>, Vec<usize>) {
        let mut orbit = Vec::new();
        let mut stab = Vec::new();
        let mut seen = HashSet::new();
        for (i, g) in self.elements.iter().enumerate() {
            let gk = g.apply(k);
            if gk == k {
                stab.push(i);
            }
            if seen.insert(gk) {
                orbit.push(gk);
            }
        }
        (orbit, stab)
    }

    pub fn is_symmetric_index(&self, k: Index) -> bool {
        self.elements.iter().filter(|g| g.apply(k) == k).all(|g| g.alpha(k).is_zero())
    }

    /// Orbit of `k` with `alpha~(k, k')` for every `k'` in it.
    pub fn orbit_phases(&self, k: Index) -> Vec<(Index, Phase)> {
        let mut out: Vec<(Index, Phase)> = Vec::new();
        let mut seen = HashSet::new();
        for g in &self.elements {
            let gk = g.apply(k);
            if seen.insert(gk) {
                out.push((gk, g.alpha(k).neg()));
            }
        }
        out
    }

    /// Largest lexicographic element of the orbit.
    pub fn canonical(&self, k: Index) -> Index {
        self.elements.iter().map(|g| g.apply(k)).max().unwrap()
    }

    /// Dimension of the subspace fixed by the average point action, restricted
    /// to the lattice's active directions. Nonzero means the class admits
    /// continuous translations.
    pub fn translation_freedom(&self) -> usize {
        let dim = self.lattice.dim();
        let mut s = [[0i64; 3]; 3];
        for g in &self.elements {
            let w = inv_transpose(&g.beta);
            for i in 0..3 {
                for j in 0..3 {
                    s[i][j] += w[i][j] as i64;
                }
            }
        }
        // trace of a projector times |G|
        let tr: i64 = (0..dim).map(|i| s[i][i]).sum();
        (tr / self.order() as i64) as usize
    }
}

pub fn group_dir() -> PathBuf {
    match std::env::var_os(GROUP_DIR_ENV) {
        Some(p) => PathBuf::from(p),
        None => PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data/groups")),
    }
}

/// One symmetry-reduced Fourier index.
#[derive(Clone, Debug)]
pub struct ReducedIndex {
    pub k: Index,
    pub orbit_size: usize,
    pub delta: [i64; 3],
    /// `Delta_k kappa_bar`
    pub dk: f64,
    /// `sqrt(Delta_k kappa_bar)`
    pub norm: f64,
    pub weight: f64,
    /// Position of `tau(k)` in the same set.
    pub tau: usize,
    pub phi: Phase,
    /// Orbit members with `alpha~(k, k')`.
    pub orbit: Vec<(Index, Phase)>,
}

/// Symmetry-reduced indices with `||k|| <= radius`, sorted by norm; entry 0 is k = 0.
#[derive(Clone, Debug)]
pub struct ReducedSet {
    pub lattice: LatticeType,
    pub group_name: String,
    pub group_order: usize,
    pub kappa_bar: Vec<f64>,
    pub nu: f64,
    pub radius: f64,
    pub entries: Vec<ReducedIndex>,
    /// Every orbit member of every entry, mapped to (entry, alpha~).
    pub lookup: HashMap<Index, (usize, Phase)>,
}

impl ReducedSet {
    pub fn build(g: &SpaceGroup, kappa_bar: &[f64], radius: f64, nu: f64) -> ReducedSet {
        assert_eq!(kappa_bar.len(), g.j(), "kappa_bar has wrong length");
        assert!(nu > 1.0 && radius >= 0.0);
        let lat = g.lattice;
        let dk = |k: Index| -> f64 {
            let d = lat.delta(k);
            (0..lat.j()).map(|j| d[j] as f64 * kappa_bar[j]).sum()
        };
        let r2 = radius * radius;
        let b = lat.component_bounds(kappa_bar, r2);
        let mut reps: BTreeMap<Index, ()> = BTreeMap::new();
        for a in -b[0]..=b[0] {
            for bb in -b[1]..=b[1] {
                for c in -b[2]..=b[2] {
                    let k = [a, bb, c];
                    if dk(k) > r2 {
                        continue;
                    }
                    let can = g.canonical(k);
                    if can == k && g.is_symmetric_index(k) {
                        reps.insert(k, ());
                    }
                }
            }
        }
        let mut entries: Vec<ReducedIndex> = reps
            .keys()
            .map(|&k| {
                let orbit = g.orbit_phases(k);
                let d = dk(k);
                let norm = d.sqrt();
                ReducedIndex {
                    k,
                    orbit_size: orbit.len(),
                    delta: lat.delta(k),
                    dk: d,
                    norm,
                    weight: orbit.len() as f64 * nu.powf(norm),
                    tau: 0,
                    phi: Phase::zero(),
                    orbit,
                }
            })
            .collect();
        entries.sort_by(|x, y| x.dk.partial_cmp(&y.dk).unwrap().then(y.k.cmp(&x.k)));
        let mut lookup = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            for &(kk, ph) in &e.orbit {
                lookup.insert(kk, (i, ph));
            }
        }
        for i in 0..entries.len() {
            let k = entries[i].k;
            let neg = [-k[0], -k[1], -k[2]];
            let (t, _) = lookup[&g.canonical(neg)];
            // phi_k = alpha~(tau(k), -k)
            let (_, ph) = lookup[&neg];
            debug_assert_eq!(lookup[&neg].0, t);
            entries[i].tau = t;
            entries[i].phi = ph;
        }
        ReducedSet {
            lattice: lat,
            group_name: g.name.clone(),
            group_order: g.order(),
            kappa_bar: kappa_bar.to_vec(),
            nu,
            radius,
            entries,
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn j(&self) -> usize {
        self.kappa_bar.len()
    }

    /// Number of entries with `||k|| <= r` (entries are sorted).
    pub fn count_within(&self, r: f64) -> usize {
        self.entries.partition_point(|e| e.dk <= r * r)
    }

    pub fn position(&self, k: Index) -> Option<usize> {
        self.lookup.get(&k).and_then(|&(i, _)| (self.entries[i].k == k).then_some(i))
    }

    /// `sigma(b)_k' = alpha~ b_rep`: the reduced entry and phase for any lattice index.
    pub fn resolve(&self, k: Index) -> Option<(usize, Phase)> {
        self.lookup.get(&k).copied()
    }

    /// Rigorous enclosure of `||k|| = sqrt(Delta_k kappa_bar)` for entry `i`.
    pub fn norm_iv(&self, i: usize) -> Interval {
        self.dk_iv(i).sqrt().expect("nonnegative")
    }

    /// Rigorous enclosure of `Delta_k kappa_bar` for entry `i`.
    pub fn dk_iv(&self, i: usize) -> Interval {
        let d = &self.entries[i].delta;
        (0..self.j()).map(|j| Interval::point(d[j] as f64) * Interval::point(self.kappa_bar[j])).sum()
    }

    /// Rigorous enclosure of `omega_k` for entry `i`.
    pub fn weight_iv(&self, i: usize) -> Interval {
        let e = &self.entries[i];
        Interval::point(e.orbit_size as f64) * Interval::point(self.nu).pow_real(self.norm_iv(i)).unwrap()
    }

    /// `(I b)_k = phi_k b_{tau(k)}`.
    pub fn i_apply(&self, b: &[Complex64]) -> Vec<Complex64> {
        self.entries.iter().map(|e| e.phi.to_complex() * b[e.tau]).collect()
    }

    /// `(I_* b)_k = conj(phi_k b_{tau(k)})`.
    pub fn conj_apply(&self, b: &[Complex64]) -> Vec<Complex64> {
        self.i_apply(b).into_iter().map(|z| z.conj()).collect()
    }
}

/// Smallest radius above `k0` avoiding every shell by a relative gap of `rel`.
pub fn nudge_cutoff(g: &SpaceGroup, kappa_bar: &[f64], k0: f64, rel: f64) -> f64 {
    let probe = ReducedSet::build(g, kappa_bar, k0 * (1.0 + 10.0 * rel) + 1e-6, 1.05);
    let shells: Vec<f64> = probe.entries.iter().map(|e| e.dk).collect();
    let mut k = k0;
    loop {
        let k2 = k * k;
        match shells.iter().find(|&&d| (d - k2).abs() <= rel * k2) {
            Some(&d) => k = (d * (1.0 + 2.0 * rel)).sqrt(),
            None => return k,
        }
    }
}
