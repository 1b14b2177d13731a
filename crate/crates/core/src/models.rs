//! Parametrized single-photon path states and W states.
//!
//! A [`StructuredState`] holds the block-structured density matrix used
//! throughout the reconstruction: a vacuum/single-photon block (diagonals,
//! pairwise coherences `d_ij = <1_i|ρ|1_j>`, vacuum coherences
//! `d_i = <0|ρ|1_i>`) plus an optional block with two or more photons that
//! does not couple to anything else.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{CMatrix, CVector, DensityOperator, FockSpace, StateVector, PSD_TOL};

/// Tolerance for normalization and coherence-bound checks.
pub const MODEL_TOL: f64 = 1e-10;

/// Photon-number occupation of every mode, written as a digit string ("010").
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pattern(Vec<u8>);

impl Pattern {
    pub fn new(occupation: Vec<u8>) -> Self {
        Pattern(occupation)
    }

    pub fn vacuum(num_modes: usize) -> Self {
        Pattern(vec![0; num_modes])
    }

    pub fn single(num_modes: usize, mode: usize) -> Self {
        let mut occ = vec![0; num_modes];
        occ[mode] = 1;
        Pattern(occ)
    }

    /// One photon in each listed mode.
    pub fn ones(num_modes: usize, modes: &[usize]) -> Self {
        let mut occ = vec![0; num_modes];
        for &m in modes {
            occ[m] += 1;
        }
        Pattern(occ)
    }

    pub fn occupation(&self) -> &[u8] {
        &self.0
    }

    pub fn num_modes(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&n| n as usize).sum()
    }

    pub fn max_occupation(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0) as usize
    }

    /// Mode holding the single photon, if this is a one-photon pattern.
    pub fn single_mode(&self) -> Option<usize> {
        if self.total() == 1 {
            self.0.iter().position(|&n| n == 1)
        } else {
            None
        }
    }

    pub fn index_in(&self, space: &FockSpace) -> Result<usize> {
        let occ: Vec<usize> = self.0.iter().map(|&n| n as usize).collect();
        space.index_of(&occ)
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in &self.0 {
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let occ = s
            .chars()
            .map(|c| {
                c.to_digit(10)
                    .map(|d| d as u8)
                    .ok_or_else(|| Error::InvalidModel(format!("bad pattern {s:?}")))
            })
            .collect::<Result<Vec<u8>>>()?;
        if occ.is_empty() {
            return Err(Error::InvalidModel("empty pattern".into()));
        }
        Ok(Pattern(occ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StructuredStateDoc", into = "StructuredStateDoc")]
pub struct StructuredState {
    num_modes: usize,
    pub diagonals: BTreeMap<Pattern, f64>,
    /// `<1_i|ρ|1_j>` keyed by `(i, j)` with `i < j`.
    pub coherences: BTreeMap<(usize, usize), Complex64>,
    /// `<0|ρ|1_i>` keyed by mode.
    pub vacuum_coherences: BTreeMap<usize, Complex64>,
    /// Off-diagonal entries `<P|ρ|Q>` of the multi-photon block, `P < Q`.
    pub two_photon_coherences: BTreeMap<(Pattern, Pattern), Complex64>,
}

/// Result of reading the model parameters off a density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub model: StructuredState,
    /// Sum of absolute values of the entries the model cannot represent.
    pub residual: f64,
}

impl StructuredState {
    /// Empty model (all zeros) on `num_modes` modes.
    pub fn empty(num_modes: usize) -> Result<Self> {
        if num_modes == 0 {
            return Err(Error::EmptyModeSet);
        }
        Ok(StructuredState {
            num_modes,
            diagonals: BTreeMap::new(),
            coherences: BTreeMap::new(),
            vacuum_coherences: BTreeMap::new(),
            two_photon_coherences: BTreeMap::new(),
        })
    }

    /// Vacuum/single-photon model with `p_vac = 1 - Σ singles`.
    pub fn single_photon(singles: &[f64], coherences: &[((usize, usize), Complex64)]) -> Result<Self> {
        let n = singles.len();
        let mut m = StructuredState::empty(n)?;
        m.diagonals.insert(Pattern::vacuum(n), 1.0 - singles.iter().sum::<f64>());
        for (i, &p) in singles.iter().enumerate() {
            m.diagonals.insert(Pattern::single(n, i), p);
        }
        for &((i, j), d) in coherences {
            m.set_coherence(i, j, d)?;
        }
        Ok(m)
    }

    pub fn vacuum(num_modes: usize) -> Result<Self> {
        let mut m = StructuredState::empty(num_modes)?;
        m.diagonals.insert(Pattern::vacuum(num_modes), 1.0);
        Ok(m)
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn p_vacuum(&self) -> f64 {
        self.diagonal(&Pattern::vacuum(self.num_modes))
    }

    pub fn p_single(&self, mode: usize) -> f64 {
        self.diagonal(&Pattern::single(self.num_modes, mode))
    }

    pub fn diagonal(&self, pattern: &Pattern) -> f64 {
        self.diagonals.get(pattern).copied().unwrap_or(0.0)
    }

    /// `<1_i|ρ|1_j>` for any ordered pair.
    pub fn coherence(&self, i: usize, j: usize) -> Complex64 {
        if i == j {
            return Complex64::new(self.p_single(i), 0.0);
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let d = self.coherences.get(&(a, b)).copied().unwrap_or_default();
        if i < j {
            d
        } else {
            d.conj()
        }
    }

    pub fn set_coherence(&mut self, i: usize, j: usize, d: Complex64) -> Result<()> {
        if i == j {
            return Err(Error::DuplicateMode(i));
        }
        for m in [i, j] {
            if m >= self.num_modes {
                return Err(Error::ModeOutOfRange { index: m, num_modes: self.num_modes });
            }
        }
        if i < j {
            self.coherences.insert((i, j), d);
        } else {
            self.coherences.insert((j, i), d.conj());
        }
        Ok(())
    }

    pub fn vacuum_coherence(&self, mode: usize) -> Complex64 {
        self.vacuum_coherences.get(&mode).copied().unwrap_or_default()
    }

    pub fn single_photon_mass(&self) -> f64 {
        (0..self.num_modes).map(|i| self.p_single(i)).sum()
    }

    /// Total diagonal weight on patterns with two or more photons.
    pub fn two_photon_trace(&self) -> f64 {
        self.diagonals.iter().filter(|(p, _)| p.total() >= 2).map(|(_, v)| v).sum()
    }

    /// The `N x N` block `<1_i|ρ|1_j>`.
    pub fn single_photon_block(&self) -> CMatrix {
        let n = self.num_modes;
        CMatrix::from_fn(n, n, |i, j| self.coherence(i, j))
    }

    /// Single-photon block divided by its trace.
    pub fn subspace_normalized(&self) -> Result<CMatrix> {
        let mass = self.single_photon_mass();
        if !(mass > 0.0) {
            return Err(Error::NotNormalizable);
        }
        Ok(self.single_photon_block().map(|z| z / mass))
    }

    /// Smallest cutoff that represents every pattern.
    pub fn required_cutoff(&self) -> usize {
        self.diagonals
            .keys()
            .chain(self.two_photon_coherences.keys().flat_map(|(p, q)| [p, q]))
            .map(Pattern::max_occupation)
            .max()
            .unwrap_or(0)
            .max(1)
    }

    fn check_structure(&self) -> Result<()> {
        let n = self.num_modes;
        for p in self.diagonals.keys() {
            if p.num_modes() != n {
                return Err(Error::InvalidModel(format!("pattern {p} does not have {n} modes")));
            }
        }
        for &(i, j) in self.coherences.keys() {
            if i >= j || j >= n {
                return Err(Error::InvalidModel(format!("coherence key ({i},{j}) invalid for {n} modes")));
            }
        }
        for &m in self.vacuum_coherences.keys() {
            if m >= n {
                return Err(Error::ModeOutOfRange { index: m, num_modes: n });
            }
        }
        for (p, q) in self.two_photon_coherences.keys() {
            if p.num_modes() != n || q.num_modes() != n || p.total() < 2 || q.total() < 2 || p >= q {
                return Err(Error::InvalidModel(format!("multi-photon coherence key ({p},{q}) invalid")));
            }
        }
        Ok(())
    }

    /// Checks every model invariant, including positivity of the assembled matrix.
    pub fn validate(&self) -> Result<()> {
        self.check_structure()?;
        for (p, &v) in &self.diagonals {
            if !v.is_finite() || v < -MODEL_TOL {
                return Err(Error::InvalidModel(format!("diagonal {p} = {v} is negative")));
            }
        }
        let total: f64 = self.diagonals.values().sum();
        if (total - 1.0).abs() > MODEL_TOL {
            return Err(Error::InvalidModel(format!("diagonals sum to {total}, not 1")));
        }
        for (&(i, j), d) in &self.coherences {
            let bound = (self.p_single(i).max(0.0) * self.p_single(j).max(0.0)).sqrt();
            if d.norm() > bound + MODEL_TOL {
                return Err(Error::InvalidModel(format!(
                    "|d_{i}{j}| = {} exceeds sqrt(p_{i} p_{j}) = {bound}",
                    d.norm()
                )));
            }
        }
        for (&m, d) in &self.vacuum_coherences {
            let bound = (self.p_vacuum().max(0.0) * self.p_single(m).max(0.0)).sqrt();
            if d.norm() > bound + MODEL_TOL {
                return Err(Error::InvalidModel(format!(
                    "vacuum coherence of mode {m} ({}) exceeds bound {bound}",
                    d.norm()
                )));
            }
        }
        let rho = self.to_density_unchecked(self.required_cutoff())?;
        let min_ev = rho.min_eigenvalue();
        if min_ev < -PSD_TOL {
            return Err(Error::InvalidModel(format!("assembled matrix has eigenvalue {min_ev:e}")));
        }
        Ok(())
    }

    /// Validated density matrix at the default cutoff (or larger if needed).
    pub fn assemble(&self) -> Result<DensityOperator> {
        self.assemble_with_cutoff(FockSpace::DEFAULT_CUTOFF.max(self.required_cutoff()))
    }

    pub fn assemble_with_cutoff(&self, cutoff: usize) -> Result<DensityOperator> {
        self.validate()?;
        self.to_density_unchecked(cutoff)
    }

    /// Builds the matrix without positivity or normalization checks.
    pub fn to_density_unchecked(&self, cutoff: usize) -> Result<DensityOperator> {
        self.check_structure()?;
        let n = self.num_modes;
        let space = FockSpace::new(n, cutoff)?;
        let mut m = CMatrix::zeros(space.dim(), space.dim());
        for (p, &v) in &self.diagonals {
            let k = p.index_in(&space)?;
            m[(k, k)] = Complex64::new(v, 0.0);
        }
        let single = |i: usize| Pattern::single(n, i).index_in(&space);
        for (&(i, j), &d) in &self.coherences {
            let (a, b) = (single(i)?, single(j)?);
            m[(a, b)] = d;
            m[(b, a)] = d.conj();
        }
        for (&i, &d) in &self.vacuum_coherences {
            let a = single(i)?;
            m[(0, a)] = d;
            m[(a, 0)] = d.conj();
        }
        for ((p, q), &z) in &self.two_photon_coherences {
            let (a, b) = (p.index_in(&space)?, q.index_in(&space)?);
            m[(a, b)] = z;
            m[(b, a)] = z.conj();
        }
        DensityOperator::new(space, m)
    }

    /// Reads the model parameters off `rho`. Vacuum and single-photon
    /// diagonals and every pairwise coherence are always present; other
    /// entries only when nonzero.
    pub fn extract_structure(rho: &DensityOperator) -> Result<Extraction> {
        let space = *rho.space();
        let n = space.num_modes();
        let mat = rho.matrix();
        let mut model = StructuredState::empty(n)?;
        let pattern_of = |k: usize| Pattern(space.occupation(k).iter().map(|&v| v as u8).collect());
        let mut residual = 0.0;
        for a in 0..space.dim() {
            let ta = space.total_photons(a);
            let diag = mat[(a, a)].re;
            if ta <= 1 || diag != 0.0 {
                model.diagonals.insert(pattern_of(a), diag);
            }
            for b in (a + 1)..space.dim() {
                let z = mat[(a, b)];
                let tb = space.total_photons(b);
                match (ta, tb) {
                    (1, 1) => {
                        let (i, j) = (pattern_of(a).single_mode().unwrap(), pattern_of(b).single_mode().unwrap());
                        // lower index means a less significant mode, so i > j here
                        if i < j {
                            model.coherences.insert((i, j), z);
                        } else {
                            model.coherences.insert((j, i), z.conj());
                        }
                    }
                    (0, 1) if z != Complex64::default() => {
                        model.vacuum_coherences.insert(pattern_of(b).single_mode().unwrap(), z);
                    }
                    (x, y) if x >= 2 && y >= 2 && z != Complex64::default() => {
                        let (p, q) = (pattern_of(a), pattern_of(b));
                        if p < q {
                            model.two_photon_coherences.insert((p, q), z);
                        } else {
                            model.two_photon_coherences.insert((q, p), z.conj());
                        }
                    }
                    (0, 1) => {}
                    (x, y) if x >= 2 && y >= 2 => {}
                    _ => residual += 2.0 * z.norm(),
                }
            }
        }
        Ok(Extraction { model, residual })
    }

    /// Reduced model on the listed modes (ascending order in the result).
    pub fn marginal(&self, keep: &[usize]) -> Result<StructuredState> {
        let rho = self.to_density_unchecked(self.required_cutoff())?;
        let reduced = rho.partial_trace(keep)?;
        Ok(StructuredState::extract_structure(&reduced)?.model)
    }

    /// Largest absolute difference over every parameter; entries missing
    /// on one side count as zero.
    pub fn max_abs_diff(&self, other: &StructuredState) -> f64 {
        if self.num_modes != other.num_modes {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for p in self.diagonals.keys().chain(other.diagonals.keys()) {
            worst = worst.max((self.diagonal(p) - other.diagonal(p)).abs());
        }
        for k in self.coherences.keys().chain(other.coherences.keys()) {
            worst = worst.max((self.coherence(k.0, k.1) - other.coherence(k.0, k.1)).norm());
        }
        for m in self.vacuum_coherences.keys().chain(other.vacuum_coherences.keys()) {
            worst = worst.max((self.vacuum_coherence(*m) - other.vacuum_coherence(*m)).norm());
        }
        for k in self.two_photon_coherences.keys().chain(other.two_photon_coherences.keys()) {
            let a = self.two_photon_coherences.get(k).copied().unwrap_or_default();
            let b = other.two_photon_coherences.get(k).copied().unwrap_or_default();
            worst = worst.max((a - b).norm());
        }
        worst
    }

    pub fn approx_eq(&self, other: &StructuredState, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    /// `(1 - f) ρ + f |0><0|`.
    pub fn with_vacuum_admixture(&self, fraction: f64) -> Result<StructuredState> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidParameter(format!("vacuum fraction {fraction} outside [0, 1]")));
        }
        let mut out = self.scaled(1.0 - fraction);
        *out.diagonals.entry(Pattern::vacuum(self.num_modes)).or_insert(0.0) += fraction;
        Ok(out)
    }

    /// Moves weight `trace` into a uniform diagonal two-photon block,
    /// scaling everything else by `1 - trace`.
    pub fn with_two_photon_contamination(&self, trace: f64) -> Result<StructuredState> {
        if !(0.0..=1.0).contains(&trace) {
            return Err(Error::InvalidParameter(format!("two-photon trace {trace} outside [0, 1]")));
        }
        let n = self.num_modes;
        let mut patterns = Vec::new();
        for i in 0..n {
            for j in i..n {
                patterns.push(Pattern::ones(n, &[i, j]));
            }
        }
        let share = trace / patterns.len() as f64;
        let mut out = self.scaled(1.0 - trace);
        for p in patterns {
            *out.diagonals.entry(p).or_insert(0.0) += share;
        }
        Ok(out)
    }

    /// Keeps a fraction `visibility` of every coherence; diagonals are
    /// untouched, so the result stays positive.
    pub fn with_dephasing(&self, visibility: f64) -> Result<StructuredState> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::InvalidParameter(format!("dephasing visibility {visibility} outside [0, 1]")));
        }
        let mut out = self.clone();
        for z in out.coherences.values_mut().chain(out.vacuum_coherences.values_mut()).chain(out.two_photon_coherences.values_mut()) {
            *z *= visibility;
        }
        Ok(out)
    }

    fn scaled(&self, factor: f64) -> StructuredState {
        StructuredState {
            num_modes: self.num_modes,
            diagonals: self.diagonals.iter().map(|(p, v)| (p.clone(), v * factor)).collect(),
            coherences: self.coherences.iter().map(|(k, z)| (*k, z * factor)).collect(),
            vacuum_coherences: self.vacuum_coherences.iter().map(|(k, z)| (*k, z * factor)).collect(),
            two_photon_coherences: self
                .two_photon_coherences
                .iter()
                .map(|(k, z)| (k.clone(), z * factor))
                .collect(),
        }
    }

    /// Pure W-type state as a structured model.
    pub fn from_w(spec: &WStateSpec) -> Result<StructuredState> {
        let amps = spec.amplitudes()?;
        let n = amps.len();
        let mut m = StructuredState::empty(n)?;
        m.diagonals.insert(Pattern::vacuum(n), 0.0);
        for i in 0..n {
            m.diagonals.insert(Pattern::single(n, i), amps[i] * amps[i]);
            for j in (i + 1)..n {
                m.coherences.insert((i, j), Complex64::new(amps[i] * amps[j], 0.0));
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StructuredStateDoc {
    num_modes: Option<usize>,
    diagonals: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    coherences: BTreeMap<String, [f64; 2]>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    vacuum_coherences: BTreeMap<String, [f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    two_photon_trace: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    two_photon_coherences: BTreeMap<String, [f64; 2]>,
}

fn parse_index(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidModel(format!("bad mode index {s:?}")))
}

fn split_key(key: &str) -> Result<(&str, &str)> {
    key.split_once(',')
        .ok_or_else(|| Error::InvalidModel(format!("key {key:?} is not of the form \"a,b\"")))
}

fn c64(v: [f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

impl TryFrom<StructuredStateDoc> for StructuredState {
    type Error = Error;

    fn try_from(doc: StructuredStateDoc) -> Result<Self> {
        let mut diagonals = BTreeMap::new();
        for (k, v) in doc.diagonals {
            diagonals.insert(k.parse::<Pattern>()?, v);
        }
        let num_modes = match (doc.num_modes, diagonals.keys().next()) {
            (Some(n), _) => n,
            (None, Some(p)) => p.num_modes(),
            (None, None) => return Err(Error::InvalidModel("no diagonals given".into())),
        };
        let mut m = StructuredState::empty(num_modes)?;
        m.diagonals = diagonals;
        for (k, v) in doc.coherences {
            let (a, b) = split_key(&k)?;
            m.set_coherence(parse_index(a)?, parse_index(b)?, c64(v))?;
        }
        for (k, v) in doc.vacuum_coherences {
            m.vacuum_coherences.insert(parse_index(&k)?, c64(v));
        }
        for (k, v) in doc.two_photon_coherences {
            let (a, b) = split_key(&k)?;
            let (p, q) = (a.trim().parse::<Pattern>()?, b.trim().parse::<Pattern>()?);
            if p < q {
                m.two_photon_coherences.insert((p, q), c64(v));
            } else {
                m.two_photon_coherences.insert((q, p), c64(v).conj());
            }
        }
        m.check_structure()?;
        if let Some(t) = doc.two_photon_trace {
            if (t - m.two_photon_trace()).abs() > MODEL_TOL {
                return Err(Error::InvalidModel(format!(
                    "two_photon_trace {t} disagrees with the listed diagonals ({})",
                    m.two_photon_trace()
                )));
            }
        }
        Ok(m)
    }
}

impl From<StructuredState> for StructuredStateDoc {
    fn from(m: StructuredState) -> Self {
        let trace = m.two_photon_trace();
        StructuredStateDoc {
            num_modes: Some(m.num_modes),
            diagonals: m.diagonals.iter().map(|(p, v)| (p.to_string(), *v)).collect(),
            coherences: m
                .coherences
                .iter()
                .map(|((i, j), z)| (format!("{i},{j}"), [z.re, z.im]))
                .collect(),
            vacuum_coherences: m
                .vacuum_coherences
                .iter()
                .map(|(i, z)| (i.to_string(), [z.re, z.im]))
                .collect(),
            two_photon_trace: (trace != 0.0).then_some(trace),
            two_photon_coherences: m
                .two_photon_coherences
                .iter()
                .map(|((p, q), z)| (format!("{p},{q}"), [z.re, z.im]))
                .collect(),
        }
    }
}

/// W-type state `Σ_i s_i w_i |0..1_i..0>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WStateSpec {
    pub signs: Vec<i8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl WStateSpec {
    pub fn uniform(signs: &[i8]) -> Self {
        WStateSpec { signs: signs.to_vec(), weights: None }
    }

    pub fn plus(num_modes: usize) -> Self {
        WStateSpec::uniform(&vec![1; num_modes])
    }

    /// `(|100> - |010> - |001>)/√3` generalized: first sign +, rest -.
    pub fn minus(num_modes: usize) -> Self {
        let mut signs = vec![-1; num_modes];
        signs[0] = 1;
        WStateSpec::uniform(&signs)
    }

    pub fn num_modes(&self) -> usize {
        self.signs.len()
    }

    /// Signed, normalized amplitudes.
    pub fn amplitudes(&self) -> Result<Vec<f64>> {
        let n = self.signs.len();
        if n == 0 {
            return Err(Error::EmptyModeSet);
        }
        if let Some(s) = self.signs.iter().find(|s| s.abs() != 1) {
            return Err(Error::InvalidModel(format!("sign {s} is not +1 or -1")));
        }
        let weights = match &self.weights {
            Some(w) if w.len() != n => return Err(Error::DimensionMismatch { expected: n, found: w.len() }),
            Some(w) => w.clone(),
            None => vec![1.0; n],
        };
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::NotNormalizable);
        }
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::NotNormalizable);
        }
        Ok(weights.iter().zip(&self.signs).map(|(w, &s)| s as f64 * w / norm).collect())
    }

    /// Single-photon amplitude vector as a complex column.
    pub fn single_photon_vector(&self) -> Result<CVector> {
        let amps = self.amplitudes()?;
        Ok(CVector::from_iterator(amps.len(), amps.iter().map(|&a| Complex64::new(a, 0.0))))
    }
}

pub fn make_w_state(spec: &WStateSpec, cutoff: usize) -> Result<StateVector> {
    let amps = spec.amplitudes()?;
    let n = amps.len();
    let space = FockSpace::new(n, cutoff)?;
    let mut v = CVector::zeros(space.dim());
    for (i, a) in amps.iter().enumerate() {
        v[Pattern::single(n, i).index_in(&space)?] = Complex64::new(*a, 0.0);
    }
    StateVector::new(space, v)
}
