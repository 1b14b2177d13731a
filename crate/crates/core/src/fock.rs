//! Dense linear algebra on truncated multimode bosonic Fock spaces.
//!
//! Every mode is truncated at the same `cutoff` (inclusive), so a space of
//! `N` modes has dimension `(cutoff + 1)^N`. Basis states are ordered with
//! mode 0 as the most significant digit: the photon number of the last mode
//! varies fastest, which is the order produced by Kronecker products. Golden
//! files depend on this order, so it must not change.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Tolerance used when validating Hermiticity and unitarity.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues above `-PSD_TOL` are treated as non-negative.
pub const PSD_TOL: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockSpace {
    num_modes: usize,
    cutoff: usize,
}

impl FockSpace {
    pub const DEFAULT_CUTOFF: usize = 3;

    pub fn new(num_modes: usize, cutoff: usize) -> Result<Self> {
        if num_modes == 0 {
            return Err(Error::EmptyModeSet);
        }
        if cutoff == 0 {
            return Err(Error::InvalidParameter("cutoff must be at least 1".into()));
        }
        let space = FockSpace { num_modes, cutoff };
        if space.levels().checked_pow(num_modes as u32).is_none() {
            return Err(Error::InvalidParameter(format!(
                "{num_modes} modes at cutoff {cutoff} overflow the index type"
            )));
        }
        Ok(space)
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Number of photon-number levels per mode, `cutoff + 1`.
    pub fn levels(&self) -> usize {
        self.cutoff + 1
    }

    pub fn dim(&self) -> usize {
        self.levels().pow(self.num_modes as u32)
    }

    /// Index step between neighbouring photon numbers of `mode`.
    pub fn stride(&self, mode: usize) -> usize {
        self.levels().pow((self.num_modes - 1 - mode) as u32)
    }

    pub fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.num_modes {
            Err(Error::ModeOutOfRange { index: mode, num_modes: self.num_modes })
        } else {
            Ok(())
        }
    }

    pub fn index_of(&self, occupation: &[usize]) -> Result<usize> {
        if occupation.len() != self.num_modes {
            return Err(Error::DimensionMismatch { expected: self.num_modes, found: occupation.len() });
        }
        let mut index = 0;
        for &n in occupation {
            if n > self.cutoff {
                return Err(Error::InvalidParameter(format!(
                    "occupation {n} exceeds cutoff {}",
                    self.cutoff
                )));
            }
            index = index * self.levels() + n;
        }
        Ok(index)
    }

    pub fn occupation(&self, index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.num_modes];
        let mut rest = index;
        for slot in occ.iter_mut().rev() {
            *slot = rest % self.levels();
            rest /= self.levels();
        }
        occ
    }

    pub fn photons(&self, index: usize, mode: usize) -> usize {
        (index / self.stride(mode)) % self.levels()
    }

    pub fn total_photons(&self, index: usize) -> usize {
        let mut rest = index;
        let mut total = 0;
        for _ in 0..self.num_modes {
            total += rest % self.levels();
            rest /= self.levels();
        }
        total
    }

    /// Space of `self`'s modes followed by `other`'s modes.
    pub fn join(&self, other: &FockSpace) -> Result<FockSpace> {
        if self.cutoff != other.cutoff {
            return Err(Error::CutoffMismatch(self.cutoff, other.cutoff));
        }
        FockSpace::new(self.num_modes + other.num_modes, self.cutoff)
    }
}

/// Index bookkeeping for operators acting on a subset of modes.
///
/// `offsets[l]` is the full-space offset of local basis state `l` (local
/// modes ordered as given, first one most significant) and `bases` lists
/// every full index whose occupation of the local modes is zero.
pub(crate) struct LocalLayout {
    pub offsets: Vec<usize>,
    pub bases: Vec<usize>,
}

impl LocalLayout {
    pub fn new(space: &FockSpace, modes: &[usize]) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::EmptyModeSet);
        }
        for (i, &m) in modes.iter().enumerate() {
            space.check_mode(m)?;
            if modes[..i].contains(&m) {
                return Err(Error::DuplicateMode(m));
            }
        }
        let levels = space.levels();
        let local_dim = levels.pow(modes.len() as u32);
        let offsets = (0..local_dim)
            .map(|l| {
                let mut rest = l;
                let mut offset = 0;
                for &m in modes.iter().rev() {
                    offset += (rest % levels) * space.stride(m);
                    rest /= levels;
                }
                offset
            })
            .collect();
        let bases = (0..space.dim())
            .filter(|&k| modes.iter().all(|&m| space.photons(k, m) == 0))
            .collect();
        Ok(LocalLayout { offsets, bases })
    }

    pub fn local_dim(&self) -> usize {
        self.offsets.len()
    }

    fn apply_to_slice(&self, op: &CMatrix, input: &[Complex64], output: &mut [Complex64]) {
        let n = self.local_dim();
        let mut local = vec![ZERO; n];
        for &base in &self.bases {
            for (l, slot) in local.iter_mut().enumerate() {
                *slot = input[base + self.offsets[l]];
            }
            if local.iter().all(|z| *z == ZERO) {
                continue;
            }
            for row in 0..n {
                let mut acc = ZERO;
                for (col, z) in local.iter().enumerate() {
                    acc += op[(row, col)] * z;
                }
                output[base + self.offsets[row]] = acc;
            }
        }
    }

    pub fn apply_to_vector(&self, op: &CMatrix, v: &CVector) -> CVector {
        let mut out = CVector::zeros(v.len());
        self.apply_to_slice(op, v.as_slice(), out.as_mut_slice());
        out
    }

    /// `op` applied to every column of `m`.
    pub fn apply_to_columns(&self, op: &CMatrix, m: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(m.nrows(), m.ncols());
        for c in 0..m.ncols() {
            let src = m.column(c);
            let mut dst = out.column_mut(c);
            self.apply_to_slice(op, src.as_slice(), dst.as_mut_slice());
        }
        out
    }

    pub fn embed(&self, op: &CMatrix, dim: usize) -> CMatrix {
        let mut full = CMatrix::zeros(dim, dim);
        for &base in &self.bases {
            for (r, &ro) in self.offsets.iter().enumerate() {
                for (c, &co) in self.offsets.iter().enumerate() {
                    full[(base + ro, base + co)] = op[(r, c)];
                }
            }
        }
        full
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: FockSpace,
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(space: FockSpace, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: amplitudes.len() });
        }
        Ok(StateVector { space, amplitudes })
    }

    pub fn vacuum(space: FockSpace) -> Self {
        let mut amplitudes = CVector::zeros(space.dim());
        amplitudes[0] = ONE;
        StateVector { space, amplitudes }
    }

    pub fn basis(space: FockSpace, occupation: &[usize]) -> Result<Self> {
        let mut amplitudes = CVector::zeros(space.dim());
        amplitudes[space.index_of(occupation)?] = ONE;
        Ok(StateVector { space, amplitudes })
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn amplitude(&self, occupation: &[usize]) -> Result<Complex64> {
        Ok(self.amplitudes[self.space.index_of(occupation)?])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm_sqr().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NotNormalizable);
        }
        Ok(StateVector { space: self.space, amplitudes: self.amplitudes.unscale(norm) })
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        self.check_same_space(other.space())?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator {
            space: self.space,
            matrix: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }

    pub fn apply(&self, op: &ModeOperator) -> Result<Self> {
        self.check_same_space(op.space())?;
        Ok(StateVector { space: self.space, amplitudes: &op.matrix * &self.amplitudes })
    }

    /// Applies a dense operator acting on the listed modes only.
    pub fn apply_local(&self, op: &CMatrix, modes: &[usize]) -> Result<Self> {
        let layout = LocalLayout::new(&self.space, modes)?;
        check_local_dim(op, layout.local_dim())?;
        Ok(StateVector { space: self.space, amplitudes: layout.apply_to_vector(op, &self.amplitudes) })
    }

    /// Truncated annihilation operator on `mode`.
    pub fn annihilate(&self, mode: usize) -> Result<Self> {
        self.space.check_mode(mode)?;
        let stride = self.space.stride(mode);
        let mut out = CVector::zeros(self.space.dim());
        for (k, z) in self.amplitudes.iter().enumerate() {
            let n = self.space.photons(k, mode);
            if n > 0 && *z != ZERO {
                out[k - stride] += z * (n as f64).sqrt();
            }
        }
        Ok(StateVector { space: self.space, amplitudes: out })
    }

    /// Truncated creation operator on `mode`; amplitude pushed past the
    /// cutoff is dropped.
    pub fn create(&self, mode: usize) -> Result<Self> {
        self.space.check_mode(mode)?;
        let stride = self.space.stride(mode);
        let mut out = CVector::zeros(self.space.dim());
        for (k, z) in self.amplitudes.iter().enumerate() {
            let n = self.space.photons(k, mode);
            if n < self.space.cutoff() && *z != ZERO {
                out[k + stride] += z * ((n + 1) as f64).sqrt();
            }
        }
        Ok(StateVector { space: self.space, amplitudes: out })
    }

    pub fn expectation(&self, op: &ModeOperator) -> Result<Complex64> {
        self.check_same_space(op.space())?;
        Ok(self.amplitudes.dotc(&(&op.matrix * &self.amplitudes)))
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        StateVector { space: self.space, amplitudes: self.amplitudes.scale_complex(factor) }
    }

    pub fn add(&self, other: &StateVector) -> Result<Self> {
        self.check_same_space(other.space())?;
        Ok(StateVector { space: self.space, amplitudes: &self.amplitudes + &other.amplitudes })
    }

    fn check_same_space(&self, other: &FockSpace) -> Result<()> {
        if self.space != *other {
            return Err(Error::DimensionMismatch { expected: self.space.dim(), found: other.dim() });
        }
        Ok(())
    }
}

trait ScaleComplex {
    fn scale_complex(&self, factor: Complex64) -> Self;
}

impl ScaleComplex for CVector {
    fn scale_complex(&self, factor: Complex64) -> Self {
        self.map(|z| z * factor)
    }
}

/// Complex Hermitian matrix on a truncated Fock space. Trace is not forced
/// to one: unnormalized blocks are legitimate values of this type.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    space: FockSpace,
    matrix: CMatrix,
}

impl DensityOperator {
    pub fn new(space: FockSpace, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: matrix.nrows() });
        }
        let op = DensityOperator { space, matrix };
        let residual = op.hermiticity_residual();
        if residual > HERMITIAN_TOL {
            return Err(Error::InvalidModel(format!("matrix is not Hermitian (residual {residual:e})")));
        }
        Ok(op)
    }

    pub fn vacuum(space: FockSpace) -> Self {
        StateVector::vacuum(space).to_density()
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn element(&self, row: &[usize], col: &[usize]) -> Result<Complex64> {
        Ok(self.matrix[(self.space.index_of(row)?, self.space.index_of(col)?)])
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.trace() - 1.0).abs() <= tol
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -PSD_TOL
    }

    pub fn scale(&self, factor: f64) -> Self {
        DensityOperator { space: self.space, matrix: self.matrix.map(|z| z * factor) }
    }

    pub fn add(&self, other: &DensityOperator) -> Result<Self> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch { expected: self.space.dim(), found: other.space.dim() });
        }
        Ok(DensityOperator { space: self.space, matrix: &self.matrix + &other.matrix })
    }

    /// `Tr[O ρ]`.
    pub fn expectation(&self, op: &ModeOperator) -> Result<Complex64> {
        if self.space != *op.space() {
            return Err(Error::DimensionMismatch { expected: self.space.dim(), found: op.space().dim() });
        }
        let n = self.space.dim();
        let mut acc = ZERO;
        for i in 0..n {
            for k in 0..n {
                acc += op.matrix[(i, k)] * self.matrix[(k, i)];
            }
        }
        Ok(acc)
    }

    /// `U ρ U†` for an operator on the full space.
    pub fn conjugate_by(&self, op: &ModeOperator) -> Result<Self> {
        if self.space != *op.space() {
            return Err(Error::DimensionMismatch { expected: self.space.dim(), found: op.space().dim() });
        }
        Ok(DensityOperator { space: self.space, matrix: &op.matrix * &self.matrix * op.matrix.adjoint() })
    }

    /// `U ρ U†` for a dense operator acting on the listed modes only.
    pub fn conjugate_local(&self, op: &CMatrix, modes: &[usize]) -> Result<Self> {
        let layout = LocalLayout::new(&self.space, modes)?;
        check_local_dim(op, layout.local_dim())?;
        let left = layout.apply_to_columns(op, &self.matrix);
        let both = layout.apply_to_columns(op, &left.adjoint()).adjoint();
        Ok(DensityOperator { space: self.space, matrix: both })
    }

    pub fn tensor(&self, other: &DensityOperator) -> Result<Self> {
        let space = self.space.join(&other.space)?;
        Ok(DensityOperator { space, matrix: self.matrix.kronecker(&other.matrix) })
    }

    /// Reduces to the modes in `keep`; the result lists them in ascending order.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::EmptyModeSet);
        }
        let mut kept = keep.to_vec();
        kept.sort_unstable();
        for w in kept.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateMode(w[0]));
            }
        }
        for &m in &kept {
            self.space.check_mode(m)?;
        }
        let traced: Vec<usize> = (0..self.space.num_modes()).filter(|m| !kept.contains(m)).collect();
        let out_space = FockSpace::new(kept.len(), self.space.cutoff())?;
        let levels = self.space.levels();
        let rest_dim = levels.pow(traced.len() as u32);

        // groups[r] lists (kept index, full index) for rest configuration r
        let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::new(); rest_dim];
        for k in 0..self.space.dim() {
            let a = kept.iter().fold(0, |acc, &m| acc * levels + self.space.photons(k, m));
            let r = traced.iter().fold(0, |acc, &m| acc * levels + self.space.photons(k, m));
            groups[r].push((a, k));
        }
        let mut out = CMatrix::zeros(out_space.dim(), out_space.dim());
        for group in &groups {
            for &(a, ka) in group {
                for &(b, kb) in group {
                    out[(a, b)] += self.matrix[(ka, kb)];
                }
            }
        }
        Ok(DensityOperator { space: out_space, matrix: out })
    }

    /// Re-embeds the operator in a space with a different cutoff. Shrinking
    /// fails if any weight sits above the new cutoff.
    pub fn with_cutoff(&self, cutoff: usize) -> Result<Self> {
        let target = FockSpace::new(self.space.num_modes(), cutoff)?;
        let map: Vec<Option<usize>> = (0..self.space.dim())
            .map(|k| {
                let occ = self.space.occupation(k);
                target.index_of(&occ).ok()
            })
            .collect();
        let mut out = CMatrix::zeros(target.dim(), target.dim());
        for (i, mi) in map.iter().enumerate() {
            for (j, mj) in map.iter().enumerate() {
                let z = self.matrix[(i, j)];
                match (mi, mj) {
                    (Some(a), Some(b)) => out[(*a, *b)] = z,
                    _ if z != ZERO => {
                        return Err(Error::InvalidParameter(format!(
                            "state has weight above cutoff {cutoff}"
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(DensityOperator { space: target, matrix: out })
    }

    /// Photon loss on one mode: beamsplitter coupling to a vacuum ancilla
    /// followed by tracing the ancilla out.
    pub fn apply_loss(&self, mode: usize, transmittance: f64) -> Result<Self> {
        check_transmittance(transmittance)?;
        self.space.check_mode(mode)?;
        let ancilla = DensityOperator::vacuum(FockSpace::new(1, self.space.cutoff())?);
        let extended = self.tensor(&ancilla)?;
        let anc = self.space.num_modes();
        let u = two_mode_beamsplitter(self.space.cutoff(), transmittance)?;
        let mixed = extended.conjugate_local(&u, &[mode, anc])?;
        let keep: Vec<usize> = (0..anc).collect();
        mixed.partial_trace(&keep)
    }
}

pub(crate) fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let sym = (m + m.adjoint()).map(|z| z * 0.5);
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

fn check_local_dim(op: &CMatrix, local_dim: usize) -> Result<()> {
    if op.nrows() != local_dim || op.ncols() != local_dim {
        return Err(Error::DimensionMismatch { expected: local_dim, found: op.nrows() });
    }
    Ok(())
}

fn check_transmittance(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Transmittance(t));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Annihilation,
    Number,
    Unitary,
    PovmElement,
    General,
}

/// Dense operator on a full Fock space, tagged with the property it is
/// guaranteed to have.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOperator {
    space: FockSpace,
    matrix: CMatrix,
    kind: OperatorKind,
}

impl ModeOperator {
    pub fn general(space: FockSpace, matrix: CMatrix) -> Result<Self> {
        check_local_dim(&matrix, space.dim())?;
        Ok(ModeOperator { space, matrix, kind: OperatorKind::General })
    }

    pub fn identity(space: FockSpace) -> Self {
        ModeOperator { space, matrix: CMatrix::identity(space.dim(), space.dim()), kind: OperatorKind::Unitary }
    }

    pub fn annihilation(space: FockSpace, mode: usize) -> Result<Self> {
        space.check_mode(mode)?;
        let mut m = CMatrix::zeros(space.dim(), space.dim());
        let stride = space.stride(mode);
        for k in 0..space.dim() {
            let n = space.photons(k, mode);
            if n > 0 {
                m[(k - stride, k)] = Complex64::new((n as f64).sqrt(), 0.0);
            }
        }
        Ok(ModeOperator { space, matrix: m, kind: OperatorKind::Annihilation })
    }

    pub fn number(space: FockSpace, mode: usize) -> Result<Self> {
        space.check_mode(mode)?;
        let diag = CVector::from_iterator(
            space.dim(),
            (0..space.dim()).map(|k| Complex64::new(space.photons(k, mode) as f64, 0.0)),
        );
        Ok(ModeOperator { space, matrix: CMatrix::from_diagonal(&diag), kind: OperatorKind::Number })
    }

    /// Threshold-detector click element `I - (1 - η)^N` on one mode.
    pub fn click_povm(space: FockSpace, mode: usize, efficiency: f64) -> Result<Self> {
        space.check_mode(mode)?;
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::InvalidParameter(format!("efficiency {efficiency} outside [0, 1]")));
        }
        let diag = CVector::from_iterator(
            space.dim(),
            (0..space.dim()).map(|k| {
                let n = space.photons(k, mode) as i32;
                Complex64::new(1.0 - (1.0 - efficiency).powi(n), 0.0)
            }),
        );
        Ok(ModeOperator { space, matrix: CMatrix::from_diagonal(&diag), kind: OperatorKind::PovmElement })
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn adjoint(&self) -> Self {
        let kind = match self.kind {
            OperatorKind::Annihilation => OperatorKind::General,
            k => k,
        };
        ModeOperator { space: self.space, matrix: self.matrix.adjoint(), kind }
    }

    /// Operator product `self * other`.
    pub fn compose(&self, other: &ModeOperator) -> Result<Self> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch { expected: self.space.dim(), found: other.space.dim() });
        }
        let kind = match (self.kind, other.kind) {
            (OperatorKind::Unitary, OperatorKind::Unitary) => OperatorKind::Unitary,
            _ => OperatorKind::General,
        };
        Ok(ModeOperator { space: self.space, matrix: &self.matrix * &other.matrix, kind })
    }

    /// Largest entry of `U†U - I`.
    pub fn unitarity_residual(&self) -> f64 {
        let n = self.space.dim();
        let prod = self.matrix.adjoint() * &self.matrix;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((prod[(i, j)] - target).norm());
            }
        }
        worst
    }
}

/// Beamsplitter matrix on a two-mode space with the given cutoff.
///
/// Output annihilation operators are `b1 = √t·a1 + √(1-t)·a2` and
/// `b2 = √(1-t)·a1 - √t·a2`. Photon-number blocks with total `n ≤ cutoff`
/// are mapped exactly; basis states above that are left unchanged so the
/// matrix stays unitary.
pub fn two_mode_beamsplitter(cutoff: usize, transmittance: f64) -> Result<CMatrix> {
    check_transmittance(transmittance)?;
    let levels = cutoff + 1;
    let dim = levels * levels;
    let st = transmittance.sqrt();
    let sr = (1.0 - transmittance).sqrt();
    let fact = factorials(2 * cutoff);
    let mut u = CMatrix::zeros(dim, dim);
    for m in 0..levels {
        for n in 0..levels {
            let col = m * levels + n;
            let total = m + n;
            if total > cutoff {
                u[(col, col)] = ONE;
                continue;
            }
            // (st·x + sr·y)^m (sr·x - st·y)^n with x = b1†, y = b2†
            let mut coeffs = vec![0.0; total + 1];
            for a in 0..=m {
                let ca = binomial(m, a) * st.powi(a as i32) * sr.powi((m - a) as i32);
                for b in 0..=n {
                    let cb = binomial(n, b) * sr.powi(b as i32) * (-st).powi((n - b) as i32);
                    coeffs[a + b] += ca * cb;
                }
            }
            let norm_in = (fact[m] * fact[n]).sqrt();
            for (k, c) in coeffs.iter().enumerate() {
                if *c == 0.0 {
                    continue;
                }
                let row = k * levels + (total - k);
                let amp = c * (fact[k] * fact[total - k]).sqrt() / norm_in;
                u[(row, col)] = Complex64::new(amp, 0.0);
            }
        }
    }
    Ok(u)
}

/// Beamsplitter between two modes of `space`, embedded as a full-space unitary.
pub fn beamsplitter_unitary(space: FockSpace, modes: (usize, usize), transmittance: f64) -> Result<ModeOperator> {
    if modes.0 == modes.1 {
        return Err(Error::DuplicateMode(modes.0));
    }
    let local = two_mode_beamsplitter(space.cutoff(), transmittance)?;
    let layout = LocalLayout::new(&space, &[modes.0, modes.1])?;
    Ok(ModeOperator { space, matrix: layout.embed(&local, space.dim()), kind: OperatorKind::Unitary })
}

/// Single-mode coherent state truncated at `cutoff` and renormalized.
pub fn coherent_state(amplitude: Complex64, cutoff: usize) -> Result<StateVector> {
    let space = FockSpace::new(1, cutoff)?;
    let mut amps = CVector::zeros(cutoff + 1);
    let mut term = Complex64::new((-amplitude.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..=cutoff {
        amps[n] = term;
        term = term * amplitude / ((n + 1) as f64).sqrt();
    }
    StateVector::new(space, amps)?.normalized()
}

/// Probability mass a Poisson distribution of the given mean puts above `cutoff`.
pub fn poisson_tail(mean: f64, cutoff: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let mut log_term = -mean + (cutoff + 1) as f64 * mean.ln() - ln_factorial(cutoff + 1);
    let mut tail = 0.0;
    for n in (cutoff + 1)..(cutoff + 400) {
        let term = log_term.exp();
        tail += term;
        if term < tail * 1e-18 {
            break;
        }
        log_term += mean.ln() - ((n + 1) as f64).ln();
    }
    tail
}

/// Smallest cutoff whose Poisson tail for `mean` is at most `limit`.
pub fn cutoff_for_tail(mean: f64, limit: f64) -> usize {
    let mut c = 1;
    while poisson_tail(mean, c) > limit {
        c += 1;
    }
    c
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub(crate) fn factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 1.0;
    out.push(acc);
    for k in 1..=n {
        acc *= k as f64;
        out.push(acc);
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Product of two states on the concatenated mode list.
pub trait Tensor: Sized {
    fn tensor(&self, other: &Self) -> Result<Self>;
}

impl Tensor for StateVector {
    fn tensor(&self, other: &Self) -> Result<Self> {
        let space = self.space.join(&other.space)?;
        let amps = self.amplitudes.kronecker(&other.amplitudes);
        StateVector::new(space, amps)
    }
}

impl Tensor for DensityOperator {
    fn tensor(&self, other: &Self) -> Result<Self> {
        DensityOperator::tensor(self, other)
    }
}

pub fn tensor<T: Tensor>(a: &T, b: &T) -> Result<T> {
    a.tensor(b)
}

pub fn partial_trace(state: &DensityOperator, keep: &[usize]) -> Result<DensityOperator> {
    state.partial_trace(keep)
}

pub fn apply_loss(state: &DensityOperator, mode: usize, transmittance: f64) -> Result<DensityOperator> {
    state.apply_loss(mode, transmittance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn basis_order_last_mode_fastest() {
        let s = FockSpace::new(3, 2).unwrap();
        assert_eq!(s.dim(), 27);
        assert_eq!(s.index_of(&[0, 0, 1]).unwrap(), 1);
        assert_eq!(s.index_of(&[1, 0, 0]).unwrap(), 9);
        assert_eq!(s.occupation(14), vec![1, 1, 2]);
        assert_eq!(s.total_photons(14), 4);
    }

    #[test]
    fn vacuum_tensor_vacuum() {
        let one = FockSpace::new(1, 3).unwrap();
        let v = StateVector::vacuum(one).tensor(&StateVector::vacuum(one)).unwrap();
        assert_eq!(v, StateVector::basis(FockSpace::new(2, 3).unwrap(), &[0, 0]).unwrap());
    }

    #[test]
    fn tensor_rejects_cutoff_mismatch() {
        let a = StateVector::vacuum(FockSpace::new(1, 3).unwrap());
        let b = StateVector::vacuum(FockSpace::new(1, 4).unwrap());
        assert!(matches!(a.tensor(&b), Err(Error::CutoffMismatch(3, 4))));
    }

    #[test]
    fn tensor_with_coherent_state_poisson_weight() {
        let space = FockSpace::new(2, 4).unwrap();
        let rho = StateVector::basis(space, &[1, 0]).unwrap().to_density();
        let lo = coherent_state(c(0.1), 4).unwrap().to_density();
        let joint = rho.tensor(&lo).unwrap();
        let entry = joint.element(&[1, 0, 0], &[1, 0, 0]).unwrap().re;
        // renormalization over the truncation moves the value by < 1e-12
        assert_abs_diff_eq!(entry, (-0.01f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn beamsplitter_single_photon_and_vacuum() {
        let space = FockSpace::new(2, 3).unwrap();
        let u = beamsplitter_unitary(space, (0, 1), 0.5).unwrap();
        let vac = StateVector::vacuum(space).apply(&u).unwrap();
        assert_abs_diff_eq!(vac.amplitude(&[0, 0]).unwrap().re, 1.0, epsilon = 1e-15);

        let out = StateVector::basis(space, &[1, 0]).unwrap().apply(&u).unwrap();
        let h = 0.5f64.sqrt();
        assert_abs_diff_eq!(out.amplitude(&[1, 0]).unwrap().re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(out.amplitude(&[0, 1]).unwrap().re, h, epsilon = 1e-15);
    }

    #[test]
    fn beamsplitter_two_photon_bunching_sign() {
        let space = FockSpace::new(2, 3).unwrap();
        let u = beamsplitter_unitary(space, (0, 1), 0.5).unwrap();
        let out = StateVector::basis(space, &[1, 1]).unwrap().apply(&u).unwrap();
        let h = 0.5f64.sqrt();
        assert_abs_diff_eq!(out.amplitude(&[2, 0]).unwrap().re, h, epsilon = 1e-14);
        assert_abs_diff_eq!(out.amplitude(&[0, 2]).unwrap().re, -h, epsilon = 1e-14);
        assert_abs_diff_eq!(out.amplitude(&[1, 1]).unwrap().norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn beamsplitter_is_unitary_and_rejects_bad_transmittance() {
        let space = FockSpace::new(3, 3).unwrap();
        for t in [0.0, 0.2, 0.5, 1.0] {
            let u = beamsplitter_unitary(space, (0, 2), t).unwrap();
            assert!(u.unitarity_residual() < 1e-10, "t = {t}");
        }
        assert!(matches!(beamsplitter_unitary(space, (0, 1), 1.5), Err(Error::Transmittance(_))));
        assert!(matches!(beamsplitter_unitary(space, (1, 1), 0.5), Err(Error::DuplicateMode(1))));
    }

    #[test]
    fn coherent_state_vacuum_and_mean() {
        let v = coherent_state(c(0.0), 4).unwrap();
        assert_eq!(v, StateVector::vacuum(FockSpace::new(1, 4).unwrap()));

        let alpha = Complex64::from_polar(0.3, 0.4);
        let s = coherent_state(alpha, 5).unwrap();
        let n = ModeOperator::number(*s.space(), 0).unwrap();
        assert_abs_diff_eq!(s.expectation(&n).unwrap().re, 0.09, epsilon = 1e-8);
    }

    #[test]
    fn coherent_state_norm_deficit_matches_tail() {
        // unnormalized truncated amplitudes miss exactly the Poisson tail
        let alpha: f64 = 0.2;
        let deficit: f64 = (5..40)
            .map(|n| (-alpha * alpha).exp() * alpha.powi(2 * n) / factorials(n as usize)[n as usize])
            .sum();
        assert!(deficit <= 1e-9);
        assert_abs_diff_eq!(poisson_tail(alpha * alpha, 4), deficit, epsilon = 1e-20);
    }

    #[test]
    fn coherent_state_rejects_zero_cutoff() {
        assert!(coherent_state(c(0.1), 0).is_err());
    }

    #[test]
    fn loss_limits() {
        let space = FockSpace::new(1, 3).unwrap();
        let one = StateVector::basis(space, &[1]).unwrap().to_density();
        let same = one.apply_loss(0, 1.0).unwrap();
        assert!((same.matrix() - one.matrix()).norm() < 1e-14);

        let gone = one.apply_loss(0, 0.0).unwrap();
        assert_abs_diff_eq!(gone.element(&[0], &[0]).unwrap().re, 1.0, epsilon = 1e-14);

        let part = one.apply_loss(0, 0.4).unwrap();
        assert_abs_diff_eq!(part.element(&[1], &[1]).unwrap().re, 0.4, epsilon = 1e-14);
        assert_abs_diff_eq!(part.element(&[0], &[0]).unwrap().re, 0.6, epsilon = 1e-14);
        assert!(one.apply_loss(0, -0.1).is_err());
    }

    #[test]
    fn partial_trace_errors() {
        let rho = DensityOperator::vacuum(FockSpace::new(2, 2).unwrap());
        assert!(matches!(rho.partial_trace(&[]), Err(Error::EmptyModeSet)));
        assert!(matches!(rho.partial_trace(&[2]), Err(Error::ModeOutOfRange { .. })));
        assert!(matches!(rho.partial_trace(&[1, 1]), Err(Error::DuplicateMode(1))));
    }

    #[test]
    fn click_povm_diagonal() {
        let space = FockSpace::new(1, 3).unwrap();
        let e = ModeOperator::click_povm(space, 0, 0.5).unwrap();
        let d: Vec<f64> = e.matrix().diagonal().iter().map(|z| z.re).collect();
        assert_eq!(d, vec![0.0, 0.5, 0.75, 0.875]);
    }

    #[test]
    fn annihilate_and_create_are_adjoint_on_support() {
        let space = FockSpace::new(2, 3).unwrap();
        let v = StateVector::basis(space, &[2, 1]).unwrap();
        let lowered = v.annihilate(0).unwrap();
        assert_abs_diff_eq!(lowered.amplitude(&[1, 1]).unwrap().re, 2f64.sqrt(), epsilon = 1e-15);
        let raised = lowered.create(0).unwrap();
        assert_abs_diff_eq!(raised.amplitude(&[2, 1]).unwrap().re, 2.0, epsilon = 1e-15);
    }
}
