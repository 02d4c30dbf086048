//! Dense qudit algebra over GF(d): Heisenberg-Weyl operators, the
//! complementary (MUB) basis, qudit Bell states and parity-check measurement
//! channels, plus the numerical checks of the commuting argument and the
//! character-sum lemmas it rests on.
//!
//! Multi-qudit basis states are indexed big-endian: the string
//! `[z_0, .., z_{N-1}]` sits at `sum z_i d^(N-1-i)`.
//!
//! Phases use `gamma_p = exp(2 pi i / p)` with the exponent read as the
//! integer value of the field element, so `gamma_p^a gamma_p^b = gamma_p^(a+b)`
//! under the canonical field addition.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::galois::{DitString, Fe, FieldSpec, GaloisError};

/// Largest Hilbert-space dimension `d^N` handled here.
pub const MAX_DIM: usize = 4096;

/// Normalization tolerance for states and completeness checks.
pub const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuditError {
    #[error(transparent)]
    Galois(#[from] GaloisError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("register of dimension {0} exceeds the supported {max}", max = MAX_DIM)]
    TooLarge(usize),
    #[error("state norm {0} differs from 1")]
    NotNormalized(f64),
    #[error("ensemble weights sum to {0}, not 1")]
    BadWeights(f64),
    #[error("lemma variant must be 1, 2 or 3 (got {0})")]
    BadVariant(u8),
}

fn register_dim(field: &FieldSpec, n: usize) -> Result<usize, QuditError> {
    let d = field.order() as usize;
    let mut dim = 1usize;
    for _ in 0..n {
        dim = dim.saturating_mul(d);
        if dim > MAX_DIM {
            return Err(QuditError::TooLarge(dim));
        }
    }
    Ok(dim)
}

/// Pure state of `N` qudits.
#[derive(Debug, Clone)]
pub struct StateVector {
    amps: DVector<Complex64>,
    field: Arc<FieldSpec>,
    n: usize,
}

impl StateVector {
    /// Wraps amplitudes that are already normalized.
    pub fn from_amplitudes(
        field: &Arc<FieldSpec>,
        n: usize,
        amps: Vec<Complex64>,
    ) -> Result<Self, QuditError> {
        let dim = register_dim(field, n)?;
        if amps.len() != dim {
            return Err(QuditError::DimensionMismatch {
                expected: dim,
                found: amps.len(),
            });
        }
        let amps = DVector::from_vec(amps);
        let norm = amps.norm();
        if (norm * norm - 1.0).abs() > NORM_TOL {
            return Err(QuditError::NotNormalized(norm));
        }
        Ok(StateVector {
            amps,
            field: Arc::clone(field),
            n,
        })
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(
        field: &Arc<FieldSpec>,
        n: usize,
        amps: Vec<Complex64>,
    ) -> Result<Self, QuditError> {
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(QuditError::NotNormalized(0.0));
        }
        Self::from_amplitudes(field, n, amps.into_iter().map(|a| a / norm).collect())
    }

    /// Computational basis state `|z>`.
    pub fn basis(z: &DitString) -> Result<Self, QuditError> {
        let dim = register_dim(z.field(), z.len())?;
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[z.index()] = Complex64::new(1.0, 0.0);
        Self::from_amplitudes(z.field(), z.len(), amps)
    }

    /// Gaussian-random (unitarily invariant) pure state.
    pub fn random<R: Rng + ?Sized>(
        field: &Arc<FieldSpec>,
        n: usize,
        rng: &mut R,
    ) -> Result<Self, QuditError> {
        let dim = register_dim(field, n)?;
        let amps = (0..dim)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::normalized(field, n, amps)
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amps
    }

    pub fn field(&self) -> &Arc<FieldSpec> {
        &self.field
    }

    pub fn num_qudits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.dotc(&other.amps)
    }

    pub fn tensor(&self, other: &StateVector) -> Result<StateVector, QuditError> {
        if self.field != other.field {
            return Err(GaloisError::FieldMismatch(self.field.order(), other.field.order()).into());
        }
        let amps = self.amps.kronecker(&other.amps);
        Self::normalized(
            &self.field,
            self.n + other.n,
            amps.iter().copied().collect(),
        )
    }

    pub fn density(&self) -> DMatrix<Complex64> {
        &self.amps * self.amps.adjoint()
    }
}

/// Weighted pure-state ensemble representing a mixed state.
#[derive(Debug, Clone)]
pub struct Ensemble {
    components: Vec<(f64, StateVector)>,
}

impl Ensemble {
    pub fn new(components: Vec<(f64, StateVector)>) -> Result<Self, QuditError> {
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > NORM_TOL || components.iter().any(|(w, _)| *w < 0.0) {
            return Err(QuditError::BadWeights(total));
        }
        if let Some((_, first)) = components.first() {
            for (_, s) in &components {
                if s.dim() != first.dim() {
                    return Err(QuditError::DimensionMismatch {
                        expected: first.dim(),
                        found: s.dim(),
                    });
                }
            }
        }
        Ok(Ensemble { components })
    }

    pub fn pure(state: StateVector) -> Self {
        Ensemble {
            components: vec![(1.0, state)],
        }
    }

    pub fn components(&self) -> &[(f64, StateVector)] {
        &self.components
    }

    pub fn density(&self) -> DMatrix<Complex64> {
        let dim = self.components[0].1.dim();
        self.components
            .iter()
            .fold(DMatrix::zeros(dim, dim), |acc, (w, s)| {
                acc + s.density() * Complex64::new(*w, 0.0)
            })
    }
}

impl From<StateVector> for Ensemble {
    fn from(state: StateVector) -> Self {
        Ensemble::pure(state)
    }
}

/// Dense operator on `N` qudits.
#[derive(Debug, Clone)]
pub struct Operator {
    matrix: DMatrix<Complex64>,
    field: Arc<FieldSpec>,
    n: usize,
}

impl Operator {
    pub fn from_matrix(
        field: &Arc<FieldSpec>,
        n: usize,
        matrix: DMatrix<Complex64>,
    ) -> Result<Self, QuditError> {
        let dim = register_dim(field, n)?;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(QuditError::DimensionMismatch {
                expected: dim,
                found: matrix.nrows(),
            });
        }
        Ok(Operator {
            matrix,
            field: Arc::clone(field),
            n,
        })
    }

    pub fn identity(field: &Arc<FieldSpec>, n: usize) -> Result<Self, QuditError> {
        let dim = register_dim(field, n)?;
        Self::from_matrix(field, n, DMatrix::identity(dim, dim))
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn num_qudits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            matrix: self.matrix.adjoint(),
            field: Arc::clone(&self.field),
            n: self.n,
        }
    }

    pub fn compose(&self, rhs: &Operator) -> Result<Operator, QuditError> {
        self.same_shape(rhs)?;
        Ok(Operator {
            matrix: &self.matrix * &rhs.matrix,
            field: Arc::clone(&self.field),
            n: self.n,
        })
    }

    pub fn kron(&self, rhs: &Operator) -> Result<Operator, QuditError> {
        if self.field != rhs.field {
            return Err(GaloisError::FieldMismatch(self.field.order(), rhs.field.order()).into());
        }
        Operator::from_matrix(
            &self.field,
            self.n + rhs.n,
            self.matrix.kronecker(&rhs.matrix),
        )
    }

    pub fn apply(&self, state: &StateVector) -> Result<DVector<Complex64>, QuditError> {
        if state.dim() != self.dim() {
            return Err(QuditError::DimensionMismatch {
                expected: self.dim(),
                found: state.dim(),
            });
        }
        Ok(&self.matrix * &state.amps)
    }

    /// `<psi| self |psi>`.
    pub fn expectation(&self, state: &StateVector) -> Result<Complex64, QuditError> {
        Ok(state.amps.dotc(&self.apply(state)?))
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// Largest entrywise modulus of `self - rhs`.
    pub fn max_deviation(&self, rhs: &Operator) -> f64 {
        (&self.matrix - &rhs.matrix)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    fn same_shape(&self, rhs: &Operator) -> Result<(), QuditError> {
        if self.dim() != rhs.dim() {
            return Err(QuditError::DimensionMismatch {
                expected: self.dim(),
                found: rhs.dim(),
            });
        }
        Ok(())
    }
}

/// Generalized Pauli `Z = sum_l gamma_p^l |l><l|`.
pub fn pauli_z(field: &Arc<FieldSpec>) -> Operator {
    weyl_raw(field, 0, 1)
}

/// Generalized Pauli `X = sum_l |l (+) 1><l|` with the canonical field addition.
pub fn pauli_x(field: &Arc<FieldSpec>) -> Operator {
    weyl_raw(field, 1, 0)
}

/// `W(u, v) = sum_l |l (+) u> gamma_p^(l v) <l|`.
pub fn weyl(u: &Fe, v: &Fe) -> Result<Operator, QuditError> {
    if u.field() != v.field() {
        return Err(GaloisError::FieldMismatch(u.field().order(), v.field().order()).into());
    }
    Ok(weyl_raw(u.field(), u.value(), v.value()))
}

fn weyl_raw(field: &Arc<FieldSpec>, u: u32, v: u32) -> Operator {
    let d = field.order() as usize;
    let mut m = DMatrix::zeros(d, d);
    for l in 0..field.order() {
        let row = field.add_raw(l, u) as usize;
        m[(row, l as usize)] = field.phase_raw(field.mul_raw(l, v));
    }
    Operator {
        matrix: m,
        field: Arc::clone(field),
        n: 1,
    }
}

/// Single-qudit MUB matrix: column `l` holds `|l~> = d^(-1/2) sum_j gamma_p^(-l j) |j>`.
fn mub_matrix(field: &FieldSpec) -> DMatrix<Complex64> {
    let d = field.order() as usize;
    let s = 1.0 / (d as f64).sqrt();
    DMatrix::from_fn(d, d, |j, l| {
        field.phase_raw(field.mul_raw(l as u32, j as u32)).conj() * s
    })
}

/// Complementary-basis ket `|l~>`.
pub fn mub_ket(l: &Fe) -> StateVector {
    let field = l.field();
    let col = mub_matrix(field).column(l.value() as usize).into_owned();
    StateVector {
        amps: col,
        field: Arc::clone(field),
        n: 1,
    }
}

/// Tensor product of complementary-basis kets `|x~> = |x_0~> .. |x_{N-1}~>`.
pub fn mub_string_ket(x: &DitString) -> Result<StateVector, QuditError> {
    let field = x.field();
    register_dim(field, x.len())?;
    let f1 = mub_matrix(field);
    let mut amps = DVector::from_element(1, Complex64::new(1.0, 0.0));
    for &xi in x.digits() {
        amps = amps.kronecker(&f1.column(xi as usize).into_owned());
    }
    Ok(StateVector {
        amps,
        field: Arc::clone(field),
        n: x.len(),
    })
}

/// Qudit Bell state `|Phi_{u,v}> = d^(-1/2) sum_l gamma_p^(l v) |l> |l (+) u>`.
pub fn bell_state(u: &Fe, v: &Fe) -> Result<StateVector, QuditError> {
    if u.field() != v.field() {
        return Err(GaloisError::FieldMismatch(u.field().order(), v.field().order()).into());
    }
    let f = u.field();
    let d = f.order() as usize;
    let s = 1.0 / (d as f64).sqrt();
    let mut amps = vec![Complex64::new(0.0, 0.0); d * d];
    for l in 0..f.order() {
        let b = f.add_raw(l, u.value()) as usize;
        amps[l as usize * d + b] = f.phase_raw(f.mul_raw(l, v.value())) * s;
    }
    StateVector::from_amplitudes(f, 2, amps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Z,
    X,
}

/// `P_l(v)`: projector onto strings with parity `z . v = l`, in the chosen basis.
pub fn parity_projector(l: &Fe, v: &DitString, basis: Basis) -> Result<Operator, QuditError> {
    if l.field() != v.field() {
        return Err(GaloisError::FieldMismatch(l.field().order(), v.field().order()).into());
    }
    let field = v.field();
    let n = v.len();
    let dim = register_dim(field, n)?;
    let mask: Vec<bool> = (0..dim)
        .map(|i| {
            let z = DitString::from_index(field, n, i);
            field.dot_raw(z.digits(), v.digits()) == l.value()
        })
        .collect();
    let diag = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j && mask[i] {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let matrix = match basis {
        Basis::Z => diag,
        Basis::X => {
            let f = tensor_power(&mub_matrix(field), n);
            &f * diag * f.adjoint()
        }
    };
    Operator::from_matrix(field, n, matrix)
}

fn tensor_power(m: &DMatrix<Complex64>, n: usize) -> DMatrix<Complex64> {
    (0..n).fold(DMatrix::identity(1, 1), |acc, _| acc.kronecker(m))
}

/// A projective measurement with outcomes labelled `0..d-1`.
#[derive(Debug, Clone)]
pub struct MeasurementChannel {
    projectors: Vec<Operator>,
}

impl MeasurementChannel {
    /// Validates Hermiticity, idempotence, orthogonality and completeness.
    pub fn new(projectors: Vec<Operator>) -> Result<Self, QuditError> {
        let dim = projectors.first().map(Operator::dim).unwrap_or(0);
        let mut sum = DMatrix::<Complex64>::zeros(dim, dim);
        for (i, p) in projectors.iter().enumerate() {
            p.same_shape(&projectors[0])?;
            let m = p.matrix();
            let herm = (m - m.adjoint())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            let idem = (m * m - m).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if herm > NORM_TOL || idem > NORM_TOL {
                return Err(QuditError::NotNormalized(herm.max(idem)));
            }
            for q in &projectors[i + 1..] {
                let overlap = (m * q.matrix())
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                if overlap > NORM_TOL {
                    return Err(QuditError::NotNormalized(overlap));
                }
            }
            sum += m;
        }
        let complete = (sum - DMatrix::identity(dim, dim))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if complete > NORM_TOL {
            return Err(QuditError::NotNormalized(complete));
        }
        Ok(MeasurementChannel { projectors })
    }

    /// `M_Z(v)` or `M_X(v)`.
    pub fn parity(v: &DitString, basis: Basis) -> Result<Self, QuditError> {
        let projectors = v
            .field()
            .elements()
            .iter()
            .map(|l| parity_projector(l, v, basis))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(projectors)
    }

    pub fn projectors(&self) -> &[Operator] {
        &self.projectors
    }

    pub fn dim(&self) -> usize {
        self.projectors[0].dim()
    }

    fn check_dim(&self, dim: usize) -> Result<(), QuditError> {
        if dim != self.dim() {
            return Err(QuditError::DimensionMismatch {
                expected: self.dim(),
                found: dim,
            });
        }
        Ok(())
    }

    /// Outcome probabilities `p_l = sum_i w_i <psi_i| P_l |psi_i>`.
    pub fn stats(&self, state: &Ensemble) -> Result<Vec<f64>, QuditError> {
        let mut probs = vec![0.0; self.projectors.len()];
        for (w, psi) in state.components() {
            self.check_dim(psi.dim())?;
            for (p, proj) in probs.iter_mut().zip(&self.projectors) {
                *p += w * proj.apply(psi)?.norm_squared();
            }
        }
        Ok(probs)
    }

    /// Outcome probabilities `p_l = tr(P_l rho)` from a density matrix.
    pub fn stats_density(&self, rho: &DMatrix<Complex64>) -> Result<Vec<f64>, QuditError> {
        self.check_dim(rho.nrows())?;
        Ok(self
            .projectors
            .iter()
            .map(|p| (p.matrix() * rho).trace().re)
            .collect())
    }

    /// Post-measurement ensemble: each component splits into its normalized
    /// projections, weighted by their probabilities.
    pub fn apply(&self, state: &Ensemble) -> Result<Ensemble, QuditError> {
        let mut out = Vec::new();
        for (w, psi) in state.components() {
            self.check_dim(psi.dim())?;
            for proj in &self.projectors {
                let v = proj.apply(psi)?;
                let p = v.norm_squared();
                if p > 1e-300 {
                    out.push((
                        w * p,
                        StateVector {
                            amps: v / Complex64::new(p.sqrt(), 0.0),
                            field: Arc::clone(&psi.field),
                            n: psi.n,
                        },
                    ));
                }
            }
        }
        let total: f64 = out.iter().map(|(w, _)| w).sum();
        for (w, _) in &mut out {
            *w /= total;
        }
        Ensemble::new(out)
    }

    /// `sum_l P_l rho P_l`.
    pub fn apply_density(
        &self,
        rho: &DMatrix<Complex64>,
    ) -> Result<DMatrix<Complex64>, QuditError> {
        self.check_dim(rho.nrows())?;
        let dim = self.dim();
        Ok(self
            .projectors
            .iter()
            .fold(DMatrix::zeros(dim, dim), |acc, p| {
                acc + p.matrix() * rho * p.matrix()
            }))
    }
}

pub fn measure_stats(
    channel: &MeasurementChannel,
    state: &Ensemble,
) -> Result<Vec<f64>, QuditError> {
    channel.stats(state)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest change in `M_Z(a)` statistics caused by a prior `M_X(b)`.
///
/// Zero (up to rounding) whenever `a . b = 0`; the dense channel route is
/// used here, see [`CommutingKernel`] for the fast exhaustive variant.
pub fn verify_commuting(a: &DitString, b: &DitString, state: &Ensemble) -> Result<f64, QuditError> {
    a.dot(b)?;
    let mz = MeasurementChannel::parity(a, Basis::Z)?;
    let mx = MeasurementChannel::parity(b, Basis::X)?;
    let direct = mz.stats(state)?;
    let after = mz.stats(&mx.apply(state)?)?;
    Ok(max_abs_diff(&direct, &after))
}

/// Fast evaluator of the commuting-argument statistics for a fixed register.
///
/// Works on pure states with the per-qudit complementary-basis transform
/// applied axis by axis, so one pair costs `O(N d^(N+1))` instead of a dense
/// `d^(2N)` product.
pub struct CommutingKernel {
    field: Arc<FieldSpec>,
    n: usize,
    dim: usize,
    f1: Vec<Complex64>,
    strings: Vec<Vec<u32>>,
}

impl CommutingKernel {
    pub fn new(field: &Arc<FieldSpec>, n: usize) -> Result<Self, QuditError> {
        let dim = register_dim(field, n)?;
        let f1 = mub_matrix(field).transpose().iter().copied().collect();
        let strings = (0..dim)
            .map(|i| DitString::from_index(field, n, i).digits().to_vec())
            .collect();
        Ok(CommutingKernel {
            field: Arc::clone(field),
            n,
            dim,
            f1,
            strings,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Applies the single-qudit matrix (row-major, `m[r*d + c]`) to every axis.
    fn transform(&self, psi: &mut [Complex64], adjoint: bool) {
        let d = self.field.order() as usize;
        let mut scratch = vec![Complex64::new(0.0, 0.0); d];
        let mut stride = 1;
        for _ in 0..self.n {
            let block = stride * d;
            for base in (0..self.dim).step_by(block) {
                for off in 0..stride {
                    for (c, s) in scratch.iter_mut().enumerate() {
                        *s = psi[base + off + c * stride];
                    }
                    for r in 0..d {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (c, s) in scratch.iter().enumerate() {
                            let m = if adjoint {
                                self.f1[c * d + r].conj()
                            } else {
                                self.f1[r * d + c]
                            };
                            acc += m * s;
                        }
                        psi[base + off + r * stride] = acc;
                    }
                }
            }
            stride = block;
        }
    }

    /// Complementary-basis amplitudes `<x~|psi>`.
    pub fn to_x_basis(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = psi.to_vec();
        self.transform(&mut out, true);
        out
    }

    /// Branches `P~_j(b) |psi>` for `j = 0..d-1`, given `<x~|psi>`.
    pub fn x_branches(&self, psi_x: &[Complex64], b: &[u32]) -> Vec<Vec<Complex64>> {
        let d = self.field.order() as usize;
        let mut branches = vec![vec![Complex64::new(0.0, 0.0); self.dim]; d];
        for (x, amp) in psi_x.iter().enumerate() {
            let j = self.field.dot_raw(&self.strings[x], b) as usize;
            branches[j][x] = *amp;
        }
        for br in &mut branches {
            self.transform(br, false);
        }
        branches
    }

    /// `M_Z(a)` statistics of a (possibly unnormalized) set of branches.
    pub fn z_stats(&self, branches: &[Vec<Complex64>], a: &[u32]) -> Vec<f64> {
        let d = self.field.order() as usize;
        let mut probs = vec![0.0; d];
        for br in branches {
            for (z, amp) in br.iter().enumerate() {
                probs[self.field.dot_raw(&self.strings[z], a) as usize] += amp.norm_sqr();
            }
        }
        probs
    }

    /// Deviation between `M_Z(a)` statistics with and without a prior `M_X(b)`.
    pub fn deviation(&self, psi: &[Complex64], a: &[u32], b: &[u32]) -> f64 {
        let direct = self.z_stats(&[psi.to_vec()], a);
        let branches = self.x_branches(&self.to_x_basis(psi), b);
        max_abs_diff(&direct, &self.z_stats(&branches, a))
    }

    /// Table of `a . z` for every pair of register indices, row-major.
    fn dot_table(&self) -> Vec<u16> {
        dot_table(&self.field, &self.strings)
    }

    /// Worst deviation over every pair `(a, b)` with `a . b = 0` and every state.
    ///
    /// Only the difference of the two Z-basis distributions matters, so each
    /// `b` costs one pass per orthogonal `a` over a precomputed dot table.
    pub fn exhaustive_orthogonal(&self, states: &[StateVector]) -> f64 {
        let d = self.field.order() as usize;
        let dim = self.dim;
        let dots = self.dot_table();
        states
            .par_iter()
            .map(|psi| {
                let amps: Vec<Complex64> = psi.amplitudes().iter().copied().collect();
                let psi_x = self.to_x_basis(&amps);
                let mut worst: f64 = 0.0;
                let mut sums = vec![0.0; d];
                for b in 0..dim {
                    let branches = self.x_branches(&psi_x, &self.strings[b]);
                    let diff: Vec<f64> = (0..dim)
                        .map(|z| {
                            branches.iter().map(|br| br[z].norm_sqr()).sum::<f64>()
                                - amps[z].norm_sqr()
                        })
                        .collect();
                    let row_b = &dots[b * dim..(b + 1) * dim];
                    for a in (0..dim).filter(|&a| row_b[a] == 0) {
                        sums.iter_mut().for_each(|s| *s = 0.0);
                        let row_a = &dots[a * dim..(a + 1) * dim];
                        for (z, &l) in row_a.iter().enumerate() {
                            sums[l as usize] += diff[z];
                        }
                        worst = sums.iter().fold(worst, |w, s| w.max(s.abs()));
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }
}

fn dot_table(field: &FieldSpec, strings: &[Vec<u32>]) -> Vec<u16> {
    let dim = strings.len();
    let mut out = vec![0u16; dim * dim];
    out.par_chunks_mut(dim.max(1))
        .enumerate()
        .for_each(|(a, row)| {
            for (z, v) in row.iter_mut().enumerate() {
                *v = field.dot_raw(&strings[a], &strings[z]) as u16;
            }
        });
    out
}

/// Worst absolute deviation of the character-sum lemmas from their closed
/// forms, by exhaustive enumeration over `GF(d)^N`.
///
/// Normalizations (suppressed in the usual statement) are restored:
/// 1. `d^-N sum_z gamma^(z.x) = [x = 0]`
/// 2. `d^-(N-1) sum_{z.a = l} gamma^(z.x) = [x = 0]` whenever `x` vanishes at
///    some position where `a` does not
/// 3. `d^-(N-1) sum_{z.a = l} gamma^(z.x) = gamma^(x0 l)` if `x = x0 a`, else 0
///
/// Variants 2 and 3 range over all nonzero `a` and all `l`.
pub fn verify_lemma_sums(field: &Arc<FieldSpec>, n: usize, variant: u8) -> Result<f64, QuditError> {
    if !(1..=3).contains(&variant) {
        return Err(QuditError::BadVariant(variant));
    }
    let dim = register_dim(field, n)?;
    let d = field.order() as usize;
    let strings: Vec<Vec<u32>> = (0..dim)
        .map(|i| DitString::from_index(field, n, i).digits().to_vec())
        .collect();
    let phases: Vec<Complex64> = (0..field.order()).map(|a| field.phase_raw(a)).collect();
    let dots = dot_table(field, &strings);
    let row = |i: usize| &dots[i * dim..(i + 1) * dim];
    let mut worst: f64 = 0.0;

    if variant == 1 {
        for (xi, x) in strings.iter().enumerate() {
            let sum: Complex64 = row(xi).iter().map(|&v| phases[v as usize]).sum();
            let expected = if x.iter().all(|&v| v == 0) { 1.0 } else { 0.0 };
            worst = worst.max((sum / dim as f64 - expected).norm());
        }
        return Ok(worst);
    }

    let norm = (dim / d) as f64;
    let zero = Complex64::new(0.0, 0.0);
    for (ai, a) in strings
        .iter()
        .enumerate()
        .filter(|(_, a)| a.iter().any(|&v| v != 0))
    {
        let parity = row(ai);
        for (xi, x) in strings.iter().enumerate() {
            let x_is_zero = x.iter().all(|&v| v == 0);
            let expected: Box<dyn Fn(u32) -> Complex64> = if variant == 2 {
                let admissible = a.iter().zip(x).any(|(&ai, &xi)| ai != 0 && xi == 0);
                if !admissible {
                    continue;
                }
                let v = if x_is_zero {
                    Complex64::new(1.0, 0.0)
                } else {
                    zero
                };
                Box::new(move |_| v)
            } else {
                let multiple = (0..field.order())
                    .find(|&c| a.iter().zip(x).all(|(&ai, &xi)| field.mul_raw(c, ai) == xi));
                match multiple {
                    Some(x0) => Box::new(move |l| field.phase_raw(field.mul_raw(x0, l))),
                    None => Box::new(move |_| zero),
                }
            };
            let mut sums = vec![zero; d];
            for (&l, &v) in parity.iter().zip(row(xi)) {
                sums[l as usize] += phases[v as usize];
            }
            for (l, s) in sums.iter().enumerate() {
                worst = worst.max((s / norm - expected(l as u32)).norm());
            }
        }
    }
    Ok(worst)
}
