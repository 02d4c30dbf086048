//! Two optical modes in a truncated Fock space, and the symmetric encoding
//! that couples them to the qudits A' and B'.
//!
//! Two-mode states keep every `|n_a, n_b>` with `n_a + n_b <= n_max`, ordered
//! by total photon number: `(n_a, n_b)` sits at `n (n + 1) / 2 + n_a` with
//! `n = n_a + n_b`. Misalignment `delta` is a relative phase on mode B.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::galois::FieldSpec;
use crate::qudit::mub_ket;

/// Default photon-number cutoff.
pub const DEFAULT_N_MAX: usize = 12;

/// Largest truncation tail a coherent ket may drop.
pub const COHERENT_TAIL_BOUND: f64 = 1e-6;

/// Largest relative tail a pseudo-Fock state may drop.
pub const PSEUDO_FOCK_TAIL_BOUND: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("truncation tail {tail:e} exceeds {bound:e} at n_max = {n_max}")]
    Truncation { tail: f64, bound: f64, n_max: usize },
    #[error("photon number {k} exceeds the cutoff {n_max}")]
    PhotonNumber { k: usize, n_max: usize },
    #[error("cutoff mismatch: {0} vs {1}")]
    CutoffMismatch(usize, usize),
    #[error("pseudo-Fock index {k} must be below the slice count {slices}")]
    SliceIndex { k: usize, slices: usize },
    #[error("intensity must be non-negative and finite (got {0})")]
    Intensity(f64),
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
    #[error("the rotation encoding is only compatible with prime dimensions (got {0})")]
    CompositeDimension(u32),
    #[error("mixture weights must be non-negative")]
    NegativeWeight,
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Poisson probability `e^-mu mu^n / n!`.
pub fn poisson(mu: f64, n: usize) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (-mu + n as f64 * mu.ln() - ln_factorial(n)).exp()
}

/// `P_D^mu(k) = sum_n P_mu(nD + k)`, the weight of the k-th pseudo-Fock state.
pub fn pseudo_fock_weight(mu: f64, slices: usize, k: usize) -> f64 {
    let mut total = 0.0;
    let mut m = k;
    loop {
        let p = poisson(mu, m);
        total += p;
        if m > mu as usize + 1 && p < total * 1e-18 {
            break;
        }
        m += slices;
    }
    total
}

/// Number of two-mode basis states up to total photon number `n_max`.
pub fn fock_dim(n_max: usize) -> usize {
    (n_max + 1) * (n_max + 2) / 2
}

pub fn fock_index(n_a: usize, n_b: usize) -> usize {
    let n = n_a + n_b;
    n * (n + 1) / 2 + n_a
}

/// `(n_a, n_b)` for every basis index, in order.
pub fn fock_labels(n_max: usize) -> Vec<(usize, usize)> {
    (0..=n_max)
        .flat_map(|n| (0..=n).map(move |na| (na, n - na)))
        .collect()
}

/// Truncated single-mode ket.
#[derive(Debug, Clone)]
pub struct ModeKet {
    amps: Vec<Complex64>,
    tail: f64,
}

impl ModeKet {
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// Probability mass dropped by the truncation.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn n_max(&self) -> usize {
        self.amps.len() - 1
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(n, a)| n as f64 * a.norm_sqr())
            .sum()
    }
}

/// Coherent ket `e^(-|alpha|^2/2) sum_n alpha^n / sqrt(n!) |n>` for `n <= n_max`.
pub fn coherent_ket(alpha: Complex64, n_max: usize) -> Result<ModeKet, EncodingError> {
    if n_max == 0 {
        return Err(EncodingError::ZeroCutoff);
    }
    let mut amps = Vec::with_capacity(n_max + 1);
    let mut c = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..=n_max {
        if n > 0 {
            c = c * alpha / (n as f64).sqrt();
        }
        amps.push(c);
    }
    let kept: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let tail = (1.0 - kept).max(0.0);
    if tail > COHERENT_TAIL_BOUND {
        return Err(EncodingError::Truncation {
            tail,
            bound: COHERENT_TAIL_BOUND,
            n_max,
        });
    }
    Ok(ModeKet { amps, tail })
}

/// Phase rotation `U = sum_n e^(i 2 pi n / d) |n><n|` on one mode.
#[derive(Debug, Clone)]
pub struct ModeRotation {
    d: u32,
    diag: Vec<Complex64>,
}

impl ModeRotation {
    pub fn dimension(&self) -> u32 {
        self.d
    }

    pub fn n_max(&self) -> usize {
        self.diag.len() - 1
    }

    pub fn diagonal(&self) -> &[Complex64] {
        &self.diag
    }

    /// `U^j`.
    pub fn power(&self, j: u32) -> ModeRotation {
        let d = self.d as f64;
        ModeRotation {
            d: self.d,
            diag: (0..self.diag.len())
                .map(|n| {
                    Complex64::from_polar(
                        1.0,
                        2.0 * PI * ((n as u64 * j as u64) % self.d as u64) as f64 / d,
                    )
                })
                .collect(),
        }
    }

    pub fn matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.diag.clone()))
    }

    pub fn apply(&self, ket: &ModeKet) -> Result<ModeKet, EncodingError> {
        if ket.n_max() != self.n_max() {
            return Err(EncodingError::CutoffMismatch(ket.n_max(), self.n_max()));
        }
        Ok(ModeKet {
            amps: ket
                .amps
                .iter()
                .zip(&self.diag)
                .map(|(a, u)| a * u)
                .collect(),
            tail: ket.tail,
        })
    }
}

pub fn rotation_u(field: &FieldSpec, n_max: usize) -> ModeRotation {
    let d = field.order();
    let base = ModeRotation {
        d,
        diag: vec![Complex64::new(1.0, 0.0); n_max + 1],
    };
    base.power(1)
}

/// Truncated state of the two optical modes A and B.
#[derive(Debug, Clone)]
pub struct FockState {
    amps: DVector<Complex64>,
    n_max: usize,
    tail: f64,
}

impl FockState {
    pub fn from_fn(n_max: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let amps = DVector::from_iterator(
            fock_dim(n_max),
            fock_labels(n_max).into_iter().map(|(a, b)| f(a, b)),
        );
        let tail = (1.0 - amps.norm_squared()).max(0.0);
        FockState { amps, n_max, tail }
    }

    pub fn vacuum(n_max: usize) -> Self {
        Self::from_fn(n_max, |a, b| {
            Complex64::new(if a + b == 0 { 1.0 } else { 0.0 }, 0.0)
        })
    }

    /// Product of two single-mode kets, restricted to total photon number `<= n_max`.
    pub fn product(a: &ModeKet, b: &ModeKet) -> Result<Self, EncodingError> {
        if a.n_max() != b.n_max() {
            return Err(EncodingError::CutoffMismatch(a.n_max(), b.n_max()));
        }
        Ok(Self::from_fn(a.n_max(), |na, nb| a.amps[na] * b.amps[nb]))
    }

    /// `|sqrt(mu/2) e^(i phi)>_A |sqrt(mu/2) e^(i (phi + delta))>_B`.
    pub fn coherent_pair(
        mu: f64,
        phi: f64,
        delta: f64,
        n_max: usize,
    ) -> Result<Self, EncodingError> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(EncodingError::Intensity(mu));
        }
        let r = (mu / 2.0).sqrt();
        let a = coherent_ket(Complex64::from_polar(r, phi), n_max)?;
        let b = coherent_ket(Complex64::from_polar(r, phi + delta), n_max)?;
        Self::product(&a, &b)
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amps
    }

    pub fn amplitude(&self, n_a: usize, n_b: usize) -> Complex64 {
        if n_a + n_b > self.n_max {
            Complex64::new(0.0, 0.0)
        } else {
            self.amps[fock_index(n_a, n_b)]
        }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `1 - ||psi||^2`, the mass lost to truncation.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.norm_squared()
    }

    pub fn inner(&self, other: &FockState) -> Complex64 {
        self.amps.dotc(&other.amps)
    }

    /// `(U^ja (x) U^jb) |psi>`.
    pub fn rotate(&self, rot: &ModeRotation, ja: u32, jb: u32) -> Result<FockState, EncodingError> {
        if rot.n_max() != self.n_max {
            return Err(EncodingError::CutoffMismatch(self.n_max, rot.n_max()));
        }
        let ua = rot.power(ja);
        let ub = rot.power(jb);
        let labels = fock_labels(self.n_max);
        Ok(FockState {
            amps: DVector::from_iterator(
                self.amps.len(),
                self.amps
                    .iter()
                    .zip(&labels)
                    .map(|(a, &(na, nb))| a * ua.diag[na] * ub.diag[nb]),
            ),
            n_max: self.n_max,
            tail: self.tail,
        })
    }

    pub fn density(&self) -> DMatrix<Complex64> {
        &self.amps * self.amps.adjoint()
    }
}

/// `sum_i w_i |psi_i><psi_i|`.
pub fn mixture_density(
    components: &[(f64, FockState)],
) -> Result<DMatrix<Complex64>, EncodingError> {
    let n_max = components.first().map(|(_, s)| s.n_max).unwrap_or(0);
    let dim = fock_dim(n_max);
    let mut rho = DMatrix::zeros(dim, dim);
    for (w, s) in components {
        if *w < 0.0 {
            return Err(EncodingError::NegativeWeight);
        }
        if s.n_max != n_max {
            return Err(EncodingError::CutoffMismatch(n_max, s.n_max));
        }
        rho += s.density() * Complex64::new(*w, 0.0);
    }
    Ok(rho)
}

/// `|k^delta> = (a^+ + e^(i delta) b^+)^k / sqrt(2^k k!) |00>`.
pub fn k_photon_symmetric(k: usize, delta: f64, n_max: usize) -> Result<FockState, EncodingError> {
    if n_max == 0 {
        return Err(EncodingError::ZeroCutoff);
    }
    if k > n_max {
        return Err(EncodingError::PhotonNumber { k, n_max });
    }
    // C(k,m) sqrt(m!(k-m)!) / sqrt(2^k k!) = sqrt(C(k,m) / 2^k)
    let ln_binom = |m: usize| ln_factorial(k) - ln_factorial(m) - ln_factorial(k - m);
    Ok(FockState::from_fn(n_max, |na, nb| {
        if na + nb != k {
            return Complex64::new(0.0, 0.0);
        }
        let mag = (0.5 * (ln_binom(na) - k as f64 * 2f64.ln())).exp();
        Complex64::from_polar(mag, delta * nb as f64)
    }))
}

/// k-th pseudo-Fock state of `D`-slice phase randomization,
/// `e^(-mu/2) / sqrt(P_D(k)) sum_n mu^((nD+k)/2) / sqrt((nD+k)!) |nD+k^delta>`.
pub fn pseudo_fock(
    k: usize,
    delta: f64,
    mu: f64,
    slices: usize,
    n_max: usize,
) -> Result<FockState, EncodingError> {
    if k >= slices {
        return Err(EncodingError::SliceIndex { k, slices });
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(EncodingError::Intensity(mu));
    }
    if k > n_max {
        return Err(EncodingError::PhotonNumber { k, n_max });
    }
    let weight = pseudo_fock_weight(mu, slices, k);
    let mut amps = DVector::zeros(fock_dim(n_max));
    let mut kept = 0.0;
    let mut m = k;
    while m <= n_max {
        let p = poisson(mu, m);
        kept += p;
        amps +=
            k_photon_symmetric(m, delta, n_max)?.amps * Complex64::new((p / weight).sqrt(), 0.0);
        m += slices;
    }
    let tail = if weight > 0.0 {
        (1.0 - kept / weight).max(0.0)
    } else {
        0.0
    };
    if tail > PSEUDO_FOCK_TAIL_BOUND {
        return Err(EncodingError::Truncation {
            tail,
            bound: PSEUDO_FOCK_TAIL_BOUND,
            n_max,
        });
    }
    Ok(FockState { amps, n_max, tail })
}

/// `(1/M) sum_j` of coherent pairs with common phase `2 pi j / M`.
pub fn phase_averaged_pair(
    mu: f64,
    delta: f64,
    slices: usize,
    n_max: usize,
) -> Result<DMatrix<Complex64>, EncodingError> {
    let w = 1.0 / slices as f64;
    let comps = (0..slices)
        .map(|j| {
            let phi = 2.0 * PI * j as f64 / slices as f64;
            FockState::coherent_pair(mu, phi, delta, n_max).map(|s| (w, s))
        })
        .collect::<Result<Vec<_>, _>>()?;
    mixture_density(&comps)
}

/// `sum_{k <= n_max} P_mu(k) |k^delta><k^delta|`.
pub fn poisson_mixture(
    mu: f64,
    delta: f64,
    n_max: usize,
) -> Result<Vec<(f64, FockState)>, EncodingError> {
    (0..=n_max)
        .map(|k| k_photon_symmetric(k, delta, n_max).map(|s| (poisson(mu, k), s)))
        .collect()
}

/// `sum_{k < D} P_D(k) |lambda_k^delta><lambda_k^delta|`, truncated at `n_max`.
pub fn pseudo_fock_mixture(
    mu: f64,
    delta: f64,
    slices: usize,
    n_max: usize,
) -> Result<Vec<(f64, FockState)>, EncodingError> {
    (0..slices.min(n_max + 1))
        .map(|k| {
            pseudo_fock(k, delta, mu, slices, n_max).map(|s| (pseudo_fock_weight(mu, slices, k), s))
        })
        .collect()
}

/// `(1/2) ||rho - sigma||_1` for Hermitian inputs.
pub fn trace_distance(rho: &DMatrix<Complex64>, sigma: &DMatrix<Complex64>) -> f64 {
    let diff = rho - sigma;
    let herm = (&diff + diff.adjoint()) * Complex64::new(0.5, 0.0);
    herm.symmetric_eigenvalues()
        .iter()
        .map(|e| e.abs())
        .sum::<f64>()
        / 2.0
}

/// `|Psi>_{A'B'AB}` after both controlled rotations.
///
/// Rows index the qudit pair `j d + k` (A' then B'), columns the Fock basis.
#[derive(Debug, Clone)]
pub struct JointEncodedState {
    amps: DMatrix<Complex64>,
    field: Arc<FieldSpec>,
    n_max: usize,
    tail: f64,
}

impl JointEncodedState {
    pub fn amplitudes(&self) -> &DMatrix<Complex64> {
        &self.amps
    }

    pub fn amplitude(&self, j: u32, k: u32, n_a: usize, n_b: usize) -> Complex64 {
        let d = self.field.order() as usize;
        self.amps[(j as usize * d + k as usize, fock_index(n_a, n_b))]
    }

    pub fn field(&self) -> &Arc<FieldSpec> {
        &self.field
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.norm_squared()
    }

    /// Reduced state of A'B' (`d^2 x d^2`), tracing out the optical modes.
    pub fn qudit_density(&self) -> DMatrix<Complex64> {
        &self.amps * self.amps.adjoint()
    }
}

/// Prepares `|+>|+>` on A'B' and applies `C_{A'A}(U)`, `C_{B'B}(U)`.
pub fn entangled_encode(input: &FockState, field: &Arc<FieldSpec>) -> JointEncodedState {
    let d = field.order() as usize;
    let rot = rotation_u(field, input.n_max);
    let labels = fock_labels(input.n_max);
    let scale = 1.0 / d as f64;
    let mut amps = DMatrix::zeros(d * d, labels.len());
    for j in 0..d {
        let uj = rot.power(j as u32);
        for k in 0..d {
            let uk = rot.power(k as u32);
            for (f, &(na, nb)) in labels.iter().enumerate() {
                amps[(j * d + k, f)] = input.amps[f] * uj.diag[na] * uk.diag[nb] * scale;
            }
        }
    }
    JointEncodedState {
        amps,
        field: Arc::clone(field),
        n_max: input.n_max,
        tail: input.tail,
    }
}

/// Distribution of `l_a (+) l_b` when A' and B' are measured in the
/// complementary basis.
///
/// Outcome `l` is recorded when a qudit is projected onto `|(-l)~>`, the
/// eigenvector of `X` with eigenvalue `gamma^(-l)`. With this labelling a
/// k-photon symmetric input yields the point mass at `k mod d`.
pub fn x_correlation(state: &JointEncodedState) -> Result<Vec<f64>, EncodingError> {
    x_correlation_mixture(&[(1.0, state.clone())])
}

/// [`x_correlation`] for a weighted ensemble of encoded states.
pub fn x_correlation_mixture(
    components: &[(f64, JointEncodedState)],
) -> Result<Vec<f64>, EncodingError> {
    let Some((_, first)) = components.first() else {
        return Ok(Vec::new());
    };
    let field = &first.field;
    if field.degree() > 1 {
        return Err(EncodingError::CompositeDimension(field.order()));
    }
    let d = field.order() as usize;
    // rows of `bra` are <(-l)~| for l = 0..d-1
    let bra = DMatrix::from_fn(d, d, |l, j| {
        let ket = mub_ket(&field.elem(l as u32).expect("in range").neg());
        ket.amplitudes()[j].conj()
    });
    let bra2 = bra.kronecker(&bra);
    let mut dist = vec![0.0; d];
    for (w, s) in components {
        if *w < 0.0 {
            return Err(EncodingError::NegativeWeight);
        }
        if s.field.order() != field.order() {
            return Err(EncodingError::CutoffMismatch(d, s.field.order() as usize));
        }
        let projected = &bra2 * &s.amps;
        for la in 0..d {
            for lb in 0..d {
                let p: f64 = projected
                    .row(la * d + lb)
                    .iter()
                    .map(|a| a.norm_sqr())
                    .sum();
                dist[field.add_raw(la as u32, lb as u32) as usize] += w * p;
            }
        }
    }
    Ok(dist)
}

/// Result of checking the x-correlation point mass for one k-photon input.
#[derive(Debug, Clone)]
pub struct PointMassCheck {
    pub distribution: Vec<f64>,
    /// Largest deviation from the point mass at `k mod d`.
    pub deviation: f64,
    pub tail: f64,
}

/// Encodes `|k^delta>` and measures the x-correlation.
pub fn observation_point_mass(
    k: usize,
    delta: f64,
    field: &Arc<FieldSpec>,
    n_max: usize,
) -> Result<PointMassCheck, EncodingError> {
    let input = k_photon_symmetric(k, delta, n_max)?;
    let dist = x_correlation(&entangled_encode(&input, field))?;
    let target = k % field.order() as usize;
    let deviation = dist
        .iter()
        .enumerate()
        .map(|(l, p)| (p - if l == target { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    Ok(PointMassCheck {
        distribution: dist,
        deviation,
        tail: input.tail(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qudit::bell_state;

    fn gf(d: u32) -> Arc<FieldSpec> {
        FieldSpec::new(d).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn fock_indexing() {
        let labels = fock_labels(4);
        assert_eq!(labels.len(), fock_dim(4));
        for (i, &(a, b)) in labels.iter().enumerate() {
            assert_eq!(fock_index(a, b), i);
        }
    }

    #[test]
    fn rotation_examples() {
        let u = rotation_u(&gf(2), 5);
        for (n, z) in u.diagonal().iter().enumerate() {
            let e = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert!((z - c(e, 0.)).norm() < 1e-12);
        }
        for d in [2, 3, 5, 7] {
            let u = rotation_u(&gf(d), 12);
            let ud = u.matrix().pow(d);
            assert!((ud - DMatrix::identity(13, 13)).norm() < 1e-12);
        }
    }

    #[test]
    fn rotation_rotates_coherent_states() {
        for d in [2, 3, 5] {
            let u = rotation_u(&gf(d), 12);
            let alpha = Complex64::from_polar(0.4, 0.3);
            let rotated = u.apply(&coherent_ket(alpha, 12).unwrap()).unwrap();
            let target =
                coherent_ket(alpha * Complex64::from_polar(1.0, 2.0 * PI / d as f64), 12).unwrap();
            for (a, b) in rotated.amplitudes().iter().zip(target.amplitudes()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn coherent_examples() {
        let vac = coherent_ket(c(0., 0.), 12).unwrap();
        assert!((vac.amplitudes()[0] - c(1., 0.)).norm() < 1e-15);
        assert_eq!(vac.tail(), 0.0);

        let k = coherent_ket(c(0.1f64.sqrt(), 0.), 12).unwrap();
        // Poisson tail beyond 12 at mean 0.1
        let oracle: f64 = (13..40).map(|n| poisson(0.1, n)).sum();
        assert!(oracle < 1e-12);
        assert!(k.tail() < 1e-12);
        assert!((k.mean_photon_number() - 0.1).abs() < 1e-12);

        assert!(matches!(
            coherent_ket(c(3.0, 0.), 4),
            Err(EncodingError::Truncation { .. })
        ));
    }

    #[test]
    fn k_photon_examples() {
        let s0 = k_photon_symmetric(0, 0.7, 6).unwrap();
        assert!((s0.amplitude(0, 0) - c(1., 0.)).norm() < 1e-15);

        let s1 = k_photon_symmetric(1, 0.0, 6).unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert!((s1.amplitude(1, 0) - c(r, 0.)).norm() < 1e-15);
        assert!((s1.amplitude(0, 1) - c(r, 0.)).norm() < 1e-15);

        for k in 0..=8 {
            let s = k_photon_symmetric(k, 1.3, 8).unwrap();
            assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }
        assert_eq!(
            k_photon_symmetric(7, 0.0, 6).unwrap_err(),
            EncodingError::PhotonNumber { k: 7, n_max: 6 }
        );
    }

    #[test]
    fn k_photon_expansion_matches_binomial_oracle() {
        // expand (a^+ + e^{i delta} b^+)^k term by term with factorial weights
        let delta = 0.9;
        for k in 0..=6 {
            let s = k_photon_symmetric(k, delta, 6).unwrap();
            let norm = (2f64.powi(k as i32) * ln_factorial(k).exp()).sqrt();
            for m in 0..=k {
                let binom = (ln_factorial(k) - ln_factorial(m) - ln_factorial(k - m)).exp();
                let creation = (ln_factorial(m) + ln_factorial(k - m)).exp().sqrt();
                let expected =
                    Complex64::from_polar(binom * creation / norm, delta * (k - m) as f64);
                assert!((s.amplitude(m, k - m) - expected).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_states_are_rotation_eigenstates() {
        for d in 2..=7u32 {
            let Ok(f) = FieldSpec::new(d) else { continue };
            let rot = rotation_u(&f, 8);
            for k in 0..=6 {
                let s = k_photon_symmetric(k, 0.4, 8).unwrap();
                let rotated = s.rotate(&rot, 1, 1).unwrap();
                let phase = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / d as f64);
                assert!((rotated.amplitudes() - s.amplitudes() * phase).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn pseudo_fock_properties() {
        let p = pseudo_fock(1, 0.3, 0.1, 16, 12).unwrap();
        let fock = k_photon_symmetric(1, 0.3, 12).unwrap();
        let overlap = p.inner(&fock).norm_sqr();
        assert!(1.0 - overlap < 1e-10);

        let vac = pseudo_fock(0, 0.0, 1e-12, 8, 12).unwrap();
        assert!((vac.amplitude(0, 0).norm() - 1.0).abs() < 1e-10);

        for d in [2u32, 3, 5] {
            let rot = rotation_u(&gf(d), 12);
            for k in 0..d as usize {
                let s = pseudo_fock(k, 1.1, 0.3, d as usize * 2, 12).unwrap();
                let rotated = s.rotate(&rot, 1, 1).unwrap();
                let phase = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / d as f64);
                assert!((rotated.amplitudes() - s.amplitudes() * phase).norm() < 1e-12);
            }
        }
        assert_eq!(
            pseudo_fock(4, 0.0, 0.1, 4, 12).unwrap_err(),
            EncodingError::SliceIndex { k: 4, slices: 4 }
        );
    }

    #[test]
    fn discrete_randomization_gives_pseudo_fock_mixture() {
        for (mu, delta, slices) in [(0.1, 0.0, 16), (0.3, 0.7, 8), (0.5, 2.0, 4)] {
            let lhs = phase_averaged_pair(mu, delta, slices, 12).unwrap();
            let rhs =
                mixture_density(&pseudo_fock_mixture(mu, delta, slices, 12).unwrap()).unwrap();
            assert!(trace_distance(&lhs, &rhs) < 1e-10);
        }
    }

    #[test]
    fn continuous_randomization_gives_poisson_mixture() {
        for (mu, delta) in [(0.1, 0.0), (0.5, 1.2)] {
            let lhs = phase_averaged_pair(mu, delta, 64, 12).unwrap();
            let rhs = mixture_density(&poisson_mixture(mu, delta, 12).unwrap()).unwrap();
            assert!(trace_distance(&lhs, &rhs) < 1e-8);
        }
    }

    #[test]
    fn trace_distance_of_orthogonal_states() {
        let a = k_photon_symmetric(1, 0.0, 3).unwrap().density();
        let b = k_photon_symmetric(2, 0.0, 3).unwrap().density();
        assert!((trace_distance(&a, &b) - 1.0).abs() < 1e-12);
        assert!(trace_distance(&a, &a) < 1e-12);
    }

    #[test]
    fn vacuum_encoding_is_product_plus_state() {
        let f = gf(3);
        let enc = entangled_encode(&FockState::vacuum(4), &f);
        for j in 0..3 {
            for k in 0..3 {
                assert!((enc.amplitude(j, k, 0, 0) - c(1.0 / 3.0, 0.)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn encoded_state_matches_bell_expansion() {
        // d^(-1/2) sum_u |Phi_{u,l}> (I (x) U^u)|psi_l>
        for d in [2u32, 3, 5] {
            let f = gf(d);
            for k in 0..=4usize {
                let input = k_photon_symmetric(k, 0.8, 6).unwrap();
                let enc = entangled_encode(&input, &f);
                let rot = rotation_u(&f, 6);
                let l = f.elem((k % d as usize) as u32).unwrap();
                let mut expected = DMatrix::<Complex64>::zeros((d * d) as usize, fock_dim(6));
                for u in f.elements() {
                    let phi = bell_state(&u, &l).unwrap();
                    let psi_u = input.rotate(&rot, 0, u.value()).unwrap();
                    expected += phi.amplitudes()
                        * psi_u.amplitudes().transpose()
                        * c(1.0 / (d as f64).sqrt(), 0.);
                }
                assert!((enc.amplitudes() - expected).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn single_photon_marginal_lives_on_bell_subspace() {
        let f = gf(3);
        let one = f.one();
        let enc = entangled_encode(&k_photon_symmetric(1, 0.5, 4).unwrap(), &f);
        let rho = enc.qudit_density();
        let support: f64 = f
            .elements()
            .iter()
            .map(|u| {
                let phi = bell_state(u, &one).unwrap();
                (phi.amplitudes().adjoint() * &rho * phi.amplitudes())[(0, 0)].re
            })
            .sum();
        assert!((support - 1.0).abs() < 1e-12);
        let rank = rho
            .symmetric_eigenvalues()
            .iter()
            .filter(|e| e.abs() > 1e-10)
            .count();
        // two Fock components |10>, |01> => rank min(k + 1, d)
        assert_eq!(rank, 2);
    }

    #[test]
    fn x_correlation_point_mass() {
        for d in [2u32, 3, 5, 7] {
            let f = gf(d);
            for k in 0..=6 {
                for delta in [0.0, 0.3, PI / 2.0, 2.9] {
                    let check = observation_point_mass(k, delta, &f, 12).unwrap();
                    assert!(check.deviation <= check.tail + 1e-10, "d={d} k={k}");
                }
            }
        }
    }

    #[test]
    fn x_correlation_of_poisson_mixture() {
        let f = gf(2);
        let mu = 0.2;
        let comps: Vec<(f64, JointEncodedState)> = poisson_mixture(mu, 0.4, 12)
            .unwrap()
            .into_iter()
            .map(|(w, s)| (w, entangled_encode(&s, &f)))
            .collect();
        let dist = x_correlation_mixture(&comps).unwrap();
        let even: f64 = (0..60).step_by(2).map(|k| poisson(mu, k)).sum();
        let odd: f64 = (1..60).step_by(2).map(|k| poisson(mu, k)).sum();
        assert!((dist[0] - even).abs() < 1e-8);
        assert!((dist[1] - odd).abs() < 1e-8);
    }

    #[test]
    fn x_correlation_rejects_composite_fields() {
        let enc = entangled_encode(&FockState::vacuum(2), &gf(4));
        assert_eq!(
            x_correlation(&enc).unwrap_err(),
            EncodingError::CompositeDimension(4)
        );
    }
}
