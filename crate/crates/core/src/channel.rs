//! Analytic detection model: a symmetric lossy channel to a beam-splitter
//! node with two threshold detectors, L and R.
//!
//! Per-arm transmittance is `eta = eta_d * 10^(-alpha (L/2) / 10)`. For a phase
//! difference `psi` the L detector sees mean photon number `eta mu cos^2(psi/2)`
//! and R sees `eta mu sin^2(psi/2)`. Encodings are `phi_k = 2 pi k / d`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::poisson;
use crate::galois::is_prime;
use crate::keyrate::entropy;

pub const DEFAULT_QUADRATURE_NODES: usize = 65;
pub const DEFAULT_PHOTON_CUTOFF: usize = 10;
pub const DEFAULT_TAIL_BOUND: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("gain is zero; bit-error and photon statistics are undefined")]
    ZeroGain,
    #[error("unassigned photon-number tail {residual:e} exceeds {bound:e}")]
    TruncationExceeded { residual: f64, bound: f64 },
}

fn invalid(msg: impl Into<String>) -> ChannelError {
    ChannelError::InvalidParameter(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// dB/km
    pub attenuation: f64,
    /// Alice-to-Bob distance in km.
    pub distance: f64,
    pub detector_efficiency: f64,
    /// Dark-count probability per detector per round.
    pub dark_count: f64,
}

impl ChannelParams {
    /// Fiber and detector defaults of the reference simulation at distance `l` km.
    pub fn standard(distance: f64) -> Self {
        ChannelParams {
            attenuation: 0.2,
            distance,
            detector_efficiency: 0.2,
            dark_count: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.attenuation >= 0.0 && self.attenuation.is_finite()) {
            return Err(invalid(format!(
                "attenuation {} must be >= 0",
                self.attenuation
            )));
        }
        if !(self.distance >= 0.0 && self.distance.is_finite()) {
            return Err(invalid(format!("distance {} must be >= 0", self.distance)));
        }
        if !(0.0..=1.0).contains(&self.detector_efficiency) {
            return Err(invalid(format!(
                "detector efficiency {} must lie in [0, 1]",
                self.detector_efficiency
            )));
        }
        if !(0.0..1.0).contains(&self.dark_count) {
            return Err(invalid(format!(
                "dark-count probability {} must lie in [0, 1)",
                self.dark_count
            )));
        }
        Ok(())
    }

    /// Per-arm transmittance including the detector, over half the distance.
    pub fn transmittance(&self) -> f64 {
        self.detector_efficiency * 10f64.powf(-self.attenuation * (self.distance / 2.0) / 10.0)
    }

    /// Fiber-only transmittance over the full distance.
    pub fn channel_transmittance(&self) -> f64 {
        10f64.powf(-self.attenuation * self.distance / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub dimension: u32,
    /// Number of phase slices `D`.
    pub slices: u32,
    /// Mean total photon number per pulse pair.
    pub intensity: f64,
    pub ec_efficiency: f64,
}

impl ProtocolParams {
    /// `D = d` for `d >= 10`; otherwise the smallest multiple of d that is at
    /// least 16 (16 for qubits). `gamma_ec = 0.95`.
    pub fn standard(dimension: u32, intensity: f64) -> Self {
        ProtocolParams {
            dimension,
            slices: if dimension >= 10 || dimension == 0 {
                dimension
            } else {
                16u32.div_ceil(dimension) * dimension
            },
            intensity,
            ec_efficiency: 0.95,
        }
    }

    pub fn with_intensity(&self, intensity: f64) -> Self {
        ProtocolParams { intensity, ..*self }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let d = self.dimension;
        if !is_prime(d) {
            return Err(invalid(format!("dimension {d} must be prime")));
        }
        if self.slices < d {
            return Err(invalid(format!(
                "slices {} must be >= dimension {d}",
                self.slices
            )));
        }
        if d < 10 && !self.slices.is_multiple_of(d) {
            return Err(invalid(format!(
                "slices {} must be a multiple of dimension {d}",
                self.slices
            )));
        }
        if !(self.intensity > 0.0 && self.intensity.is_finite()) {
            return Err(invalid(format!("intensity {} must be > 0", self.intensity)));
        }
        if !(self.ec_efficiency > 0.0 && self.ec_efficiency <= 1.0) {
            return Err(invalid(format!(
                "error-correction efficiency {} must lie in (0, 1]",
                self.ec_efficiency
            )));
        }
        Ok(())
    }

    /// Fraction of rounds kept by phase postselection, `d / D`.
    pub fn sifting(&self) -> f64 {
        self.dimension as f64 / self.slices as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FluctuationMode {
    /// One uniform phase error on `[-phi_lim, phi_lim]` per round.
    #[default]
    SingleUniform,
    /// Independent uniform errors for Alice and Bob; their difference is
    /// triangular on `[-2 phi_lim, 2 phi_lim]`.
    IndependentPerParty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisalignmentModel {
    /// Fixed reference-frame offset `delta_0` (radians).
    pub offset: f64,
    /// Fluctuation half-width `phi_lim` (radians).
    pub half_width: f64,
    pub mode: FluctuationMode,
    pub nodes: usize,
}

impl Default for MisalignmentModel {
    fn default() -> Self {
        Self::fixed(0.0)
    }
}

impl MisalignmentModel {
    pub fn fixed(offset: f64) -> Self {
        MisalignmentModel {
            offset,
            half_width: 0.0,
            mode: FluctuationMode::default(),
            nodes: DEFAULT_QUADRATURE_NODES,
        }
    }

    pub fn fluctuating(offset: f64, half_width: f64, mode: FluctuationMode) -> Self {
        MisalignmentModel {
            offset,
            half_width,
            mode,
            nodes: DEFAULT_QUADRATURE_NODES,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !self.offset.is_finite() {
            return Err(invalid("offset must be finite"));
        }
        if !(self.half_width >= 0.0 && self.half_width.is_finite()) {
            return Err(invalid(format!(
                "half-width {} must be >= 0",
                self.half_width
            )));
        }
        if self.nodes == 0 {
            return Err(invalid("quadrature needs at least one node"));
        }
        Ok(())
    }

    /// Quadrature nodes `(delta, weight)` for `E_delta[.]`; weights sum to 1.
    pub fn quadrature(&self) -> Vec<(f64, f64)> {
        if self.half_width == 0.0 {
            return vec![(self.offset, 1.0)];
        }
        let (x, w) = gauss_legendre(self.nodes);
        let phi = self.half_width;
        match self.mode {
            FluctuationMode::SingleUniform => x
                .iter()
                .zip(&w)
                .map(|(xi, wi)| (self.offset + phi * xi, wi / 2.0))
                .collect(),
            FluctuationMode::IndependentPerParty => {
                // density (2 phi - |t|) / (4 phi^2), integrated on each half separately
                let mut out = Vec::with_capacity(2 * x.len());
                for (a, b) in [(-2.0 * phi, 0.0), (0.0, 2.0 * phi)] {
                    let half = (b - a) / 2.0;
                    let mid = (a + b) / 2.0;
                    for (xi, wi) in x.iter().zip(&w) {
                        let t = mid + half * xi;
                        let density = (2.0 * phi - t.abs()) / (4.0 * phi * phi);
                        out.push((self.offset + t, wi * half * density));
                    }
                }
                out
            }
        }
    }

    /// Draws one phase offset from the model.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.half_width == 0.0 {
            return self.offset;
        }
        let phi = self.half_width;
        match self.mode {
            FluctuationMode::SingleUniform => self.offset + rng.random_range(-phi..=phi),
            FluctuationMode::IndependentPerParty => {
                self.offset + rng.random_range(-phi..=phi) - rng.random_range(-phi..=phi)
            }
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        if n == 1 {
            z = 0.0;
            dp = 1.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    L,
    R,
}

impl Detector {
    pub const BOTH: [Detector; 2] = [Detector::L, Detector::R];
}

/// `a - b` given `ln a` and `ln b`, accurate when they nearly cancel.
fn exp_diff(ln_a: f64, ln_b: f64) -> f64 {
    if ln_b == f64::NEG_INFINITY {
        return ln_a.exp();
    }
    ln_b.exp() * (ln_a - ln_b).exp_m1()
}

/// Click probability of a threshold detector seeing mean photon number `m`.
fn click(m: f64, dark: f64) -> f64 {
    -((-dark).ln_1p() - m).exp_m1()
}

/// `(P_L, P_R)` at per-arm transmittance `eta` and total phase difference `psi`.
pub fn click_probs_at(mu: f64, psi: f64, eta: f64, dark: f64) -> (f64, f64) {
    let c = (psi / 2.0).cos().powi(2);
    let s = (psi / 2.0).sin().powi(2);
    (click(eta * mu * c, dark), click(eta * mu * s, dark))
}

pub fn click_probs(mu: f64, psi: f64, channel: &ChannelParams) -> (f64, f64) {
    click_probs_at(mu, psi, channel.transmittance(), channel.dark_count)
}

fn single_click_at(mu: f64, psi: f64, eta: f64, dark: f64, detector: Detector) -> f64 {
    let (pl, pr) = click_probs_at(mu, psi, eta, dark);
    match detector {
        Detector::L => pl * (1.0 - pr),
        Detector::R => pr * (1.0 - pl),
    }
}

/// Probability that only `detector` clicks for encoding difference `phi_k`.
pub fn single_click_prob(
    mu: f64,
    phi_k: f64,
    delta: f64,
    channel: &ChannelParams,
    detector: Detector,
) -> f64 {
    single_click_at(
        mu,
        phi_k + delta,
        channel.transmittance(),
        channel.dark_count,
        detector,
    )
}

pub(crate) fn encoding_phase(k: u32, d: u32) -> f64 {
    2.0 * PI * k as f64 / d as f64
}

/// Rotation that moves the dominant R-click entry to index 0.
pub(crate) fn group_shift(d: u32, detector: Detector) -> u32 {
    match detector {
        Detector::L => 0,
        Detector::R => d / 2,
    }
}

/// `E_delta[P(click | phi_k, delta)] / d` for each k, before re-indexing.
fn click_table(
    proto: &ProtocolParams,
    channel: &ChannelParams,
    nodes: &[(f64, f64)],
    detector: Detector,
) -> Vec<f64> {
    let d = proto.dimension;
    let eta = channel.transmittance();
    (0..d)
        .map(|k| {
            let phi = encoding_phase(k, d);
            nodes
                .iter()
                .map(|(delta, w)| {
                    w * single_click_at(
                        proto.intensity,
                        phi + delta,
                        eta,
                        channel.dark_count,
                        detector,
                    )
                })
                .sum::<f64>()
                / d as f64
        })
        .collect()
}

/// Gain `Q^delta` of one detector group at a fixed total offset.
pub fn gain_at(
    proto: &ProtocolParams,
    channel: &ChannelParams,
    delta: f64,
    detector: Detector,
) -> f64 {
    click_table(proto, channel, &[(delta, 1.0)], detector)
        .iter()
        .sum()
}

/// Gain `Q = E_delta[Q^delta]` of one detector group.
pub fn gain(
    proto: &ProtocolParams,
    channel: &ChannelParams,
    model: &MisalignmentModel,
    detector: Detector,
) -> f64 {
    click_table(proto, channel, &model.quadrature(), detector)
        .iter()
        .sum()
}

/// Bayesian bit-error vector of one group: entry `k` is the probability that
/// the key difference is `k` (after the group's relabelling) given a click.
pub fn bit_error_vector(
    proto: &ProtocolParams,
    channel: &ChannelParams,
    model: &MisalignmentModel,
    detector: Detector,
) -> Result<Vec<f64>, ChannelError> {
    bit_error_from(proto, channel, &model.quadrature(), detector)
}

fn bit_error_from(
    proto: &ProtocolParams,
    channel: &ChannelParams,
    nodes: &[(f64, f64)],
    detector: Detector,
) -> Result<Vec<f64>, ChannelError> {
    let table = click_table(proto, channel, nodes, detector);
    let q: f64 = table.iter().sum();
    if q <= 0.0 {
        return Err(ChannelError::ZeroGain);
    }
    let d = proto.dimension;
    let shift = group_shift(d, detector);
    Ok((0..d)
        .map(|k| table[((k + shift) % d) as usize] / q)
        .collect())
}

/// `P_n(group | psi)`: probability that an n-photon input gives a single click
/// in `detector`. Photons reach L with probability `eta cos^2(psi/2)` each and
/// R with `eta sin^2(psi/2)`; a lone L click means "no R click" minus "no click".
fn n_photon_click(n: usize, psi: f64, eta: f64, dark: f64, detector: Detector) -> f64 {
    let other = match detector {
        Detector::L => (psi / 2.0).sin().powi(2),
        Detector::R => (psi / 2.0).cos().powi(2),
    };
    let ln_keep = (-dark).ln_1p();
    let n = n as f64;
    let ln_silent_other = ln_keep + n * (-eta * other).ln_1p();
    let ln_silent_both = 2.0 * ln_keep + n * (-eta).ln_1p();
    exp_diff(ln_silent_other, ln_silent_both)
}

fn yield_from(
    n: usize,
    proto: &ProtocolParams,
    channel: &ChannelParams,
    nodes: &[(f64, f64)],
    detector: Detector,
) -> f64 {
    let d = proto.dimension;
    let eta = channel.transmittance();
    nodes
        .iter()
        .map(|(delta, w)| {
            w * (0..d)
                .map(|k| {
                    n_photon_click(
                        n,
                        encoding_phase(k, d) + delta,
                        eta,
                        channel.dark_count,
                        detector,
                    )
                })
                .sum::<f64>()
                / d as f64
        })
        .sum()
}

/// n-photon yield `Y_n` of one group, averaged over encodings and offsets.
/// Negative rounding residue is clamped to 0.
pub fn n_photon_yield(
    n: usize,
    proto: &ProtocolParams,
    channel: &ChannelParams,
    model: &MisalignmentModel,
    detector: Detector,
) -> f64 {
    yield_from(n, proto, channel, &model.quadrature(), detector).max(0.0)
}

/// Detection statistics of one click group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionStats {
    pub detector: Detector,
    pub gain: f64,
    pub bit_error: Vec<f64>,
    /// `Y_0 ..= Y_{n_max}`.
    pub yields: Vec<f64>,
    /// `q_n = P_mu(n) Y_n / Q`.
    pub fractions: Vec<f64>,
    /// `q_n` folded mod d, before the tail is assigned.
    pub folded: Vec<f64>,
    /// Folded fractions with the residual tail assigned pessimistically.
    pub phase_error: Vec<f64>,
    /// `1 - sum_n q_n`.
    pub residual_tail: f64,
    /// Count of negative intermediate probabilities clamped to 0.
    pub clamped: usize,
}

/// Truncation settings for the photon-number expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub n_max: usize,
    pub tail_bound: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            n_max: DEFAULT_PHOTON_CUTOFF,
            tail_bound: DEFAULT_TAIL_BOUND,
        }
    }
}

/// Photon fractions `q_0 ..= q_{n_max}` and the residual tail.
pub fn photon_fractions(
    proto: &ProtocolParams,
    channel: &ChannelParams,
    model: &MisalignmentModel,
    detector: Detector,
    n_max: usize,
) -> Result<(Vec<f64>, f64), ChannelError> {
    let stats = evaluate(
        proto,
        channel,
        model,
        detector,
        Truncation {
            n_max,
            tail_bound: f64::INFINITY,
        },
    )?;
    Ok((stats.fractions, stats.residual_tail))
}

/// Phase-error vector `q_mu`: photon fractions folded mod d, with the
/// residual tail added to the entry that maximizes the entropy.
pub fn phase_error_vector(
    proto: &ProtocolParams,
    channel: &ChannelParams,
    model: &MisalignmentModel,
    detector: Detector,
    truncation: Truncation,
) -> Result<Vec<f64>, ChannelError> {
    Ok(evaluate(proto, channel, model, detector, truncation)?.phase_error)
}

/// Adds `residual` to whichever entry of `folded` maximizes the entropy.
pub fn assign_tail_pessimistically(folded: &[f64], residual: f64) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..folded.len() {
        let mut v = folded.to_vec();
        v[i] += residual;
        let h = entropy(&v).unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(bh, _)| h > *bh) {
            best = Some((h, v));
        }
    }
    best.map(|(_, v)| v).unwrap_or_default()
}

/// Full statistics of one click group.
pub fn evaluate(
    proto: &ProtocolParams,
    channel: &ChannelParams,
    model: &MisalignmentModel,
    detector: Detector,
    truncation: Truncation,
) -> Result<DetectionStats, ChannelError> {
    proto.validate()?;
    channel.validate()?;
    model.validate()?;
    let nodes = model.quadrature();
    evaluate_with_nodes(proto, channel, &nodes, detector, truncation)
}

pub(crate) fn evaluate_with_nodes(
    proto: &ProtocolParams,
    channel: &ChannelParams,
    nodes: &[(f64, f64)],
    detector: Detector,
    truncation: Truncation,
) -> Result<DetectionStats, ChannelError> {
    let d = proto.dimension as usize;
    let table = click_table(proto, channel, nodes, detector);
    let gain: f64 = table.iter().sum();
    if gain <= 0.0 {
        return Err(ChannelError::ZeroGain);
    }
    let bit_error = bit_error_from(proto, channel, nodes, detector)?;

    let mut clamped = 0;
    let yields: Vec<f64> = (0..=truncation.n_max)
        .map(|n| {
            let y = yield_from(n, proto, channel, nodes, detector);
            if y < 0.0 {
                clamped += 1;
                0.0
            } else {
                y
            }
        })
        .collect();
    let fractions: Vec<f64> = yields
        .iter()
        .enumerate()
        .map(|(n, y)| poisson(proto.intensity, n) * y / gain)
        .collect();
    let mut folded = vec![0.0; d];
    for (n, q) in fractions.iter().enumerate() {
        folded[n % d] += q;
    }
    let mut residual_tail = 1.0 - fractions.iter().sum::<f64>();
    if residual_tail < 0.0 {
        clamped += 1;
        residual_tail = 0.0;
    }
    if residual_tail > truncation.tail_bound {
        return Err(ChannelError::TruncationExceeded {
            residual: residual_tail,
            bound: truncation.tail_bound,
        });
    }
    let phase_error = assign_tail_pessimistically(&folded, residual_tail);
    Ok(DetectionStats {
        detector,
        gain,
        bit_error,
        yields,
        fractions,
        folded,
        phase_error,
        residual_tail,
        clamped,
    })
}

/// Largest change in gain or bit-error entries when the quadrature node count doubles.
pub fn quadrature_convergence(
    proto: &ProtocolParams,
    channel: &ChannelParams,
    model: &MisalignmentModel,
) -> Result<f64, ChannelError> {
    let doubled = MisalignmentModel {
        nodes: model.nodes * 2,
        ..*model
    };
    let mut worst: f64 = 0.0;
    for det in Detector::BOTH {
        let a = bit_error_vector(proto, channel, model, det)?;
        let b = bit_error_vector(proto, channel, &doubled, det)?;
        worst = worst
            .max((gain(proto, channel, model, det) - gain(proto, channel, &doubled, det)).abs());
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ideal(distance: f64) -> ChannelParams {
        ChannelParams {
            dark_count: 0.0,
            ..ChannelParams::standard(distance)
        }
    }

    fn dark_only() -> ChannelParams {
        ChannelParams {
            detector_efficiency: 0.0,
            ..ChannelParams::standard(100.0)
        }
    }

    #[test]
    fn worked_transmittance() {
        let eta = ChannelParams::standard(500.0).transmittance();
        assert_relative_eq!(eta, 2e-6, max_relative = 1e-12);
    }

    #[test]
    fn parameter_validation() {
        assert!(ProtocolParams::standard(4, 0.1).validate().is_err());
        assert!(ProtocolParams {
            slices: 15,
            ..ProtocolParams::standard(2, 0.1)
        }
        .validate()
        .is_err());
        assert!(ProtocolParams {
            slices: 2,
            ..ProtocolParams::standard(3, 0.1)
        }
        .validate()
        .is_err());
        assert!(ProtocolParams::standard(17, 0.03).validate().is_ok());
        assert!(ProtocolParams::standard(2, 0.0).validate().is_err());
        assert!(ChannelParams {
            dark_count: 1.0,
            ..ChannelParams::standard(0.0)
        }
        .validate()
        .is_err());
        assert!(MisalignmentModel {
            nodes: 0,
            ..MisalignmentModel::fixed(0.0)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn click_prob_examples() {
        let ch = ideal(100.0);
        let eta = ch.transmittance();
        let (pl, pr) = click_probs(0.2, 0.0, &ch);
        assert_relative_eq!(pl, 1.0 - (-eta * 0.2f64).exp(), max_relative = 1e-12);
        assert_eq!(pr, 0.0);

        let (pl, pr) = click_probs(0.2, 1.0, &dark_only());
        assert_relative_eq!(pl, 1e-8, max_relative = 1e-12);
        assert_relative_eq!(pr, 1e-8, max_relative = 1e-12);

        let ch = ChannelParams::standard(50.0);
        let (a, b) = click_probs(0.3, 0.0, &ch);
        let (c, e) = click_probs(0.3, PI, &ch);
        assert_relative_eq!(a, e, max_relative = 1e-12);
        assert_relative_eq!(b, c, max_relative = 1e-9);
    }

    #[test]
    fn single_click_examples() {
        let ch = ideal(100.0);
        let eta = ch.transmittance();
        assert_relative_eq!(
            single_click_prob(0.2, 0.0, 0.0, &ch, Detector::L),
            1.0 - (-eta * 0.2f64).exp(),
            max_relative = 1e-12
        );
        assert_eq!(single_click_prob(0.2, 0.0, 0.0, &ch, Detector::R), 0.0);
        let ch = ChannelParams::standard(10.0);
        assert_relative_eq!(
            single_click_prob(0.4, PI / 2.0, 0.0, &ch, Detector::L),
            single_click_prob(0.4, PI / 2.0, 0.0, &ch, Detector::R),
            max_relative = 1e-12
        );
    }

    #[test]
    fn gain_examples() {
        let proto = ProtocolParams::standard(3, 0.2);
        let q = gain(
            &proto,
            &dark_only(),
            &MisalignmentModel::fixed(0.4),
            Detector::R,
        );
        assert_relative_eq!(q, 1e-8 * (1.0 - 1e-8), max_relative = 1e-10);

        let ch = ChannelParams::standard(80.0);
        let model = MisalignmentModel::fixed(0.3);
        assert_relative_eq!(
            gain(&proto, &ch, &model, Detector::L),
            gain_at(&proto, &ch, 0.3, Detector::L),
            max_relative = 1e-14
        );

        let ch = ideal(100.0);
        let eta = ch.transmittance();
        let proto = ProtocolParams::standard(2, 0.1);
        let q = gain(&proto, &ch, &MisalignmentModel::fixed(0.0), Detector::L);
        assert_relative_eq!(q, (1.0 - (-eta * 0.1f64).exp()) / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn bit_error_examples() {
        let proto = ProtocolParams::standard(5, 0.2);
        for det in Detector::BOTH {
            let e = bit_error_vector(&proto, &dark_only(), &MisalignmentModel::fixed(0.2), det)
                .unwrap();
            for x in e {
                assert_relative_eq!(x, 0.2, max_relative = 1e-12);
            }
        }
        let proto = ProtocolParams::standard(2, 0.2);
        for det in Detector::BOTH {
            let e = bit_error_vector(&proto, &ideal(100.0), &MisalignmentModel::fixed(0.0), det)
                .unwrap();
            assert_eq!(e[0], 1.0);
            assert!(e[1] < 1e-15);
            let e = bit_error_vector(
                &proto,
                &ChannelParams::standard(100.0),
                &MisalignmentModel::fixed(PI / 2.0),
                det,
            )
            .unwrap();
            assert_relative_eq!(e[0], 0.5, max_relative = 1e-12);
            assert_relative_eq!(e[1], 0.5, max_relative = 1e-12);
        }
        let zero = ChannelParams {
            dark_count: 0.0,
            ..dark_only()
        };
        assert_eq!(
            bit_error_vector(&proto, &zero, &MisalignmentModel::fixed(0.0), Detector::L),
            Err(ChannelError::ZeroGain)
        );
    }

    #[test]
    fn yield_examples() {
        let ch = ChannelParams::standard(120.0);
        let proto = ProtocolParams::standard(3, 0.1);
        let model = MisalignmentModel::fixed(0.4);
        for det in Detector::BOTH {
            assert_relative_eq!(
                n_photon_yield(0, &proto, &ch, &model, det),
                1e-8 * (1.0 - 1e-8),
                max_relative = 1e-9
            );
            for n in [1, 3, 7] {
                assert_relative_eq!(
                    n_photon_yield(n, &proto, &dark_only(), &model, det),
                    1e-8 * (1.0 - 1e-8),
                    max_relative = 1e-9
                );
            }
        }
        // sum_k cos^2((phi_k + delta)/2) / d = 1/2 for every delta
        let ch = ChannelParams::standard(60.0);
        for d in [2, 3, 5, 17] {
            let proto = ProtocolParams::standard(d, 0.1);
            let y0 = n_photon_yield(1, &proto, &ch, &MisalignmentModel::fixed(0.0), Detector::L);
            for delta in [0.1, 0.7, 1.9, 3.0] {
                let y = n_photon_yield(
                    1,
                    &proto,
                    &ch,
                    &MisalignmentModel::fixed(delta),
                    Detector::L,
                );
                assert_relative_eq!(y, y0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn gain_is_the_poisson_mixture_of_yields() {
        for d in [2, 3, 17] {
            for det in Detector::BOTH {
                let proto = ProtocolParams::standard(d, 0.3);
                let ch = ChannelParams::standard(40.0);
                let model =
                    MisalignmentModel::fluctuating(0.2, 0.5, FluctuationMode::IndependentPerParty);
                let q = gain(&proto, &ch, &model, det);
                let mix: f64 = (0..40)
                    .map(|n| poisson(0.3, n) * n_photon_yield(n, &proto, &ch, &model, det))
                    .sum();
                assert_relative_eq!(q, mix, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn fractions_and_phase_error() {
        let proto = ProtocolParams::standard(2, 0.1);
        let ch = ChannelParams::standard(100.0);
        let model = MisalignmentModel::fixed(0.0);
        let (q, tail) = photon_fractions(&proto, &ch, &model, Detector::L, 10).unwrap();
        assert!((q.iter().sum::<f64>() + tail - 1.0).abs() < 1e-10);
        assert!((q[1] - (-0.1f64).exp()).abs() < 0.01);

        let (q, _) = photon_fractions(&proto, &ideal(100.0), &model, Detector::L, 10).unwrap();
        assert_eq!(q[0], 0.0);

        let stats = evaluate(&proto, &ch, &model, Detector::L, Truncation::default()).unwrap();
        assert!((stats.phase_error.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!((stats.folded.iter().sum::<f64>() + stats.residual_tail - 1.0).abs() < 1e-10);
        assert!((stats.bit_error.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn truncation_bound_is_enforced() {
        let proto = ProtocolParams::standard(2, 0.5);
        let ch = ChannelParams::standard(50.0);
        let tight = Truncation {
            n_max: 1,
            tail_bound: 1e-6,
        };
        assert!(matches!(
            evaluate(
                &proto,
                &ch,
                &MisalignmentModel::fixed(0.0),
                Detector::L,
                tight
            ),
            Err(ChannelError::TruncationExceeded { .. })
        ));
    }

    #[test]
    fn pessimistic_tail_assignment() {
        assert_eq!(
            assign_tail_pessimistically(&[0.0, 1.0], 0.0),
            vec![0.0, 1.0]
        );
        let v = assign_tail_pessimistically(&[0.7, 0.2, 0.05], 0.05);
        assert_eq!(v, vec![0.7, 0.2, 0.1]);
    }

    #[test]
    fn high_precision_phase_error_entropy() {
        let proto = ProtocolParams::standard(17, 0.03);
        let ch = ChannelParams::standard(300.0);
        let model = MisalignmentModel::fixed(0.0);
        for det in Detector::BOTH {
            let base = evaluate(&proto, &ch, &model, det, Truncation::default()).unwrap();
            let fine = evaluate(
                &proto,
                &ch,
                &model,
                det,
                Truncation {
                    n_max: 20,
                    tail_bound: 1e-6,
                },
            )
            .unwrap();
            let h0 = entropy(&base.phase_error).unwrap();
            let h1 = entropy(&fine.phase_error).unwrap();
            assert!((h0 - h1).abs() < 1e-8, "{h0} vs {h1}");
        }
    }

    #[test]
    fn gauss_legendre_rules() {
        for n in [1, 2, 5, 65, 130] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
            // exact for x^(2n-2)
            let m = 2 * n - 2;
            let exact = if m % 2 == 0 {
                2.0 / (m as f64 + 1.0)
            } else {
                0.0
            };
            let approx: f64 = x
                .iter()
                .zip(&w)
                .map(|(xi, wi)| wi * xi.powi(m as i32))
                .sum();
            assert!((approx - exact).abs() < 1e-12, "n={n}");
        }
        let (x, _) = gauss_legendre(3);
        assert!((x[2] - (0.6f64).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn quadrature_weights_sum_to_one() {
        for mode in [
            FluctuationMode::SingleUniform,
            FluctuationMode::IndependentPerParty,
        ] {
            let m = MisalignmentModel::fluctuating(0.3, 0.9, mode);
            let total: f64 = m.quadrature().iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_converges() {
        let proto = ProtocolParams::standard(17, 0.03);
        let ch = ChannelParams::standard(200.0);
        for mode in [
            FluctuationMode::SingleUniform,
            FluctuationMode::IndependentPerParty,
        ] {
            let m = MisalignmentModel::fluctuating(PI / 6.0, PI / 3.0, mode);
            assert!(quadrature_convergence(&proto, &ch, &m).unwrap() < 1e-9);
        }
    }

    #[test]
    fn triangular_moments() {
        // variance of the difference of two U(-a, a) draws is 2 a^2 / 3
        let a = 0.8;
        let m = MisalignmentModel::fluctuating(0.0, a, FluctuationMode::IndependentPerParty);
        let var: f64 = m.quadrature().iter().map(|(t, w)| w * t * t).sum();
        assert!((var - 2.0 * a * a / 3.0).abs() < 1e-12);
        let m = MisalignmentModel::fluctuating(0.0, a, FluctuationMode::SingleUniform);
        let var: f64 = m.quadrature().iter().map(|(t, w)| w * t * t).sum();
        assert!((var - a * a / 3.0).abs() < 1e-12);
    }
}
