//! Entropies, the asymptotic key rate, the PLOB benchmark, intensity
//! optimization, decoy-state yield bounds and the discrete-randomization
//! deviation bounds.
//!
//! Per click group the rate is
//! `(d/D) Q {gamma_ec [log2 d - H(E_bit)] - H(q_mu)}`; groups are summed and
//! the total is clamped at zero.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{
    evaluate, ChannelError, ChannelParams, Detector, MisalignmentModel, ProtocolParams, Truncation,
};
use crate::encoding::{ln_factorial, poisson};

/// Tolerance on `sum v = 1` before an entropy input is rejected.
pub const ENTROPY_SUM_TOL: f64 = 1e-8;

/// Default intensity bracket for optimization.
pub const DEFAULT_BRACKET: (f64, f64) = (1e-4, 0.5);

/// Points in the coarse logarithmic scan.
pub const SCAN_POINTS: usize = 48;

/// Relative tolerance of the golden-section refinement.
pub const INTENSITY_RTOL: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KeyRateError {
    #[error("probability vector has a negative entry {0:e}")]
    NegativeProbability(f64),
    #[error("probability vector sums to {0}, not 1")]
    NotNormalized(f64),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("intensity bracket ({0}, {1}) must satisfy 0 < lo < hi <= 0.5")]
    Bracket(f64, f64),
    #[error("decoy estimation needs {needed} distinct intensities, got {got}")]
    TooFewIntensities { needed: usize, got: usize },
    #[error("decoy estimation needs a near-vacuum intensity (<= {0})")]
    NoVacuum(f64),
    #[error("observed gains are inconsistent with any yields in [0, 1]")]
    Infeasible,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Shannon entropy in bits, `0 log 0 = 0`. Inputs summing to 1 within
/// [`ENTROPY_SUM_TOL`] are renormalized; tiny negative rounding is ignored.
pub fn entropy(v: &[f64]) -> Result<f64, KeyRateError> {
    let total: f64 = v.iter().sum();
    if let Some(&neg) = v.iter().find(|&&x| x < -ENTROPY_SUM_TOL) {
        return Err(KeyRateError::NegativeProbability(neg));
    }
    if !((total - 1.0).abs() <= ENTROPY_SUM_TOL) {
        return Err(KeyRateError::NotNormalized(total));
    }
    Ok(v.iter()
        .map(|&x| x.max(0.0) / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum())
}

/// Contribution of one click group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRate {
    pub detector: Detector,
    pub gain: f64,
    /// `log2 d - H(E_bit)`
    pub mutual_information: f64,
    /// `H(q_mu)`
    pub privacy_leakage: f64,
    /// Unclamped contribution to the rate.
    pub rate: f64,
    pub residual_tail: f64,
    pub clamped: usize,
}

/// Key rate at one configuration, bits per pulse pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub distance: f64,
    /// Intensity used; `0.0` marks an optimization that found no positive rate.
    pub intensity: f64,
    pub rate: f64,
    /// Gain-weighted over both groups.
    pub mutual_information: f64,
    /// Gain-weighted over both groups.
    pub privacy_leakage: f64,
    pub gain: f64,
    pub groups: Vec<GroupRate>,
}

impl RatePoint {
    /// Sum of the unclamped group contributions.
    pub fn raw_rate(&self) -> f64 {
        self.groups.iter().map(|g| g.rate).sum()
    }
}

pub type RateCurve = Vec<RatePoint>;

/// Evaluates the key rate at the protocol's intensity.
pub fn key_rate(
    proto: &ProtocolParams,
    channel: &ChannelParams,
    model: &MisalignmentModel,
    truncation: Truncation,
) -> Result<RatePoint, KeyRateError> {
    let d = proto.dimension as f64;
    let sift = proto.sifting();
    let mut groups = Vec::with_capacity(2);
    for det in Detector::BOTH {
        let stats = evaluate(proto, channel, model, det, truncation)?;
        let mi = d.log2() - entropy(&stats.bit_error)?;
        let pl = entropy(&stats.phase_error)?;
        groups.push(GroupRate {
            detector: det,
            gain: stats.gain,
            mutual_information: mi,
            privacy_leakage: pl,
            rate: sift * stats.gain * (proto.ec_efficiency * mi - pl),
            residual_tail: stats.residual_tail,
            clamped: stats.clamped,
        });
    }
    let gain: f64 = groups.iter().map(|g| g.gain).sum();
    let weighted =
        |f: fn(&GroupRate) -> f64| groups.iter().map(|g| g.gain * f(g)).sum::<f64>() / gain;
    let raw: f64 = groups.iter().map(|g| g.rate).sum();
    Ok(RatePoint {
        distance: channel.distance,
        intensity: proto.intensity,
        rate: raw.max(0.0),
        mutual_information: weighted(|g| g.mutual_information),
        privacy_leakage: weighted(|g| g.privacy_leakage),
        gain,
        groups,
    })
}

/// Repeaterless secret-key capacity `-log2(1 - eta)` of a pure-loss channel.
pub fn plob_bound(transmittance: f64) -> f64 {
    -(-transmittance).ln_1p() / std::f64::consts::LN_2
}

/// PLOB bound for the fiber alone over the full distance.
pub fn plob_for(channel: &ChannelParams) -> f64 {
    plob_bound(channel.channel_transmittance())
}

/// Maximizes the key rate over the intensity: a logarithmic scan of
/// [`SCAN_POINTS`] points, then golden-section refinement around the best one.
///
/// When no intensity in the bracket yields a positive rate the result has
/// `rate = 0` and `intensity = 0.0`; its other fields describe the scan point
/// with the largest unclamped rate.
pub fn optimize_intensity(
    proto: &ProtocolParams,
    channel: &ChannelParams,
    model: &MisalignmentModel,
    bracket: (f64, f64),
    truncation: Truncation,
) -> Result<RatePoint, KeyRateError> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && lo < hi && hi <= 0.5) {
        return Err(KeyRateError::Bracket(lo, hi));
    }
    let eval = |mu: f64| key_rate(&proto.with_intensity(mu), channel, model, truncation);
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (SCAN_POINTS - 1) as f64).exp())
        .collect();
    let points = grid
        .iter()
        .map(|&mu| eval(mu))
        .collect::<Result<Vec<_>, _>>()?;
    let best = (0..points.len())
        .max_by(|&a, &b| points[a].raw_rate().total_cmp(&points[b].raw_rate()))
        .expect("non-empty grid");
    if points[best].rate <= 0.0 {
        let mut p = points[best].clone();
        p.intensity = 0.0;
        p.rate = 0.0;
        return Ok(p);
    }

    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(grid.len() - 1)];
    let mut x1 = b - invphi * (b - a);
    let mut x2 = a + invphi * (b - a);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    while b - a > INTENSITY_RTOL * (a + b) / 2.0 {
        if f1.raw_rate() >= f2.raw_rate() {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = eval(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = eval(x2)?;
        }
    }
    let refined = if f1.raw_rate() >= f2.raw_rate() {
        f1
    } else {
        f2
    };
    Ok(if refined.raw_rate() >= points[best].raw_rate() {
        refined
    } else {
        points[best].clone()
    })
}

/// Optimized rate at each distance, evaluated in parallel; order follows `distances`.
pub fn rate_curve(
    proto: &ProtocolParams,
    channel: &ChannelParams,
    model: &MisalignmentModel,
    distances: &[f64],
    bracket: (f64, f64),
    truncation: Truncation,
) -> Result<RateCurve, KeyRateError> {
    distances
        .par_iter()
        .map(|&l| {
            let ch = ChannelParams {
                distance: l,
                ..*channel
            };
            optimize_intensity(proto, &ch, model, bracket, truncation)
        })
        .collect()
}

/// Interval bounds on the low photon-number yields.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecoyEstimate {
    /// Lower bounds on `Y_0 ..= Y_{n_cut}`.
    pub lower: Vec<f64>,
    /// Upper bounds on `Y_0 ..= Y_{n_cut}`.
    pub upper: Vec<f64>,
    /// Per intensity, the largest gain `sum_{n > n_cut} P_mu(n) Y_n` could add.
    pub residual_bound: Vec<f64>,
}

impl DecoyEstimate {
    pub fn contains(&self, n: usize, y: f64) -> bool {
        n < self.lower.len() && self.lower[n] <= y && y <= self.upper[n]
    }
}

/// Largest intensity accepted as the near-vacuum decoy.
pub const VACUUM_THRESHOLD: f64 = 0.01;

/// Bounds `Y_0 ..= Y_{n_cut}` from observed `(mu_i, Q_i)` pairs, assuming
/// every higher yield lies in `[0, 1]`.
pub fn decoy_estimate(
    observed: &[(f64, f64)],
    n_cut: usize,
) -> Result<DecoyEstimate, KeyRateError> {
    decoy_estimate_with(observed, n_cut, 1.0)
}

/// [`decoy_estimate`] with higher yields bounded by `tail_yield` instead of 1.
///
/// Solves `min/max Y_n` subject to
/// `Q_i - t_i <= sum_{m <= n_cut} P_{mu_i}(m) Y_m <= Q_i` with
/// `t_i = tail_yield sum_{m > n_cut} P_{mu_i}(m)` and `0 <= Y_m <= 1`,
/// by enumerating the vertices of the feasible polytope.
pub fn decoy_estimate_with(
    observed: &[(f64, f64)],
    n_cut: usize,
    tail_yield: f64,
) -> Result<DecoyEstimate, KeyRateError> {
    let mut mus: Vec<f64> = observed.iter().map(|o| o.0).collect();
    mus.sort_by(f64::total_cmp);
    mus.dedup();
    if mus.len() < n_cut + 1 {
        return Err(KeyRateError::TooFewIntensities {
            needed: n_cut + 1,
            got: mus.len(),
        });
    }
    if mus[0] > VACUUM_THRESHOLD {
        return Err(KeyRateError::NoVacuum(VACUUM_THRESHOLD));
    }
    if !(0.0..=1.0).contains(&tail_yield) {
        return Err(KeyRateError::InvalidArgument(format!(
            "tail yield {tail_yield} outside [0, 1]"
        )));
    }
    for &(mu, q) in observed {
        if !(mu > 0.0 && (0.0..=1.0).contains(&q)) {
            return Err(KeyRateError::InvalidArgument(format!(
                "observation ({mu}, {q})"
            )));
        }
    }

    let vars = n_cut + 1;
    // constraints a . y <= b
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut residual_bound = Vec::with_capacity(observed.len());
    for &(mu, q) in observed {
        let coeffs: Vec<f64> = (0..vars).map(|m| poisson(mu, m)).collect();
        let kept: f64 = coeffs.iter().sum();
        let tail = tail_yield * (1.0 - kept).max(0.0);
        residual_bound.push(tail);
        rows.push((coeffs.clone(), q));
        rows.push((coeffs.iter().map(|c| -c).collect(), -(q - tail)));
    }
    for m in 0..vars {
        let mut e = vec![0.0; vars];
        e[m] = 1.0;
        rows.push((e.clone(), 1.0));
        e[m] = -1.0;
        rows.push((e, 0.0));
    }

    let vertices = feasible_vertices(&rows, vars).ok_or(KeyRateError::Infeasible)?;
    let mut lower = vec![f64::INFINITY; vars];
    let mut upper = vec![f64::NEG_INFINITY; vars];
    for v in &vertices {
        for m in 0..vars {
            lower[m] = lower[m].min(v[m]);
            upper[m] = upper[m].max(v[m]);
        }
    }
    for m in 0..vars {
        lower[m] = lower[m].max(0.0);
        upper[m] = upper[m].min(1.0);
    }
    Ok(DecoyEstimate {
        lower,
        upper,
        residual_bound,
    })
}

/// Vertices of `{y : a_i . y <= b_i}`; the feasibility tolerance widens
/// until some vertex qualifies or it exceeds the limit.
fn feasible_vertices(rows: &[(Vec<f64>, f64)], vars: usize) -> Option<Vec<Vec<f64>>> {
    let mut candidates = Vec::new();
    let mut idx: Vec<usize> = (0..vars).collect();
    loop {
        if let Some(y) = solve_active(rows, &idx, vars) {
            candidates.push(y);
        }
        if !next_combination(&mut idx, rows.len()) {
            break;
        }
    }
    let scale: Vec<f64> = rows
        .iter()
        .map(|(a, b)| a.iter().map(|x| x.abs()).sum::<f64>().max(b.abs()))
        .collect();
    let mut tol = 1e-14;
    while tol <= 1e-9 {
        let feasible: Vec<Vec<f64>> = candidates
            .iter()
            .filter(|y| {
                rows.iter().zip(&scale).all(|((a, b), s)| {
                    a.iter().zip(y.iter()).map(|(ai, yi)| ai * yi).sum::<f64>() <= b + tol * s
                })
            })
            .cloned()
            .collect();
        if !feasible.is_empty() {
            return Some(feasible);
        }
        tol *= 10.0;
    }
    None
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Solves the square system of the chosen rows held with equality.
fn solve_active(rows: &[(Vec<f64>, f64)], active: &[usize], vars: usize) -> Option<Vec<f64>> {
    let mut m: Vec<Vec<f64>> = active
        .iter()
        .map(|&i| {
            let mut r = rows[i].0.clone();
            let norm = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
            if norm == 0.0 {
                return r;
            }
            r.iter_mut().for_each(|x| *x /= norm);
            r.push(rows[i].1 / norm);
            r
        })
        .collect();
    if m.iter().any(|r| r.len() != vars + 1) {
        return None;
    }
    for col in 0..vars {
        let piv = (col..vars).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-13 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..vars {
            if r != col {
                let f = m[r][col] / m[col][col];
                if f != 0.0 {
                    for c in col..=vars {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    Some((0..vars).map(|i| m[i][vars] / m[i][i]).collect())
}

/// Bounds on the yield and fraction deviations of the k-th pseudo-Fock state
/// from the true k-photon state under `D`-slice randomization:
/// `dY = sqrt(mu^D k! / (D+k)!)`,
/// `dq = mu^(D/2 + k) e^-mu / (Q sqrt((D+k)!/k!))`.
pub fn discrete_rand_deviation(
    k: usize,
    mu: f64,
    slices: usize,
    gain: f64,
) -> Result<(f64, f64), KeyRateError> {
    if slices < 2 || k >= slices {
        return Err(KeyRateError::InvalidArgument(format!(
            "need D >= 2 and k < D (got k = {k}, D = {slices})"
        )));
    }
    let ln_ratio = ln_factorial(slices + k) - ln_factorial(k);
    let dy = (0.5 * (slices as f64 * mu.ln() - ln_ratio)).exp();
    let dq = ((slices as f64 / 2.0 + k as f64) * mu.ln() - mu - 0.5 * ln_ratio).exp() / gain;
    Ok((dy, dq))
}

/// Relative single-photon fraction inaccuracy `dq_1 / q_1` in the first-order
/// regime `Q = eta mu`, `q_1 = e^-mu`, for each slice count.
pub fn single_photon_inaccuracy(
    mu: f64,
    eta: f64,
    slices: &[usize],
) -> Result<Vec<(usize, f64)>, KeyRateError> {
    slices
        .iter()
        .map(|&d| {
            let (_, dq) = discrete_rand_deviation(1, mu, d, eta * mu)?;
            Ok((d, dq / (-mu).exp()))
        })
        .collect()
}

/// The reference table: `mu = 0.1`, `eta = 1e-6`, `D` in {8, 10, 12, 14, 16}.
pub fn table2() -> Vec<(usize, f64)> {
    single_photon_inaccuracy(0.1, 1e-6, &[8, 10, 12, 14, 16]).expect("valid table arguments")
}
