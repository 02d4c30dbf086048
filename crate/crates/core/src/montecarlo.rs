//! Round-by-round sampling of the detection model, used as an independent
//! check on the analytic gains and bit-error vectors.
//!
//! Rounds are split into chunks of [`CHUNK_ROUNDS`]; chunk `c` draws from the
//! ChaCha8 stream `c` of the configured seed, so results do not depend on
//! the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{
    bit_error_vector, click_probs_at, encoding_phase, gain, group_shift, ChannelError,
    ChannelParams, Detector, MisalignmentModel, ProtocolParams,
};

pub const CHUNK_ROUNDS: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub rounds: u64,
    pub seed: u64,
    pub proto: ProtocolParams,
    pub channel: ChannelParams,
    pub model: MisalignmentModel,
}

impl McConfig {
    /// Like the analytic validation, but a dark-count probability of exactly 1
    /// is allowed here.
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.rounds == 0 {
            return Err(ChannelError::InvalidParameter("rounds must be >= 1".into()));
        }
        self.proto.validate()?;
        self.model.validate()?;
        let mut ch = self.channel;
        if ch.dark_count == 1.0 {
            ch.dark_count = 0.0;
        }
        ch.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    NoClick = 0,
    Double = 1,
    L = 2,
    R = 3,
}

/// Aggregated simulation counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub rounds: u64,
    /// Row `k` (encoding difference `kappa_a - kappa_b mod d`), columns
    /// `[no-click, double, L, R]`.
    pub counts: Vec<[u64; 4]>,
    pub groups: Vec<McGroup>,
}

/// Empirical statistics of one click group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McGroup {
    pub detector: Detector,
    pub gain: f64,
    pub gain_std_error: f64,
    /// Re-indexed like the analytic bit-error vector.
    pub bit_error: Vec<f64>,
    pub bit_error_std_error: Vec<f64>,
    pub clicks: u64,
}

fn draw_round(
    rng: &mut ChaCha8Rng,
    proto: &ProtocolParams,
    eta: f64,
    dark: f64,
    model: &MisalignmentModel,
) -> (usize, Outcome) {
    let d = proto.dimension;
    let ka = rng.random_range(0..d);
    let kb = rng.random_range(0..d);
    let k = (ka + d - kb) % d;
    let delta = model.sample(rng);
    let (pl, pr) = click_probs_at(proto.intensity, encoding_phase(k, d) + delta, eta, dark);
    let l = rng.random::<f64>() < pl;
    let r = rng.random::<f64>() < pr;
    let outcome = match (l, r) {
        (false, false) => Outcome::NoClick,
        (true, true) => Outcome::Double,
        (true, false) => Outcome::L,
        (false, true) => Outcome::R,
    };
    (k as usize, outcome)
}

/// Runs the simulation. Same config, same result, bit for bit.
pub fn simulate(config: &McConfig) -> Result<McResult, ChannelError> {
    config.validate()?;
    let d = config.proto.dimension as usize;
    let eta = config.channel.transmittance();
    let dark = config.channel.dark_count;
    let chunks = config.rounds.div_ceil(CHUNK_ROUNDS);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(c);
            let n = CHUNK_ROUNDS.min(config.rounds - c * CHUNK_ROUNDS);
            let mut local = vec![[0u64; 4]; d];
            for _ in 0..n {
                let (k, o) = draw_round(&mut rng, &config.proto, eta, dark, &config.model);
                local[k][o as usize] += 1;
            }
            local
        })
        .reduce(
            || vec![[0u64; 4]; d],
            |mut a, b| {
                for (ra, rb) in a.iter_mut().zip(&b) {
                    for (x, y) in ra.iter_mut().zip(rb) {
                        *x += y;
                    }
                }
                a
            },
        );

    let n = config.rounds as f64;
    let groups = Detector::BOTH
        .iter()
        .map(|&det| {
            let col = match det {
                Detector::L => Outcome::L,
                Detector::R => Outcome::R,
            } as usize;
            let shift = group_shift(d as u32, det) as usize;
            let clicks: u64 = counts.iter().map(|r| r[col]).sum();
            let g = clicks as f64 / n;
            let (bit_error, bit_error_std_error) = (0..d)
                .map(|k| {
                    if clicks == 0 {
                        return (0.0, 0.0);
                    }
                    let e = counts[(k + shift) % d][col] as f64 / clicks as f64;
                    (e, (e * (1.0 - e) / clicks as f64).sqrt())
                })
                .unzip();
            McGroup {
                detector: det,
                gain: g,
                gain_std_error: (g * (1.0 - g) / n).sqrt(),
                bit_error,
                bit_error_std_error,
                clicks,
            }
        })
        .collect();
    Ok(McResult {
        rounds: config.rounds,
        counts,
        groups,
    })
}

/// One analytic-versus-empirical comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McComparison {
    pub quantity: String,
    pub analytic: f64,
    pub empirical: f64,
    /// Binomial standard error from the analytic probability.
    pub std_error: f64,
    /// Continuity-corrected deviation in standard errors.
    pub sigma: f64,
}

fn z_score(count: u64, trials: u64, p: f64) -> f64 {
    let expected = trials as f64 * p;
    let var = trials as f64 * p * (1.0 - p);
    let dev = ((count as f64 - expected).abs() - 0.5).max(0.0);
    if var > 0.0 {
        dev / var.sqrt()
    } else if dev == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Compares gains and bit-error entries against the analytic model.
pub fn compare_with_analytic(
    config: &McConfig,
    result: &McResult,
) -> Result<Vec<McComparison>, ChannelError> {
    let mut out = Vec::new();
    for g in &result.groups {
        let tag = match g.detector {
            Detector::L => "L",
            Detector::R => "R",
        };
        let q = gain(&config.proto, &config.channel, &config.model, g.detector);
        out.push(McComparison {
            quantity: format!("Q_{tag}"),
            analytic: q,
            empirical: g.gain,
            std_error: (q * (1.0 - q) / result.rounds as f64).sqrt(),
            sigma: z_score(g.clicks, result.rounds, q),
        });
        if g.clicks == 0 {
            continue;
        }
        let e = bit_error_vector(&config.proto, &config.channel, &config.model, g.detector)?;
        for (k, (&ea, &ee)) in e.iter().zip(&g.bit_error).enumerate() {
            let count = (ee * g.clicks as f64).round() as u64;
            out.push(McComparison {
                quantity: format!("E_{tag}[{k}]"),
                analytic: ea,
                empirical: ee,
                std_error: (ea * (1.0 - ea) / g.clicks as f64).sqrt(),
                sigma: z_score(count, g.clicks, ea),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn config(rounds: u64, channel: ChannelParams) -> McConfig {
        McConfig {
            rounds,
            seed: 42,
            proto: ProtocolParams::standard(2, 0.2),
            channel,
            model: MisalignmentModel::fixed(0.0),
        }
    }

    #[test]
    fn no_light_no_clicks() {
        let ch = ChannelParams {
            detector_efficiency: 0.0,
            dark_count: 0.0,
            ..ChannelParams::standard(10.0)
        };
        let r = simulate(&config(100_000, ch)).unwrap();
        let none: u64 = r.counts.iter().map(|c| c[0]).sum();
        assert_eq!(none, 100_000);
    }

    #[test]
    fn certain_dark_counts_give_double_clicks() {
        let ch = ChannelParams {
            dark_count: 1.0,
            ..ChannelParams::standard(10.0)
        };
        let r = simulate(&config(70_000, ch)).unwrap();
        let double: u64 = r.counts.iter().map(|c| c[1]).sum();
        assert_eq!(double, 70_000);
    }

    #[test]
    fn counts_sum_to_rounds_and_replay() {
        let cfg = config(200_001, ChannelParams::standard(20.0));
        let a = simulate(&cfg).unwrap();
        let total: u64 = a.counts.iter().flatten().sum();
        assert_eq!(total, 200_001);
        let b = simulate(&cfg).unwrap();
        assert_eq!(a, b);
        let other = simulate(&McConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.counts, other.counts);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let cfg = config(300_000, ChannelParams::standard(5.0));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let serial = pool.install(|| simulate(&cfg).unwrap());
        assert_eq!(serial, simulate(&cfg).unwrap());
    }

    #[test]
    fn agrees_with_analytic_model() {
        let mut cfg = config(1_000_000, ChannelParams::standard(100.0));
        cfg.model = MisalignmentModel::fluctuating(
            0.3,
            0.4,
            crate::channel::FluctuationMode::IndependentPerParty,
        );
        cfg.proto = ProtocolParams::standard(3, 0.3);
        let r = simulate(&cfg).unwrap();
        for c in compare_with_analytic(&cfg, &r).unwrap() {
            assert!(c.sigma <= 5.0, "{c:?}");
        }
    }

    #[test]
    fn four_way_law_per_cell() {
        // chi-square of the outcome counts in each encoding-difference row
        let mut cfg = config(2_000_000, ChannelParams::standard(0.0));
        cfg.proto = ProtocolParams::standard(3, 0.5);
        cfg.model = MisalignmentModel::fixed(PI / 5.0);
        let r = simulate(&cfg).unwrap();
        let eta = cfg.channel.transmittance();
        for (k, row) in r.counts.iter().enumerate() {
            let n: u64 = row.iter().sum();
            let (pl, pr) = click_probs_at(0.5, encoding_phase(k as u32, 3) + PI / 5.0, eta, 1e-8);
            let p = [
                (1.0 - pl) * (1.0 - pr),
                pl * pr,
                pl * (1.0 - pr),
                pr * (1.0 - pl),
            ];
            let chi2: f64 = row
                .iter()
                .zip(p)
                .filter(|(_, p)| *p * n as f64 > 5.0)
                .map(|(&c, p)| {
                    let e = p * n as f64;
                    (c as f64 - e).powi(2) / e
                })
                .sum();
            // 3 degrees of freedom; 0.999 quantile is 16.27
            assert!(chi2 < 16.27, "row {k}: chi2 = {chi2}");
        }
    }

    #[test]
    fn z_score_edge_cases() {
        assert_eq!(z_score(0, 100, 0.0), 0.0);
        assert_eq!(z_score(3, 100, 0.0), f64::INFINITY);
        assert_eq!(z_score(50, 100, 0.5), 0.0);
    }
}
