//! Exhaustive and randomized checks of the algebraic layers.

use std::f64::consts::PI;
use std::sync::Arc;

use phasematch::encoding::{
    mixture_density, observation_point_mass, phase_averaged_pair, poisson_mixture,
    pseudo_fock_mixture, trace_distance,
};
use phasematch::galois::{axiom_violations, coset_imbalance, phase_deviation, prime_power};
use phasematch::qudit::{verify_commuting, verify_lemma_sums, CommutingKernel, StateVector};
use phasematch::{DitString, FieldSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::table::Table;
use crate::{Failure, Report};

/// Deviation allowed for the commuting argument and the lemma sums.
pub const ALGEBRA_TOL: f64 = 1e-10;
/// Slack on top of the truncation tail for the point-mass check.
pub const POINT_MASS_TOL: f64 = 1e-10;
/// Phase-table rounding.
pub const PHASE_TOL: f64 = 1e-12;
/// Largest register size for the exhaustive commuting sweep.
pub const MAX_REGISTER: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Galois,
    Qudit,
    Encoding,
    All,
}

/// One named check and its worst deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub cases: usize,
    pub worst: f64,
    pub bound: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst <= self.bound
    }
}

fn gf(d: u32) -> Arc<FieldSpec> {
    FieldSpec::new(d).expect("supported order")
}

/// `(d, N)` pairs with `d^N <= max_dim`.
pub fn registers(orders: &[u32], max_dim: usize) -> Vec<(u32, usize)> {
    let mut out = Vec::new();
    for &d in orders {
        let mut n = 1;
        while (d as usize).pow(n as u32) <= max_dim {
            out.push((d, n));
            n += 1;
        }
    }
    out
}

pub fn galois_checks() -> Vec<Check> {
    let orders: Vec<u32> = (2..=16).filter(|&d| prime_power(d).is_some()).collect();
    let mut out = Vec::new();
    for &d in &orders {
        let f = gf(d);
        out.push(Check {
            suite: "galois",
            name: format!("axioms GF({d})"),
            cases: (d as usize).pow(3),
            worst: axiom_violations(&f) as f64,
            bound: 0.0,
        });
        out.push(Check {
            suite: "galois",
            name: format!("phase homomorphism GF({d})"),
            cases: (d as usize).pow(2),
            worst: phase_deviation(&f),
            bound: PHASE_TOL,
        });
    }
    for (d, n) in registers(&orders, MAX_REGISTER) {
        out.push(Check {
            suite: "galois",
            name: format!("parity cosets GF({d})^{n}"),
            cases: (d as usize).pow(n as u32),
            worst: coset_imbalance(&gf(d), n) as f64,
            bound: 0.0,
        });
    }
    out
}

/// Commuting argument over every orthogonal pair and the lemma sums, for
/// `d` in {2, 3, 4, 5} and `d^N <= 256`.
pub fn qudit_checks(states: usize, seed: u64) -> Result<Vec<Check>, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (d, n) in registers(&[2, 3, 4, 5], MAX_REGISTER) {
        let f = gf(d);
        let kernel = CommutingKernel::new(&f, n)?;
        let psis = (0..states)
            .map(|_| StateVector::random(&f, n, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(Check {
            suite: "qudit",
            name: format!("commuting d={d} N={n}"),
            cases: states,
            worst: kernel.exhaustive_orthogonal(&psis),
            bound: ALGEBRA_TOL,
        });
        for variant in 1..=3u8 {
            out.push(Check {
                suite: "qudit",
                name: format!("lemma {variant} d={d} N={n}"),
                cases: kernel.dim(),
                worst: verify_lemma_sums(&f, n, variant)?,
                bound: ALGEBRA_TOL,
            });
        }
    }
    // the fast route against dense projectors on small registers
    for (d, n) in registers(&[2, 3, 4, 5], 27) {
        let f = gf(d);
        let kernel = CommutingKernel::new(&f, n)?;
        let mut worst: f64 = 0.0;
        for _ in 0..8 {
            let psi = StateVector::random(&f, n, &mut rng)?;
            let amps: Vec<_> = psi.amplitudes().iter().copied().collect();
            let a = DitString::from_index(&f, n, rng.random_range(0..kernel.dim()));
            let b = DitString::from_index(&f, n, rng.random_range(0..kernel.dim()));
            let dense = verify_commuting(&a, &b, &psi.into())?;
            worst = worst.max((kernel.deviation(&amps, a.digits(), b.digits()) - dense).abs());
        }
        out.push(Check {
            suite: "qudit",
            name: format!("kernel vs dense d={d} N={n}"),
            cases: 8,
            worst,
            bound: ALGEBRA_TOL,
        });
    }
    Ok(out)
}

pub const OBSERVATION_DIMS: [u32; 4] = [2, 3, 5, 7];
pub const OBSERVATION_DELTAS: [f64; 4] = [0.0, 0.3, PI / 2.0, 2.9];
pub const OBSERVATION_MAX_PHOTONS: usize = 6;

/// Point-mass check of the x-correlation for k-photon inputs, plus the
/// phase-randomization decompositions.
pub fn encoding_checks() -> Result<Vec<Check>, Failure> {
    let mut out = Vec::new();
    let n_max = OBSERVATION_MAX_PHOTONS;
    for d in OBSERVATION_DIMS {
        let f = gf(d);
        let mut worst: f64 = 0.0;
        let mut tail: f64 = 0.0;
        let mut spread: f64 = 0.0;
        for k in 0..=n_max {
            let reference = observation_point_mass(k, 0.0, &f, n_max)?;
            for delta in OBSERVATION_DELTAS {
                let c = observation_point_mass(k, delta, &f, n_max)?;
                worst = worst.max(c.deviation - c.tail);
                tail = tail.max(c.tail);
                for (p, q) in c.distribution.iter().zip(&reference.distribution) {
                    spread = spread.max((p - q).abs());
                }
            }
        }
        let cases = (n_max + 1) * OBSERVATION_DELTAS.len();
        out.push(Check {
            suite: "encoding",
            name: format!("x-correlation point mass d={d}"),
            cases,
            worst: worst + tail,
            bound: tail + POINT_MASS_TOL,
        });
        out.push(Check {
            suite: "encoding",
            name: format!("x-correlation offset independence d={d}"),
            cases,
            worst: spread,
            bound: 2.0 * tail + POINT_MASS_TOL,
        });
    }

    let mut worst: f64 = 0.0;
    let cases = [(0.1, 0.0, 16), (0.3, 0.7, 8), (0.5, 2.0, 4), (0.2, 1.1, 17)];
    for (mu, delta, slices) in cases {
        let lhs = phase_averaged_pair(mu, delta, slices, 12)?;
        let rhs = mixture_density(&pseudo_fock_mixture(mu, delta, slices, 12)?)?;
        worst = worst.max(trace_distance(&lhs, &rhs));
    }
    out.push(Check {
        suite: "encoding",
        name: "discrete randomization = pseudo-Fock mixture".into(),
        cases: cases.len(),
        worst,
        bound: ALGEBRA_TOL,
    });

    let mut worst: f64 = 0.0;
    for (mu, delta) in [(0.1, 0.0), (0.5, 1.2)] {
        let lhs = phase_averaged_pair(mu, delta, 64, 12)?;
        let rhs = mixture_density(&poisson_mixture(mu, delta, 12)?)?;
        worst = worst.max(trace_distance(&lhs, &rhs));
    }
    out.push(Check {
        suite: "encoding",
        name: "fine randomization ~ Poisson mixture".into(),
        cases: 2,
        worst,
        bound: 1e-8,
    });
    Ok(out)
}

pub fn run(suite: Suite, cfg: &ExperimentConfig, seed: u64) -> Result<Report, Failure> {
    let states = cfg.states.unwrap_or(100);
    let mut checks = Vec::new();
    if matches!(suite, Suite::Galois | Suite::All) {
        checks.extend(galois_checks());
    }
    if matches!(suite, Suite::Qudit | Suite::All) {
        checks.extend(qudit_checks(states, seed)?);
    }
    if matches!(suite, Suite::Encoding | Suite::All) {
        checks.extend(encoding_checks()?);
    }

    let mut table = Table::new(&[
        "suite",
        "check",
        "cases",
        "worst_deviation",
        "bound",
        "status",
    ]);
    let mut failures = Vec::new();
    for c in &checks {
        if !c.passed() {
            failures.push(format!(
                "{}: {} = {:e} > {:e}",
                c.suite, c.name, c.worst, c.bound
            ));
        }
        table.push(vec![
            c.suite.into(),
            c.name.clone().into(),
            c.cases.into(),
            c.worst.into(),
            c.bound.into(),
            if c.passed() { "pass" } else { "fail" }.into(),
        ]);
    }
    let mut report = Report::new("verify", table, json!({ "states": states }));
    report.failures = failures;
    Ok(report)
}
