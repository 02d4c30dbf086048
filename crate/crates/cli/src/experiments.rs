//! Experiment runners behind the table-producing subcommands.
//!
//! Grids are flattened in a fixed nesting order and evaluated in parallel;
//! rayon's indexed collect keeps rows in grid order.

use std::f64::consts::PI;

use phasematch::channel::{
    gain, n_photon_yield, ChannelParams, Detector, FluctuationMode, MisalignmentModel,
    ProtocolParams,
};
use phasematch::keyrate::{
    decoy_estimate, key_rate, optimize_intensity, plob_for, table2 as table2_values, RatePoint,
};
use phasematch::montecarlo::{compare_with_analytic, simulate, McConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, Intensity};
use crate::table::{Cell, Table};
use crate::{Failure, Report};

/// Reference values of the single-photon inaccuracy table, `D = 8..=16`.
pub const TABLE2_REFERENCE: [(usize, f64); 5] = [
    (8, 0.17),
    (10, 1.6e-3),
    (12, 1.3e-5),
    (14, 8.7e-8),
    (16, 5.3e-10),
];

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn det_name(det: Detector) -> &'static str {
    match det {
        Detector::L => "L",
        Detector::R => "R",
    }
}

/// Light wrapper resolving protocol pieces from a config.
struct Setup<'a> {
    cfg: &'a ExperimentConfig,
}

impl Setup<'_> {
    fn proto(&self, d: u32, mu: f64) -> ProtocolParams {
        let mut p = ProtocolParams::standard(d, mu);
        if let Some(&s) = self.cfg.slices.get(&d) {
            p.slices = s;
        }
        p.ec_efficiency = self.cfg.ec_efficiency;
        p
    }

    fn channel(&self, distance: f64) -> ChannelParams {
        self.cfg.channel.at(distance)
    }

    fn model(&self, offset: f64, half_width: f64) -> MisalignmentModel {
        MisalignmentModel {
            offset,
            half_width,
            mode: self.cfg.fluctuation_mode,
            nodes: self.cfg.quadrature_nodes,
        }
    }

    fn point(
        &self,
        d: u32,
        distance: f64,
        model: &MisalignmentModel,
        intensity: Intensity,
    ) -> Result<RatePoint, Failure> {
        let ch = self.channel(distance);
        Ok(match intensity {
            Intensity::Optimize(_) => optimize_intensity(
                &self.proto(d, 0.1),
                &ch,
                model,
                self.cfg.bracket(),
                self.cfg.truncation(),
            )?,
            Intensity::Fixed(mu) => {
                key_rate(&self.proto(d, mu), &ch, model, self.cfg.truncation())?
            }
        })
    }
}

fn default_distances() -> Vec<f64> {
    (1..=9).map(|i| 50.0 * i as f64).collect()
}

/// Optimized (or fixed-intensity) rate against distance over the full grid
/// `dimension x offset x half-width x distance`.
pub fn rate_curve(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let s = Setup { cfg };
    let dims = cfg.dimensions.clone().unwrap_or_else(|| vec![2, 17]);
    let offsets = cfg
        .offsets_rad
        .clone()
        .unwrap_or_else(|| vec![0.0, PI / 34.0, PI / 3.0, PI / 2.0]);
    let widths = cfg.half_widths_rad.clone().unwrap_or_else(|| vec![0.0]);
    let distances = cfg.distances_km.clone().unwrap_or_else(default_distances);
    let intensity = cfg.intensity.unwrap_or(Intensity::OPTIMIZE);

    let mut grid = Vec::new();
    for &d in &dims {
        for &o in &offsets {
            for &w in &widths {
                for &l in &distances {
                    grid.push((d, o, w, l));
                }
            }
        }
    }
    let rows = grid
        .par_iter()
        .map(|&(d, o, w, l)| {
            let p = s.point(d, l, &s.model(o, w), intensity)?;
            Ok(vec![
                l.into(),
                d.into(),
                s.proto(d, 0.1).slices.into(),
                o.into(),
                w.into(),
                p.intensity.into(),
                p.rate.into(),
                p.mutual_information.into(),
                p.privacy_leakage.into(),
                p.gain.into(),
                plob_for(&s.channel(l)).into(),
            ])
        })
        .collect::<Result<Vec<Vec<Cell>>, Failure>>()?;

    let mut table = Table::new(&[
        "distance_km",
        "dimension",
        "slices",
        "offset_rad",
        "half_width_rad",
        "intensity",
        "rate_bits_per_pulse",
        "mutual_information_bits",
        "privacy_leakage_bits",
        "gain",
        "plob_bits_per_pulse",
    ]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Report::new(
        "rate-curve",
        table,
        json!({
            "dimensions": dims,
            "offsets_rad": offsets,
            "half_widths_rad": widths,
            "distances_km": distances,
            "intensity": intensity,
        }),
    ))
}

/// Rate against a fixed offset over one period `[0, 2 pi / d]`.
pub fn misalignment_sweep(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let s = Setup { cfg };
    let d = cfg.dimensions.as_ref().map_or(17, |v| v[0]);
    let distance = cfg.distances_km.as_ref().map_or(100.0, |v| v[0]);
    let half_width = cfg.half_widths_rad.as_ref().map_or(0.0, |v| v[0]);
    let points = cfg.grid_points.unwrap_or(69);
    let offsets = cfg
        .offsets_rad
        .clone()
        .unwrap_or_else(|| linspace(0.0, 2.0 * PI / d as f64, points));
    let intensity = cfg.intensity.unwrap_or(Intensity::OPTIMIZE);

    let rows = offsets
        .par_iter()
        .map(|&o| {
            let p = s.point(d, distance, &s.model(o, half_width), intensity)?;
            Ok(vec![
                o.into(),
                p.intensity.into(),
                p.rate.into(),
                p.mutual_information.into(),
                p.privacy_leakage.into(),
            ])
        })
        .collect::<Result<Vec<Vec<Cell>>, Failure>>()?;
    let mut table = Table::new(&[
        "offset_rad",
        "intensity",
        "rate_bits_per_pulse",
        "mutual_information_bits",
        "privacy_leakage_bits",
    ]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Report::new(
        "misalignment-sweep",
        table,
        json!({
            "dimension": d,
            "distance_km": distance,
            "half_width_rad": half_width,
            "offsets_rad": offsets,
            "intensity": intensity,
        }),
    ))
}

/// Intensity used at fixed `mu` in the fluctuation study.
fn study_intensity(cfg: &ExperimentConfig, d: u32) -> f64 {
    match cfg.intensity {
        Some(Intensity::Fixed(mu)) => mu,
        _ => match d {
            2 => 0.2,
            17 => 0.03,
            _ => 0.1,
        },
    }
}

/// Three panels over the fluctuation half-width:
/// `a` at fixed intensity, `b` sweeping the intensity at the smallest and
/// largest half-width, `c` with the intensity optimized.
pub fn fluctuation_study(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let s = Setup { cfg };
    let dims = cfg.dimensions.clone().unwrap_or_else(|| vec![2, 17]);
    let distance = cfg.distances_km.as_ref().map_or(300.0, |v| v[0]);
    let offset = cfg.offsets_rad.as_ref().map_or(0.0, |v| v[0]);
    let widths = cfg
        .half_widths_rad
        .clone()
        .unwrap_or_else(|| linspace(0.0, PI / 3.0, 13));
    let sweep = cfg.intensities.clone().unwrap_or_else(|| {
        (0..12)
            .map(|i| (0.01f64.ln() + (30f64).ln() * i as f64 / 11.0).exp())
            .collect()
    });
    let sweep_widths = {
        let mut v = vec![widths[0], *widths.last().expect("non-empty")];
        v.dedup();
        v
    };

    let mut grid: Vec<(&'static str, u32, f64, Intensity)> = Vec::new();
    for &d in &dims {
        for &w in &widths {
            grid.push(("a", d, w, Intensity::Fixed(study_intensity(cfg, d))));
        }
    }
    for &d in &dims {
        for &w in &sweep_widths {
            for &mu in &sweep {
                grid.push(("b", d, w, Intensity::Fixed(mu)));
            }
        }
    }
    for &d in &dims {
        for &w in &widths {
            grid.push(("c", d, w, Intensity::OPTIMIZE));
        }
    }

    let rows = grid
        .par_iter()
        .map(|&(panel, d, w, mu)| {
            let p = s.point(d, distance, &s.model(offset, w), mu)?;
            Ok(vec![
                panel.into(),
                d.into(),
                w.into(),
                p.intensity.into(),
                p.mutual_information.into(),
                p.privacy_leakage.into(),
                p.rate.into(),
            ])
        })
        .collect::<Result<Vec<Vec<Cell>>, Failure>>()?;
    let mut table = Table::new(&[
        "panel",
        "dimension",
        "half_width_rad",
        "intensity",
        "mutual_information_bits",
        "privacy_leakage_bits",
        "rate_bits_per_pulse",
    ]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Report::new(
        "fluctuation-study",
        table,
        json!({
            "dimensions": dims,
            "distance_km": distance,
            "offset_rad": offset,
            "half_widths_rad": widths,
            "swept_intensities": sweep,
            "swept_half_widths_rad": sweep_widths,
        }),
    ))
}

/// High versus low dimension under fluctuation, with and without a fixed
/// offset on the low-dimensional link. `dimensions` is `[high, low]`.
pub fn compare(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let s = Setup { cfg };
    let dims = cfg.dimensions.clone().unwrap_or_else(|| vec![17, 2]);
    let [hi, lo] = dims[..] else {
        return Err(Failure::Config(
            "compare needs exactly two dimensions, [high, low]".into(),
        ));
    };
    let offset = cfg.offsets_rad.as_ref().map_or(PI / 6.0, |v| v[0]);
    let width = cfg.half_widths_rad.as_ref().map_or(PI / 3.0, |v| v[0]);
    let distances = cfg
        .distances_km
        .clone()
        .unwrap_or_else(|| (0..=8).map(|i| 100.0 + 25.0 * i as f64).collect());
    let intensity = cfg.intensity.unwrap_or(Intensity::OPTIMIZE);

    let rows = distances
        .par_iter()
        .map(|&l| {
            let r_hi = s.point(hi, l, &s.model(offset, width), intensity)?;
            let r_lo = s.point(lo, l, &s.model(offset, width), intensity)?;
            let r_lo_fluct = s.point(lo, l, &s.model(0.0, width), intensity)?;
            Ok(vec![
                l.into(),
                r_hi.rate.into(),
                r_lo.rate.into(),
                r_lo_fluct.rate.into(),
            ])
        })
        .collect::<Result<Vec<Vec<Cell>>, Failure>>()?;
    let c_hi = format!("rate_d{hi}_bits_per_pulse");
    let c_lo = format!("rate_d{lo}_misaligned_bits_per_pulse");
    let c_lo_f = format!("rate_d{lo}_fluctuation_only_bits_per_pulse");
    let mut table = Table::new(&["distance_km", &c_hi, &c_lo, &c_lo_f]);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(Report::new(
        "compare",
        table,
        json!({
            "dimensions": [hi, lo],
            "offset_rad": offset,
            "half_width_rad": width,
            "distances_km": distances,
            "intensity": intensity,
        }),
    ))
}

fn decoy_intensities(cfg: &ExperimentConfig, d: u32) -> Vec<f64> {
    cfg.intensities.clone().unwrap_or_else(|| {
        let signal = if d >= 10 { 0.03 } else { 0.1 };
        vec![signal, 0.02, 1e-4]
    })
}

/// Decoy bounds on the low photon-number yields, fed with analytic gains,
/// next to the analytic yields themselves.
pub fn decoy_demo(cfg: &ExperimentConfig) -> Result<Report, Failure> {
    let s = Setup { cfg };
    let dims = cfg.dimensions.clone().unwrap_or_else(|| vec![2, 17]);
    let distances = cfg
        .distances_km
        .clone()
        .unwrap_or_else(|| vec![50.0, 100.0, 200.0]);
    let offsets = cfg.offsets_rad.clone().unwrap_or_else(|| vec![0.0]);
    let widths = cfg.half_widths_rad.clone().unwrap_or_else(|| vec![0.0]);
    let n_cut = cfg.n_cut.unwrap_or(2);

    let mut grid = Vec::new();
    for &d in &dims {
        for &l in &distances {
            for &o in &offsets {
                for &w in &widths {
                    for det in Detector::BOTH {
                        grid.push((d, l, o, w, det));
                    }
                }
            }
        }
    }
    let blocks = grid
        .par_iter()
        .map(|&(d, l, o, w, det)| {
            let ch = s.channel(l);
            let model = s.model(o, w);
            let observed: Vec<(f64, f64)> = decoy_intensities(cfg, d)
                .iter()
                .map(|&mu| (mu, gain(&s.proto(d, mu), &ch, &model, det)))
                .collect();
            let est = decoy_estimate(&observed, n_cut)?;
            let proto = s.proto(d, observed[0].0);
            Ok((0..=n_cut)
                .map(|n| {
                    let y = n_photon_yield(n, &proto, &ch, &model, det);
                    let inside = est.contains(n, y);
                    vec![
                        d.into(),
                        l.into(),
                        o.into(),
                        w.into(),
                        det_name(det).into(),
                        n.into(),
                        y.into(),
                        est.lower[n].into(),
                        est.upper[n].into(),
                        if inside { "yes" } else { "no" }.into(),
                    ]
                })
                .collect::<Vec<Vec<Cell>>>())
        })
        .collect::<Result<Vec<_>, Failure>>()?;

    let mut table = Table::new(&[
        "dimension",
        "distance_km",
        "offset_rad",
        "half_width_rad",
        "detector",
        "photons",
        "yield_analytic",
        "yield_lower",
        "yield_upper",
        "contained",
    ]);
    let mut failures = Vec::new();
    for row in blocks.into_iter().flatten() {
        if row[9].as_str() == Some("no") {
            failures.push(format!(
                "Y_{} not contained for d = {}, L = {} km, detector {}",
                row[5], row[0], row[1], row[4]
            ));
        }
        table.push(row);
    }
    let intensities: Vec<(u32, Vec<f64>)> = dims
        .iter()
        .map(|&d| (d, decoy_intensities(cfg, d)))
        .collect();
    let mut report = Report::new(
        "decoy-demo",
        table,
        json!({
            "dimensions": dims,
            "distances_km": distances,
            "offsets_rad": offsets,
            "half_widths_rad": widths,
            "intensities": intensities,
            "n_cut": n_cut,
        }),
    );
    report.failures = failures;
    Ok(report)
}

/// Largest tolerated deviation, in standard errors, between simulation and model.
pub const MC_SIGMA_LIMIT: f64 = 5.0;

/// Randomized simulator configurations drawn from `seed`.
pub fn mc_configs(cfg: &ExperimentConfig, seed: u64) -> Vec<McConfig> {
    let s = Setup { cfg };
    let dims = cfg
        .dimensions
        .clone()
        .unwrap_or_else(|| vec![2, 3, 5, 7, 17]);
    let rounds = cfg.rounds.unwrap_or(1_000_000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cfg.configs.unwrap_or(10))
        .map(|_| {
            let d = dims[rng.random_range(0..dims.len())];
            let mu = 10f64.powf(rng.random_range(-1.7..-0.3));
            let distance = match &cfg.distances_km {
                Some(v) => v[rng.random_range(0..v.len())],
                None => rng.random_range(0.0..200.0),
            };
            let offset = rng.random_range(0.0..2.0 * PI);
            let half_width = if rng.random_bool(0.5) {
                0.0
            } else {
                rng.random_range(0.0..PI / 3.0)
            };
            let mut model = s.model(offset, half_width);
            model.mode = if rng.random_bool(0.5) {
                FluctuationMode::SingleUniform
            } else {
                FluctuationMode::IndependentPerParty
            };
            let mut channel = s.channel(distance);
            channel.dark_count = 10f64.powf(rng.random_range(-8.0..-4.0));
            McConfig {
                rounds,
                seed: rng.random(),
                proto: s.proto(d, mu),
                channel,
                model,
            }
        })
        .collect()
}

/// Simulated against analytic gains and bit-error vectors.
pub fn mc_check(cfg: &ExperimentConfig, seed: u64) -> Result<Report, Failure> {
    let configs = mc_configs(cfg, seed);
    let mut table = Table::new(&[
        "config",
        "dimension",
        "distance_km",
        "intensity",
        "offset_rad",
        "half_width_rad",
        "quantity",
        "analytic",
        "empirical",
        "std_error",
        "sigma",
    ]);
    let mut failures = Vec::new();
    for (i, mc) in configs.iter().enumerate() {
        let result = simulate(mc)?;
        for c in compare_with_analytic(mc, &result)? {
            if !(c.sigma <= MC_SIGMA_LIMIT) {
                failures.push(format!(
                    "config {i}: {} off by {:.2} sigma",
                    c.quantity, c.sigma
                ));
            }
            table.push(vec![
                i.into(),
                mc.proto.dimension.into(),
                mc.channel.distance.into(),
                mc.proto.intensity.into(),
                mc.model.offset.into(),
                mc.model.half_width.into(),
                c.quantity.into(),
                c.analytic.into(),
                c.empirical.into(),
                c.std_error.into(),
                c.sigma.into(),
            ]);
        }
    }
    let mut report = Report::new("mc-check", table, json!({ "configs": configs }));
    report.failures = failures;
    Ok(report)
}

/// First-order single-photon inaccuracy against slice count.
pub fn table2() -> Result<Report, Failure> {
    let mut table = Table::new(&["slices", "dq1_over_q1", "reference", "relative_error"]);
    for ((d, v), (_, reference)) in table2_values().into_iter().zip(TABLE2_REFERENCE) {
        table.push(vec![
            d.into(),
            v.into(),
            reference.into(),
            ((v - reference).abs() / reference).into(),
        ]);
    }
    Ok(Report::new(
        "table2",
        table,
        json!({ "intensity": 0.1, "transmittance": 1e-6 }),
    ))
}
