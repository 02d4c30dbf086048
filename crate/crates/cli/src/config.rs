//! JSON experiment configuration.
//!
//! Every field is optional; each subcommand fills the gaps with its own
//! defaults (the reference simulation parameters). Unknown keys are rejected
//! so typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use phasematch::channel::{ChannelParams, FluctuationMode, Truncation};
use phasematch::galois::is_prime;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimize {
    Optimize,
}

/// Either the literal `"optimize"` or a fixed mean photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Intensity {
    Optimize(Optimize),
    Fixed(f64),
}

impl Intensity {
    pub const OPTIMIZE: Intensity = Intensity::Optimize(Optimize::Optimize);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub attenuation_db_per_km: f64,
    pub detector_efficiency: f64,
    pub dark_count: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let s = ChannelParams::standard(0.0);
        ChannelConfig {
            attenuation_db_per_km: s.attenuation,
            detector_efficiency: s.detector_efficiency,
            dark_count: s.dark_count,
        }
    }
}

impl ChannelConfig {
    pub fn at(&self, distance: f64) -> ChannelParams {
        ChannelParams {
            attenuation: self.attenuation_db_per_km,
            distance,
            detector_efficiency: self.detector_efficiency,
            dark_count: self.dark_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Subcommand name; checked against the one invoked when present.
    pub experiment: Option<String>,
    pub dimensions: Option<Vec<u32>>,
    pub distances_km: Option<Vec<f64>>,
    pub offsets_rad: Option<Vec<f64>>,
    pub half_widths_rad: Option<Vec<f64>>,
    pub intensity: Option<Intensity>,
    /// Swept or decoy intensities, depending on the subcommand.
    pub intensities: Option<Vec<f64>>,
    /// Per-dimension slice count `D`; dimensions not listed use the standard choice.
    pub slices: BTreeMap<u32, u32>,
    pub ec_efficiency: f64,
    pub channel: ChannelConfig,
    pub fluctuation_mode: FluctuationMode,
    pub quadrature_nodes: usize,
    pub n_max: usize,
    pub tail_bound: f64,
    pub intensity_bracket: [f64; 2],
    pub grid_points: Option<usize>,
    pub n_cut: Option<usize>,
    pub rounds: Option<u64>,
    pub configs: Option<usize>,
    pub states: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = Truncation::default();
        ExperimentConfig {
            experiment: None,
            dimensions: None,
            distances_km: None,
            offsets_rad: None,
            half_widths_rad: None,
            intensity: None,
            intensities: None,
            slices: BTreeMap::new(),
            ec_efficiency: 0.95,
            channel: ChannelConfig::default(),
            fluctuation_mode: FluctuationMode::default(),
            quadrature_nodes: phasematch::channel::DEFAULT_QUADRATURE_NODES,
            n_max: t.n_max,
            tail_bound: t.tail_bound,
            intensity_bracket: [
                phasematch::keyrate::DEFAULT_BRACKET.0,
                phasematch::keyrate::DEFAULT_BRACKET.1,
            ],
            grid_points: None,
            n_cut: None,
            rounds: None,
            configs: None,
            states: None,
            out: None,
            format: None,
        }
    }
}

/// A configuration problem, pointing at the offending line when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            source: None,
            line: None,
            column: None,
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    /// Resolves the line of `key` in the original text.
    fn locate(mut self, text: &str, source: &str) -> Self {
        self.source = Some(source.to_string());
        if self.line.is_none() {
            if let Some(key) = &self.key {
                let leaf = key.rsplit('.').next().unwrap_or(key);
                self.line = find_key_line(text, leaf);
            }
        }
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let src = self.source.as_deref().unwrap_or("<config>");
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "{src}:{l}:{c}: ")?,
            (Some(l), None) => write!(f, "{src}:{l}: ")?,
            _ => write!(f, "{src}: ")?,
        }
        if let Some(k) = &self.key {
            write!(f, "`{k}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of the first `"key"` used as an object key.
fn find_key_line(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    let mut from = 0;
    while let Some(pos) = text[from..].find(&needle) {
        let at = from + pos;
        let rest = text[at + needle.len()..].trim_start();
        if rest.starts_with(':') {
            return Some(text[..at].matches('\n').count() + 1);
        }
        from = at + needle.len();
    }
    None
}

impl ExperimentConfig {
    /// Parses and validates `text`; `source` names it in error messages.
    pub fn parse(text: &str, source: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            source: Some(source.to_string()),
            line: Some(e.line()),
            column: Some(e.column()),
            key: None,
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|e| e.locate(text, source))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source: Some(path.display().to_string()),
            line: None,
            column: None,
            key: None,
            message: format!("cannot read: {e}"),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn non_empty<T>(key: &str, v: &Option<Vec<T>>) -> Result<(), ConfigError> {
            match v {
                Some(v) if v.is_empty() => Err(ConfigError::new(key, "grid must not be empty")),
                _ => Ok(()),
            }
        }
        fn all_finite(key: &str, v: &Option<Vec<f64>>, min: f64) -> Result<(), ConfigError> {
            for x in v.iter().flatten() {
                if !(x.is_finite() && *x >= min) {
                    return Err(ConfigError::new(
                        key,
                        format!("value {x} must be finite and >= {min}"),
                    ));
                }
            }
            Ok(())
        }

        non_empty("dimensions", &self.dimensions)?;
        non_empty("distances_km", &self.distances_km)?;
        non_empty("offsets_rad", &self.offsets_rad)?;
        non_empty("half_widths_rad", &self.half_widths_rad)?;
        non_empty("intensities", &self.intensities)?;
        all_finite("distances_km", &self.distances_km, 0.0)?;
        all_finite("offsets_rad", &self.offsets_rad, f64::MIN)?;
        all_finite("half_widths_rad", &self.half_widths_rad, 0.0)?;
        for mu in self.intensities.iter().flatten() {
            if !(mu.is_finite() && *mu > 0.0) {
                return Err(ConfigError::new(
                    "intensities",
                    format!("intensity {mu} must be > 0"),
                ));
            }
        }
        for &d in self.dimensions.iter().flatten() {
            if !is_prime(d) {
                return Err(ConfigError::new(
                    "dimensions",
                    format!("dimension {d} must be prime"),
                ));
            }
        }
        for (&d, &s) in &self.slices {
            if s < d || (d < 10 && s % d != 0) {
                return Err(ConfigError::new(
                    "slices",
                    format!("slices {s} for d = {d} must be >= d, and a multiple of d when d < 10"),
                ));
            }
        }
        if let Some(Intensity::Fixed(mu)) = self.intensity {
            if !(mu.is_finite() && mu > 0.0) {
                return Err(ConfigError::new(
                    "intensity",
                    format!("intensity {mu} must be > 0"),
                ));
            }
        }
        if !(self.ec_efficiency > 0.0 && self.ec_efficiency <= 1.0) {
            return Err(ConfigError::new("ec_efficiency", "must lie in (0, 1]"));
        }
        self.channel
            .at(0.0)
            .validate()
            .map_err(|e| ConfigError::new("channel", e.to_string()))?;
        if self.quadrature_nodes == 0 {
            return Err(ConfigError::new("quadrature_nodes", "must be >= 1"));
        }
        if self.n_max == 0 {
            return Err(ConfigError::new("n_max", "must be >= 1"));
        }
        if !(self.tail_bound > 0.0 && self.tail_bound < 1.0) {
            return Err(ConfigError::new("tail_bound", "must lie in (0, 1)"));
        }
        let [lo, hi] = self.intensity_bracket;
        if !(lo > 0.0 && lo < hi && hi <= 0.5) {
            return Err(ConfigError::new(
                "intensity_bracket",
                "need 0 < lo < hi <= 0.5",
            ));
        }
        if matches!(self.grid_points, Some(n) if n < 2) {
            return Err(ConfigError::new("grid_points", "need at least 2 points"));
        }
        if matches!(self.n_cut, Some(n) if n > 4) {
            return Err(ConfigError::new("n_cut", "must be <= 4"));
        }
        if self.rounds == Some(0) {
            return Err(ConfigError::new("rounds", "must be >= 1"));
        }
        if self.configs == Some(0) {
            return Err(ConfigError::new("configs", "must be >= 1"));
        }
        if self.states == Some(0) {
            return Err(ConfigError::new("states", "must be >= 1"));
        }
        Ok(())
    }

    pub fn truncation(&self) -> Truncation {
        Truncation {
            n_max: self.n_max,
            tail_bound: self.tail_bound,
        }
    }

    pub fn bracket(&self) -> (f64, f64) {
        (self.intensity_bracket[0], self.intensity_bracket[1])
    }
}
