//! Experiment configuration. The on-disk form is TOML restricted to flat
//! `key = value` lines under single-level `[section]` headers; see
//! CONFIG.md at the repository root for the grammar.

use std::path::{Path, PathBuf};

use kochergin_core::arithmetic::{AlphaSource, RotationNumber};
use kochergin_core::roof::RoofFunction;
use kochergin_core::spectral::Window;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub alpha: AlphaConfig,
    pub roof: RoofConfig,
    pub margin: MarginConfig,
    pub observable: ObservableConfig,
    pub correlation: CorrelationConfig,
    pub badset: BadsetConfig,
    pub spectrum: SpectrumConfig,
    pub checks: ChecksConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaConfig {
    /// `golden`, `silver`, a decimal such as `0.7548776662`, or
    /// `cf:a1,a2,...` for prescribed partial quotients followed by ones
    pub spec: String,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoofConfig {
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginConfig {
    pub zeta: f64,
    /// Diophantine exponent for the discrepancy bound
    pub xi: f64,
    /// stretch margin eps in the very-good threshold t^{1/2 + 2 eps}
    pub eps: f64,
    /// fallback exponent for the partition level k
    pub beta: f64,
}

/// The localized pair on J = [theta0 - w, theta0 + w] x {s} with
/// w = 1 / (10 q_m).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservableConfig {
    pub box_index: usize,
    pub theta0: f64,
    pub s: f64,
    /// requested half-height; capped at half the minimal return time
    pub half_height: f64,
    pub f_fill: f64,
    pub f_offset: f64,
    pub g_fill: f64,
    pub g_offset: f64,
    pub min_len: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationConfig {
    pub t_max: f64,
    pub step: f64,
    pub du_max: f64,
    pub theta_cap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BadsetConfig {
    /// one bad set per target; l is chosen so that q_n equals the target
    pub q_targets: Vec<f64>,
    pub mesh: usize,
    pub threshold_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub window: String,
    /// half-width T of the periodogram
    pub t_max: f64,
    /// 0 selects the Nyquist frequency
    pub xi_max: f64,
    pub bias_correct: bool,
    pub wiener: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksConfig {
    pub ostrowski_max: u64,
    pub group_samples: usize,
    pub dk_samples: usize,
    pub dk_r_max: usize,
    pub discrepancy_intervals: usize,
    pub discrepancy_k_max: usize,
    pub interval_pairs: usize,
    pub b4_blocks: usize,
    pub measure_samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            output: PathBuf::from("runs/desk"),
            alpha: AlphaConfig::default(),
            roof: RoofConfig::default(),
            margin: MarginConfig::default(),
            observable: ObservableConfig::default(),
            correlation: CorrelationConfig::default(),
            badset: BadsetConfig::default(),
            spectrum: SpectrumConfig::default(),
            checks: ChecksConfig::default(),
        }
    }
}

impl Default for AlphaConfig {
    fn default() -> Self {
        AlphaConfig { spec: "golden".into(), depth: 60 }
    }
}

impl Default for RoofConfig {
    fn default() -> Self {
        RoofConfig { eta: 0.25 }
    }
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig { zeta: 0.05, xi: 0.05, eps: 0.01, beta: 2.0 }
    }
}

impl Default for ObservableConfig {
    fn default() -> Self {
        ObservableConfig {
            box_index: 15,
            theta0: 0.4,
            s: 0.15,
            half_height: 1e9,
            f_fill: 1.0,
            f_offset: 0.5,
            g_fill: 0.7,
            g_offset: 0.45,
            min_len: 0.2,
        }
    }
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig { t_max: 5000.0, step: 0.05, du_max: 20.0, theta_cap: 1.0 / 64.0 }
    }
}

impl Default for BadsetConfig {
    fn default() -> Self {
        BadsetConfig { q_targets: vec![144.0, 233.0, 377.0], mesh: 5, threshold_factor: 2.0 }
    }
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            window: "hann".into(),
            t_max: 200.0,
            xi_max: 0.0,
            bias_correct: true,
            wiener: vec![250.0, 500.0, 1000.0, 2000.0, 4000.0],
        }
    }
}

impl Default for ChecksConfig {
    fn default() -> Self {
        ChecksConfig {
            ostrowski_max: 100_000,
            group_samples: 1000,
            dk_samples: 500,
            dk_r_max: 12,
            discrepancy_intervals: 100,
            discrepancy_k_max: 12,
            interval_pairs: 50,
            b4_blocks: 100,
            measure_samples: 100_000,
        }
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self, CliError> {
        match name {
            "desk" => Ok(Self::default()),
            // small enough for a laptop in well under five minutes
            "minimal" => {
                let mut c = Self::default();
                c.output = PathBuf::from("runs/minimal");
                c.observable.box_index = 9;
                c.correlation.t_max = 200.0;
                c.badset.q_targets = vec![144.0];
                c.spectrum.t_max = 50.0;
                c.spectrum.wiener = vec![25.0, 50.0, 100.0, 200.0];
                c.checks = ChecksConfig {
                    ostrowski_max: 10_000,
                    group_samples: 200,
                    dk_samples: 200,
                    dk_r_max: 12,
                    discrepancy_intervals: 20,
                    discrepancy_k_max: 12,
                    interval_pairs: 10,
                    b4_blocks: 30,
                    measure_samples: 10_000,
                };
                Ok(c)
            }
            _ => Err(CliError::Config(format!("unknown preset {name:?} (expected desk or minimal)"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let c: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn alpha_source(&self) -> Result<AlphaSource, CliError> {
        parse_alpha(&self.alpha.spec)
    }

    pub fn rotation(&self) -> Result<RotationNumber, CliError> {
        RotationNumber::new(self.alpha_source()?, self.alpha.depth).map_err(|e| CliError::module("arithmetic", e, &self.alpha.spec))
    }

    pub fn roof_function(&self) -> Result<RoofFunction, CliError> {
        RoofFunction::new(self.roof.eta).map_err(|e| CliError::ConfigCore(e, format!("eta = {}", self.roof.eta)))
    }

    pub fn window(&self) -> Result<Window, CliError> {
        match self.spectrum.window.as_str() {
            "hann" => Ok(Window::Hann),
            "bartlett" => Ok(Window::Bartlett),
            "rectangular" => Ok(Window::Rectangular),
            w => Err(CliError::Config(format!("unknown window {w:?}"))),
        }
    }

    /// Range checks on every numeric field.
    pub fn validate(&self) -> Result<(), CliError> {
        self.roof_function()?;
        self.alpha_source()?;
        self.window()?;
        // TOML integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            return Err(CliError::Config(format!("seed = {} exceeds {}", self.seed, i64::MAX)));
        }
        let bad = |what: &str, v: f64| Err(CliError::Config(format!("{what} = {v} out of range")));
        let m = &self.margin;
        if !(m.zeta > 0.0 && m.zeta < 0.25) {
            return bad("margin.zeta", m.zeta);
        }
        if !(m.xi > 0.0) {
            return bad("margin.xi", m.xi);
        }
        if !(m.eps > 0.0 && m.eps < 0.25) {
            return bad("margin.eps", m.eps);
        }
        if !(m.beta > 0.0) {
            return bad("margin.beta", m.beta);
        }
        if !(self.alpha.depth >= 8 && self.alpha.depth <= 80) {
            return bad("alpha.depth", self.alpha.depth as f64);
        }
        let o = &self.observable;
        if o.box_index < 2 || o.box_index + 2 >= self.alpha.depth {
            return bad("observable.box_index", o.box_index as f64);
        }
        if !(o.theta0 > 0.0 && o.theta0 < 1.0) {
            return bad("observable.theta0", o.theta0);
        }
        if !(o.s > 0.0) || !(o.half_height > 0.0) || !(o.min_len > 0.0) {
            return bad("observable.s / half_height / min_len", o.s.min(o.half_height).min(o.min_len));
        }
        for (name, fill, off) in [("f", o.f_fill, o.f_offset), ("g", o.g_fill, o.g_offset)] {
            if !(fill > 0.0 && fill <= 1.0 && off > 0.0 && off < 1.0) {
                return Err(CliError::Config(format!("observable.{name}_fill / {name}_offset out of range")));
            }
        }
        let c = &self.correlation;
        if !(c.t_max > 0.0 && c.step > 0.0 && c.step < c.t_max && c.du_max > 0.0 && c.theta_cap > 0.0 && c.theta_cap <= 1.0) {
            return Err(CliError::Config("correlation.t_max / step / du_max / theta_cap out of range".into()));
        }
        let b = &self.badset;
        if b.q_targets.iter().any(|&q| !(q >= 2.0 && q <= 1e5)) || b.mesh == 0 || !(b.threshold_factor >= 0.0) {
            return Err(CliError::Config("badset.q_targets / mesh / threshold_factor out of range".into()));
        }
        let s = &self.spectrum;
        if !(s.t_max > 0.0 && s.t_max <= c.t_max) {
            return bad("spectrum.t_max", s.t_max);
        }
        if !(s.xi_max >= 0.0) {
            return bad("spectrum.xi_max", s.xi_max);
        }
        if s.wiener.iter().any(|&t| !(t > 0.0 && t <= c.t_max)) {
            return Err(CliError::Config("spectrum.wiener entries must lie in (0, correlation.t_max]".into()));
        }
        if self.checks.dk_r_max + 2 >= self.alpha.depth || self.checks.discrepancy_k_max >= self.alpha.depth {
            return Err(CliError::Config("checks.dk_r_max / discrepancy_k_max exceed alpha.depth".into()));
        }
        Ok(())
    }
}

pub fn parse_alpha(spec: &str) -> Result<AlphaSource, CliError> {
    let s = spec.trim();
    match s {
        "golden" => return Ok(AlphaSource::Golden),
        "silver" => return Ok(AlphaSource::Silver),
        _ => {}
    }
    if let Some(list) = s.strip_prefix("cf:") {
        let a = list
            .split(',')
            .map(|x| x.trim().parse::<u64>().ok().filter(|&v| v > 0))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| CliError::Config(format!("bad partial quotient list {list:?}")))?;
        return Ok(AlphaSource::Quotients(a));
    }
    let ok = s.starts_with("0.") && s.len() > 2 && s[2..].bytes().all(|b| b.is_ascii_digit());
    if ok {
        Ok(AlphaSource::Decimal(s.to_string()))
    } else {
        Err(CliError::Config(format!("alpha {spec:?}: expected golden, silver, 0.ddd or cf:a1,a2,...")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut c = ExperimentConfig::default();
        c.roof.eta = 0.1 + 0.2;
        c.observable.theta0 = std::f64::consts::FRAC_1_PI;
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.roof.eta.to_bits(), c.roof.eta.to_bits());
    }

    #[test]
    fn text_is_flat_sections() {
        let text = ExperimentConfig::default().to_toml();
        for line in text.lines().filter(|l| !l.is_empty()) {
            assert!(line.starts_with('[') && !line.contains('.') || line.contains(" = "), "{line}");
        }
    }

    #[test]
    fn bad_eta_is_a_core_error() {
        let err = ExperimentConfig::from_toml("[roof]\neta = 1.5\n").unwrap_err();
        assert!(matches!(err, CliError::ConfigCore(kochergin_core::Error::BadExponent(_), _)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[roof]\nbeta = 1.0\n").is_err());
    }

    #[test]
    fn alpha_specs_parse() {
        assert_eq!(parse_alpha("golden").unwrap(), AlphaSource::Golden);
        assert_eq!(parse_alpha("cf:1,2,3").unwrap(), AlphaSource::Quotients(vec![1, 2, 3]));
        assert_eq!(parse_alpha("0.41421356").unwrap(), AlphaSource::Decimal("0.41421356".into()));
        assert!(parse_alpha("cf:1,0").is_err());
        assert!(parse_alpha("pi").is_err());
    }

    #[test]
    fn presets_validate() {
        for p in ["desk", "minimal"] {
            ExperimentConfig::preset(p).unwrap().validate().unwrap();
        }
        assert!(ExperimentConfig::preset("huge").is_err());
    }
}
