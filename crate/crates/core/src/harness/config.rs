use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::em::EmConfig;
use crate::error::{Error, Result};
use crate::montecarlo::TrialSetup;
use crate::scene::{reference_targets, AngleGrid, InterferenceConfig, TargetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Convergence,
    Snapshot,
    Ccp,
    Pc,
    EstimationRms,
    PdCurve,
    CfarRho,
    CfarCnr,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Convergence,
        Preset::Snapshot,
        Preset::Ccp,
        Preset::Pc,
        Preset::EstimationRms,
        Preset::PdCurve,
        Preset::CfarRho,
        Preset::CfarCnr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Convergence => "convergence",
            Preset::Snapshot => "snapshot",
            Preset::Ccp => "ccp",
            Preset::Pc => "pc",
            Preset::EstimationRms => "estimation_rms",
            Preset::PdCurve => "pd_curve",
            Preset::CfarRho => "cfar_rho",
            Preset::CfarCnr => "cfar_cnr",
        }
    }

    pub fn needs_threshold(self) -> bool {
        matches!(self, Preset::PdCurve | Preset::CfarRho | Preset::CfarCnr)
    }

    pub fn is_cfar(self) -> bool {
        matches!(self, Preset::CfarRho | Preset::CfarCnr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Matched,
    Mismatched,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::Matched, Scenario::Mismatched];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Matched => "matched",
            Scenario::Mismatched => "mismatched",
        }
    }
}

/// A target as configured; its SINR comes from the experiment's SINR grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub range_bin: usize,
    pub aoa_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub channels: usize,
    pub range_bins: usize,
    pub grid_start_deg: f64,
    pub grid_stop_deg: f64,
    pub grid_step_deg: f64,
    pub noise_power: f64,
    pub cnr_db: f64,
    pub rho_c: f64,
    pub targets: Vec<TargetConfig>,
}

impl SceneConfig {
    pub fn reference(scenario: Scenario) -> Self {
        let i = InterferenceConfig::default();
        Self {
            channels: i.channels,
            range_bins: 24,
            grid_start_deg: -20.0,
            grid_stop_deg: 20.0,
            grid_step_deg: 2.0,
            noise_power: i.noise_power,
            cnr_db: i.cnr_db,
            rho_c: i.rho_c,
            targets: reference_targets(0.0, scenario == Scenario::Mismatched)
                .into_iter()
                .map(|t| TargetConfig {
                    range_bin: t.range_bin,
                    aoa_deg: t.aoa_deg,
                })
                .collect(),
        }
    }

    pub fn grid(&self) -> Result<AngleGrid> {
        AngleGrid::uniform(self.grid_start_deg, self.grid_stop_deg, self.grid_step_deg)
    }

    pub fn interference(&self) -> InterferenceConfig {
        InterferenceConfig {
            channels: self.channels,
            noise_power: self.noise_power,
            cnr_db: self.cnr_db,
            rho_c: self.rho_c,
        }
    }
}

/// A fully resolved experiment: preset defaults with per-key overrides applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub scenario: Scenario,
    pub base_seed: u64,
    /// Trials per SINR point, or per sweep point for the CFAR presets.
    pub n_trials: usize,
    pub sinr_grid: Vec<f64>,
    pub pfa: f64,
    /// H0 trials used to calibrate the threshold.
    pub calibration_trials: usize,
    /// ρ_c values for `cfar_rho`, CNR values in dB for `cfar_cnr`.
    pub sweep_values: Vec<f64>,
    pub scene: SceneConfig,
    pub em: EmConfig,
}

pub const DEFAULT_SEED: u64 = 20_240_601;

fn db_grid(start: i32, stop: i32, step: i32) -> Vec<f64> {
    (start..=stop)
        .step_by(step as usize)
        .map(f64::from)
        .collect()
}

impl ExperimentConfig {
    pub fn preset(preset: Preset, scenario: Scenario) -> Self {
        let mut cfg = Self {
            preset,
            scenario,
            base_seed: DEFAULT_SEED,
            n_trials: 1000,
            sinr_grid: vec![15.0, 20.0],
            pfa: 1e-3,
            calibration_trials: 100_000,
            sweep_values: Vec::new(),
            scene: SceneConfig::reference(scenario),
            em: EmConfig::default(),
        };
        match preset {
            Preset::Convergence => {
                cfg.sinr_grid = db_grid(0, 30, 5);
                cfg.em.max_iters = 6;
                cfg.em.stop_early = false;
            }
            Preset::Snapshot => cfg.n_trials = 1,
            Preset::Ccp | Preset::Pc => {}
            Preset::EstimationRms => cfg.sinr_grid = db_grid(0, 30, 5),
            Preset::PdCurve => cfg.sinr_grid = db_grid(0, 30, 5),
            Preset::CfarRho => {
                cfg.n_trials = 100_000;
                cfg.sinr_grid = Vec::new();
                cfg.sweep_values = vec![0.5, 0.7, 0.9, 0.95, 0.99];
            }
            Preset::CfarCnr => {
                cfg.n_trials = 100_000;
                cfg.sinr_grid = Vec::new();
                cfg.sweep_values = db_grid(5, 30, 5);
            }
        }
        cfg
    }

    /// Resolves a TOML document: `preset` (and optionally `scenario`) select
    /// the defaults, every other key overrides them.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let preset: Preset = match user.get("preset") {
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("preset: {e}")))?,
            None => return Err(Error::Config("missing key `preset`".into())),
        };
        let scenario: Scenario = match user.get("scenario") {
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("scenario: {e}")))?,
            None => Scenario::Matched,
        };
        let defaults = Self::preset(preset, scenario);
        let mut merged = toml::Table::try_from(&defaults)
            .map_err(|e| Error::Config(format!("encoding defaults: {e}")))?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        let curve = !self.preset.is_cfar();
        if curve && self.sinr_grid.is_empty() {
            return bad(format!("preset {} needs a nonempty sinr_grid", self.preset));
        }
        if let Some(s) = self.sinr_grid.iter().find(|s| !s.is_finite()) {
            return bad(format!("sinr_grid entry {s} is not finite"));
        }
        if curve && self.scene.targets.is_empty() {
            return bad(format!("preset {} needs at least one target", self.preset));
        }
        if self.preset.is_cfar() {
            if self.sweep_values.is_empty() {
                return bad(format!(
                    "preset {} needs nonempty sweep_values",
                    self.preset
                ));
            }
            let ok = |v: &f64| match self.preset {
                Preset::CfarRho => (0.0..1.0).contains(v),
                _ => v.is_finite(),
            };
            if let Some(v) = self.sweep_values.iter().find(|v| !ok(v)) {
                return bad(format!("sweep value {v} is out of range"));
            }
        }
        if self.preset.needs_threshold() {
            if !(self.pfa > 0.0 && self.pfa < 1.0) {
                return bad(format!("pfa {} outside (0, 1)", self.pfa));
            }
            if self.pfa * (self.calibration_trials as f64) < 1.0 {
                return bad(format!(
                    "calibration_trials = {} is too small for pfa = {}",
                    self.calibration_trials, self.pfa
                ));
            }
        }
        if self.preset == Preset::Convergence && self.em.stop_early {
            return bad(
                "convergence preset runs a fixed iteration count; set em.stop_early = false".into(),
            );
        }
        self.em
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.scene
            .grid()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.scene
            .interference()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut bins: Vec<usize> = self.scene.targets.iter().map(|t| t.range_bin).collect();
        bins.sort_unstable();
        if let Some(b) = bins.iter().find(|&&b| b == 0 || b > self.scene.range_bins) {
            return bad(format!(
                "target range bin {b} outside 1..={}",
                self.scene.range_bins
            ));
        }
        if bins.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate target range bin".into());
        }
        self.trial_setup(0.0)
            .and_then(|s| s.prepare().map(|_| ()))
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Budgets divided by ten; the false-alarm rate is raised if needed so
    /// that calibration still sees 100 exceedances.
    pub fn scaled_down(&self) -> Self {
        let mut cfg = self.clone();
        if cfg.preset != Preset::Snapshot {
            cfg.n_trials = (cfg.n_trials / 10).max(1);
        }
        cfg.calibration_trials = (cfg.calibration_trials / 10).max(1);
        if cfg.preset.needs_threshold() {
            cfg.pfa = cfg.pfa.max(100.0 / cfg.calibration_trials as f64).min(0.5);
        }
        cfg
    }

    pub fn trial_setup(&self, sinr_db: f64) -> Result<TrialSetup> {
        Ok(TrialSetup {
            range_bins: self.scene.range_bins,
            grid: self.scene.grid()?,
            interference: self.scene.interference(),
            targets: self
                .scene
                .targets
                .iter()
                .map(|t| TargetSpec::new(t.range_bin, t.aoa_deg, sinr_db))
                .collect(),
            em: self.em.clone(),
        })
    }

    /// Nominal interference-only setup used for threshold calibration.
    pub fn null_setup(&self) -> Result<TrialSetup> {
        Ok(self.trial_setup(0.0)?.null_hypothesis())
    }

    pub fn digest(&self) -> String {
        super::digest_json(self)
    }

    pub fn name(&self) -> String {
        format!("{}_{}", self.preset, self.scenario)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}`")))
    }
}

/// `<preset>_<scenario>`, e.g. `pd_curve_mismatched`.
pub fn parse_preset_name(name: &str) -> Result<(Preset, Scenario)> {
    for scenario in Scenario::ALL {
        if let Some(p) = name.strip_suffix(&format!("_{scenario}")) {
            return Ok((p.parse()?, scenario));
        }
    }
    Ok((name.parse()?, Scenario::Matched))
}
