//! Experiment configuration: a flat TOML document plus named presets for the
//! six reference experiments.
//!
//! ```toml
//! family = "exponential"          # or "gaussian"
//! null_values = [0.1, 0.2, 0.3]
//! alt_values = [2.0, 3.0]
//! cells = 5                       # M
//! probes = 1                      # K (optional, default 1)
//! anomalies = 1                   # L (optional, default 1)
//! window = 1                      # N (optional, default 1)
//! prior = [0.2, 0.2, 0.2, 0.2, 0.2]   # optional, default uniform
//! truth = "uniform"               # or "fixed" with theta_null / theta_alt
//! tau_c = 0
//! policy = "scpa"                 # "scpa" | "scpa-known-null" | "cusum"
//! statistic = "sallr"             # or "gllr"
//! known_null = 1.0                # required for scpa-known-null
//! c_values = [0.01, 0.001]
//! trials = 2000
//! seed = 7
//! cap = 10000000
//! output = "out.csv"              # optional
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::{Prior, TruthMode};
use crate::error::{Error, Result};
use crate::model::{Family, ParamGrid};
use crate::policy::{NullMode, PolicyConfig, Statistic};
use crate::risk::{PolicySpec, Scenario};

pub const DEFAULT_CAP: u64 = 10_000_000;

pub const PRESETS: [&str; 6] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    Scpa,
    ScpaKnownNull,
    Cusum,
}

impl PolicyName {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::Scpa => "scpa",
            PolicyName::ScpaKnownNull => "scpa-known-null",
            PolicyName::Cusum => "cusum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "scpa" => Some(PolicyName::Scpa),
            "scpa-known-null" => Some(PolicyName::ScpaKnownNull),
            "cusum" => Some(PolicyName::Cusum),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthKind {
    Uniform,
    Fixed,
}

fn one() -> usize {
    1
}

fn default_cap() -> u64 {
    DEFAULT_CAP
}

fn default_statistic() -> Statistic {
    Statistic::Sallr
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    pub null_values: Vec<f64>,
    pub alt_values: Vec<f64>,
    pub cells: usize,
    #[serde(default = "one")]
    pub probes: usize,
    #[serde(default = "one")]
    pub anomalies: usize,
    #[serde(default = "one")]
    pub window: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    pub truth: TruthKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_null: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_alt: Option<f64>,
    pub tau_c: u64,
    pub policy: PolicyName,
    #[serde(default = "default_statistic")]
    pub statistic: Statistic,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_null: Option<f64>,
    pub c_values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub cap: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn tenths(range: std::ops::RangeInclusive<i32>, offset_tenths: i32, step_tenths: i32) -> Vec<f64> {
    range
        .map(|n| f64::from(offset_tenths + step_tenths * n) / 10.0)
        .collect()
}

impl ExperimentConfig {
    fn base(null_values: Vec<f64>, alt_values: Vec<f64>, cells: usize, tau_c: u64) -> Self {
        ExperimentConfig {
            family: Family::Exponential,
            null_values,
            alt_values,
            cells,
            probes: 1,
            anomalies: 1,
            window: 1,
            prior: None,
            truth: TruthKind::Uniform,
            theta_null: None,
            theta_alt: None,
            tau_c,
            policy: PolicyName::Scpa,
            statistic: Statistic::Sallr,
            known_null: None,
            c_values: vec![1e-1, 1e-2, 1e-3, 1e-4],
            trials: 2000,
            seed: 1,
            cap: DEFAULT_CAP,
            output: None,
        }
    }

    /// Reference experiment by name (`fig1` .. `fig6`). The comparison
    /// presets use a fixed truth at the lower median of each parameter set.
    pub fn preset(name: &str) -> Result<Self> {
        let cfg = match name {
            // M=5, null {0.1N : 1<=N<=10}, alt {N : 2<=N<=10}
            "fig1" | "fig2" => Self::base(
                tenths(1..=10, 0, 1),
                tenths(2..=10, 0, 10),
                5,
                if name == "fig1" { 0 } else { 70 },
            ),
            // M=5, null {1+0.1N}, alt {0.5+0.1N : 0<=N<=4} u {2.1+0.1N : 0<=N<=4}
            "fig3" | "fig4" => {
                let nulls = if name == "fig3" {
                    tenths(0..=10, 10, 1)
                } else {
                    tenths(1..=10, 10, 1)
                };
                let mut alts = tenths(0..=4, 5, 1);
                alts.extend(tenths(0..=4, 21, 1));
                Self::base(nulls, alts, 5, if name == "fig3" { 0 } else { 70 })
            }
            // M=4, null {0.1N : 1<=N<=9}, alt {N : 1<=N<=30}, tau_c=20
            "fig5" => {
                let mut cfg = Self::base(tenths(1..=9, 0, 1), tenths(1..=30, 0, 10), 4, 20);
                cfg.truth = TruthKind::Fixed;
                cfg.theta_null = Some(vec![0.5; 4]);
                cfg.theta_alt = Some(15.0);
                cfg.policy = PolicyName::ScpaKnownNull;
                cfg.known_null = Some(0.5);
                cfg
            }
            // M=7, null {10+10N : 1<=N<=9}, alt {0.1+0.5N : 0<=N<=37}, tau_c=0
            "fig6" => {
                let mut cfg = Self::base(tenths(1..=9, 100, 100), tenths(0..=37, 1, 5), 7, 0);
                cfg.truth = TruthKind::Fixed;
                cfg.theta_null = Some(vec![60.0; 7]);
                cfg.theta_alt = Some(9.1);
                cfg.policy = PolicyName::ScpaKnownNull;
                cfg.known_null = Some(60.0);
                cfg
            }
            _ => {
                return Err(Error::config(
                    "preset",
                    format!(
                        "unknown preset `{name}` (expected one of {})",
                        PRESETS.join(", ")
                    ),
                ))
            }
        };
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Single-line JSON form, used in trace headers.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises to JSON")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario().map(|_| ())
    }

    pub fn grid(&self) -> Result<ParamGrid> {
        let grid = ParamGrid::from_sets(&self.null_values, &self.alt_values)?;
        grid.check_family(self.family)?;
        Ok(grid)
    }

    pub fn null_mode(&self) -> Result<NullMode> {
        match self.policy {
            PolicyName::ScpaKnownNull => self
                .known_null
                .map(|theta0| NullMode::Known { theta0 })
                .ok_or_else(|| Error::config("known_null", "required for policy scpa-known-null")),
            _ => Ok(NullMode::Unknown),
        }
    }

    /// Same experiment under another policy. Switching to the known-null
    /// policy without a `known_null` value is a validation error later.
    pub fn with_policy(&self, policy: PolicyName) -> Self {
        let mut cfg = self.clone();
        cfg.policy = policy;
        cfg
    }

    /// Validates every field and resolves the runnable scenario.
    pub fn scenario(&self) -> Result<Scenario> {
        let grid = self.grid()?;
        if self.cells == 0 {
            return Err(Error::config("cells", "at least one cell is required"));
        }
        let prior = match &self.prior {
            Some(p) if p.len() != self.cells => {
                return Err(Error::config(
                    "prior",
                    format!("expected {} entries, got {}", self.cells, p.len()),
                ))
            }
            Some(p) => Prior::new(p.clone())?,
            None => Prior::uniform(self.cells),
        };
        let truth_mode = match self.truth {
            TruthKind::Uniform => TruthMode::UniformDraw,
            TruthKind::Fixed => {
                let theta_null = self
                    .theta_null
                    .clone()
                    .ok_or_else(|| Error::config("theta_null", "required for fixed truth"))?;
                let theta_alt = self
                    .theta_alt
                    .ok_or_else(|| Error::config("theta_alt", "required for fixed truth"))?;
                if theta_null.len() != self.cells {
                    return Err(Error::config(
                        "theta_null",
                        format!("expected {} entries, got {}", self.cells, theta_null.len()),
                    ));
                }
                for (j, &v) in theta_null.iter().enumerate() {
                    if !grid.index_of(v).is_some_and(|i| grid.is_null(i)) {
                        return Err(Error::config(
                            format!("theta_null[{j}]"),
                            format!("{v} is not in null_values"),
                        ));
                    }
                }
                if !grid.index_of(theta_alt).is_some_and(|i| !grid.is_null(i)) {
                    return Err(Error::config(
                        "theta_alt",
                        format!("{theta_alt} is not in alt_values"),
                    ));
                }
                TruthMode::Fixed {
                    theta_null,
                    theta_alt,
                }
            }
        };
        if self.c_values.is_empty() {
            return Err(Error::config("c_values", "at least one cost is required"));
        }
        for &c in &self.c_values {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::config("c_values", format!("{c} is not in (0, 1)")));
            }
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "at least one trial is required"));
        }
        if self.cap == 0 {
            return Err(Error::config("cap", "must be at least 1"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::config("seed", "must fit in a signed 64-bit integer"));
        }
        let policy = match self.policy {
            PolicyName::Cusum => {
                if self.probes != 1 || self.anomalies != 1 {
                    return Err(Error::config(
                        "policy",
                        "cusum supports one probe per step and a single anomaly",
                    ));
                }
                PolicySpec::Cusum
            }
            PolicyName::Scpa | PolicyName::ScpaKnownNull => {
                let null_mode = self.null_mode()?;
                let cfg = PolicyConfig {
                    c: self.c_values[0],
                    null_mode,
                    statistic: self.statistic,
                    window: self.window,
                    probes: self.probes,
                    anomalies: self.anomalies,
                };
                cfg.validate(&grid, self.cells)?;
                PolicySpec::Scpa {
                    null_mode,
                    statistic: self.statistic,
                    window: self.window,
                    probes: self.probes,
                }
            }
        };
        if self.anomalies == 0 || self.anomalies > self.cells {
            return Err(Error::config("anomalies", "must be between 1 and cells"));
        }
        Ok(Scenario {
            family: self.family,
            grid,
            cells: self.cells,
            prior,
            truth_mode,
            tau_c: self.tau_c,
            anomalies: self.anomalies,
            policy,
            cap: self.cap,
        })
    }
}

/// Loads and validates a TOML config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_toml_str(&text)
}
