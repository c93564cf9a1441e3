//! Experiment configuration: a versioned TOML schema plus built-in presets.

use std::path::{Path, PathBuf};

use osnr_core::fiberlink::FiberParams;
use osnr_core::spectrum::Osa;
use osnr_core::units::DEFAULT_CENTER_FREQ;
use osnr_core::wfm::{Interval, RegionSet, TxConfig};
use osnr_core::DELTA_A_GRID_DB;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Region geometry as written in the config file. `f_b` and `f_boi` are
/// derived when omitted: the BOI defaults to the occupied band of the
/// transmitter and `F_B` to the rest of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub f_a: Vec<Interval>,
    pub f_n: Vec<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_b: Option<Vec<Interval>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_boi: Option<Interval>,
}

impl Default for RegionSpec {
    fn default() -> Self {
        Self {
            f_a: vec![
                Interval::centered(11.5e9, 1e9),
                Interval::centered(14.5e9, 1e9),
            ],
            f_n: vec![Interval::centered(13e9, 2e9)],
            f_b: None,
            f_boi: None,
        }
    }
}

impl RegionSpec {
    pub fn resolve(&self, tx: &TxConfig) -> osnr_core::Result<RegionSet> {
        let boi = self.f_boi.unwrap_or_else(|| tx.occupied_band());
        match &self.f_b {
            Some(b) => RegionSet::new(self.f_a.clone(), b.clone(), self.f_n.clone(), boi),
            None => RegionSet::from_bands(self.f_a.clone(), self.f_n.clone(), boi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkGrid {
    pub launch_powers_dbm: Vec<f64>,
    pub spans: Vec<usize>,
    pub nf_db: Vec<f64>,
    #[serde(default = "default_center_freq")]
    pub center_freq_hz: f64,
}

fn default_center_freq() -> f64 {
    DEFAULT_CENTER_FREQ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Transmitter noise floor realization (shared by every probe).
    pub nfl: u64,
    /// Base seed of the amplifier noise; each (power, NF) chain derives its
    /// own stream from it.
    pub ase: u64,
    /// Independent ASE realizations averaged per scenario.
    #[serde(default = "one")]
    pub ase_realizations: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    pub osnr_cap_db: f64,
    pub folds: usize,
    pub fold_seed: u64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            osnr_cap_db: osnr_core::estimator::DEFAULT_OSNR_CAP_DB,
            folds: 5,
            fold_seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub dataset: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub tx: TxConfig,
    #[serde(default)]
    pub regions: RegionSpec,
    pub fiber: FiberParams,
    pub link: LinkGrid,
    pub delta_a_grid_db: Vec<f64>,
    pub seeds: Seeds,
    #[serde(default)]
    pub osa: Osa,
    #[serde(default)]
    pub fit: FitSettings,
    pub output: Outputs,
}

/// Named presets shipped with the tool.
pub const PRESETS: [&str; 2] = ["desk", "paper"];

impl ExperimentConfig {
    /// Full simulation parameter set: 2^17 symbols, 0.01 km steps, spans
    /// 1..=30.
    pub fn paper() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: "paper".into(),
            tx: TxConfig::default(),
            regions: RegionSpec::default(),
            fiber: FiberParams::default(),
            link: LinkGrid {
                launch_powers_dbm: vec![-2.0, 0.0, 2.0, 4.0, 6.0],
                spans: (1..=30).collect(),
                nf_db: vec![4.5, 5.5, 6.5, 7.5],
                center_freq_hz: DEFAULT_CENTER_FREQ,
            },
            delta_a_grid_db: DELTA_A_GRID_DB.to_vec(),
            seeds: Seeds {
                nfl: 2,
                ase: 3,
                ase_realizations: 1,
            },
            osa: Osa::default(),
            fit: FitSettings::default(),
            output: Outputs {
                dataset: PathBuf::from("paper_dataset.csv"),
            },
        }
    }

    /// Workstation-scale variant: 2^14 symbols, 0.05 km steps and every
    /// fifth span count.
    pub fn desk() -> Self {
        let mut cfg = Self::paper();
        cfg.name = "desk".into();
        cfg.tx.n_symbols = 1 << 14;
        cfg.fiber.step_km = 0.05;
        cfg.link.spans = vec![1, 5, 10, 15, 20, 25, 30];
        cfg.output.dataset = PathBuf::from("desk_dataset.csv");
        cfg
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(CliError::UnknownPreset(other.to_string())),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Path {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.tx.validate()?;
        self.fiber.validate()?;
        self.osa.validate()?;
        self.regions.resolve(&self.tx)?;
        let grids = [
            ("launch_powers_dbm", self.link.launch_powers_dbm.is_empty()),
            ("spans", self.link.spans.is_empty()),
            ("nf_db", self.link.nf_db.is_empty()),
            ("delta_a_grid_db", self.delta_a_grid_db.is_empty()),
        ];
        for (name, empty) in grids {
            if empty {
                return Err(CliError::Config(format!("grid `{name}` is empty")));
            }
        }
        if self.link.spans.contains(&0) {
            return Err(CliError::Config("span counts must be >= 1".into()));
        }
        if self.seeds.ase_realizations == 0 {
            return Err(CliError::Config("ase_realizations must be >= 1".into()));
        }
        for nf in &self.link.nf_db {
            if !(nf.is_finite() && *nf >= 3.01) {
                return Err(CliError::Config(format!("noise figure {nf} dB is invalid")));
            }
        }
        Ok(())
    }

    pub fn max_spans(&self) -> usize {
        self.link.spans.iter().copied().max().unwrap_or(0)
    }
}
