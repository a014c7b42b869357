//! Run configuration, read from an optional TOML file and overridden by
//! command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bivariate::{CensoringSpec, LikelihoodForm};
use crate::catalog::{ColumnMap, FilterSpec};
use crate::error::{Error, Result};
use crate::evt::DEFAULT_SCAN_GRID;
use crate::hier::{VaryingParam, DEFAULT_VARYING};
use crate::simulate::DEFAULT_LANDMARKS;
use crate::trend::DEFAULT_START_YEAR;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Worker threads; all available cores when absent.
    pub threads: Option<usize>,
    pub columns: ColumnMap,
    /// Records counted as skyscrapers.
    pub tall: FilterSpec,
    pub censoring: CensoringSpec,
    pub trend: TrendConfig,
    pub gpd: GpdConfig,
    pub simulate: SimulateConfig,
    pub bivariate: BivariateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            out: None,
            seed: None,
            threads: None,
            columns: ColumnMap::default(),
            tall: FilterSpec::TALL,
            censoring: CensoringSpec::default(),
            trend: TrendConfig::default(),
            gpd: GpdConfig::default(),
            simulate: SimulateConfig::default(),
            bivariate: BivariateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrendConfig {
    pub start_year: i32,
    /// Last year of data used; the catalog's last year when absent.
    pub end_year: Option<i32>,
    pub forecast_from: i32,
    pub forecast_to: i32,
    pub reps: usize,
    /// Backtest cutoff year.
    pub cutoff: Option<i32>,
    /// Urban population in the last forecast year.
    pub population: f64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        Self {
            start_year: DEFAULT_START_YEAR,
            end_year: None,
            forecast_from: 2018,
            forecast_to: 2050,
            reps: 10_000,
            cutoff: None,
            population: 6.0e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpdConfig {
    pub threshold: f64,
    pub grid: Vec<f64>,
    pub sextile_from: i32,
    pub boot_reps: usize,
    /// Largest order-statistic count for Hill estimates.
    pub hill_max_k: usize,
}

impl Default for GpdConfig {
    fn default() -> Self {
        Self {
            threshold: 225.0,
            grid: DEFAULT_SCAN_GRID.to_vec(),
            sextile_from: DEFAULT_START_YEAR,
            boot_reps: 1000,
            hill_max_k: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_buildings: Option<usize>,
    pub replicates: usize,
    pub landmarks: Vec<f64>,
    pub poisson_n: bool,
    /// Derive `n_buildings` from a trend fit on the input catalog.
    pub auto_n: bool,
    /// Share of skyscrapers above the GPD threshold; empirical when absent.
    pub frac_extreme: Option<f64>,
    pub gpd_json: Option<PathBuf>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub xi: Option<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n_buildings: None,
            replicates: 1000,
            landmarks: DEFAULT_LANDMARKS.to_vec(),
            poisson_n: false,
            auto_n: false,
            frac_extreme: None,
            gpd_json: None,
            mu: None,
            sigma: None,
            xi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BivariateConfig {
    /// Heights at which conditional floor densities are written.
    pub heights: Vec<f64>,
    pub floor_min: u32,
    pub floor_max: u32,
    pub form: LikelihoodForm,
    pub hier: bool,
    pub varying: Vec<VaryingParam>,
    pub fixed_sd: Option<f64>,
    pub max_iter: usize,
}

impl Default for BivariateConfig {
    fn default() -> Self {
        Self {
            heights: vec![1000.0, 1609.34],
            floor_min: 1,
            floor_max: 1000,
            form: LikelihoodForm::default(),
            hier: false,
            varying: DEFAULT_VARYING.to_vec(),
            fixed_sd: None,
            max_iter: 200,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| Error::Argument(format!("{}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::Argument("--seed is required; every command is randomized".into())
        })
    }

    pub fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::Argument("--input is required".into()))
    }

    pub fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Argument("--out is required".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig =
            toml::from_str("seed = 7\n[trend]\ncutoff = 1984\n[columns]\nheight = \"h\"\n")
                .unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.trend.cutoff, Some(1984));
        assert_eq!(c.trend.forecast_to, 2050);
        assert_eq!(c.columns.height, "h");
        assert_eq!(c.columns.city, "city");
        assert_eq!(c.tall, FilterSpec::TALL);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 7").is_err());
    }

    #[test]
    fn defaults_round_trip() {
        let text = toml::to_string(&RunConfig::default()).unwrap();
        assert_eq!(
            toml::from_str::<RunConfig>(&text).unwrap(),
            RunConfig::default()
        );
    }
}
