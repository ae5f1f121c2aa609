//! TOML configuration: the integrability exponent `r(G)`, `iota(G)`, the
//! sieve constants and the computational budgets.
//!
//! Every key is optional:
//!
//! ```toml
//! r_g = "4"          # r(G); iota is derived from it unless set
//! iota = 2
//! c1 = 1.0
//! c2 = 1.0
//!
//! [budgets]
//! oracle_cells = 1000000000
//! optimized_rows = 10000000
//! density_cells = 100000000
//! vertices = 20000
//! trial_division = 1000000
//! rho_iterations = 2000000
//! gcd_samples = 20000
//! gcd_window = 50
//! ```

use std::path::Path;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::FactorBudget;
use crate::enumerate::EnumerationOptions;
use crate::exact;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub oracle_cells: u128,
    pub optimized_rows: u128,
    pub density_cells: u128,
    pub vertices: usize,
    pub trial_division: u64,
    pub rho_iterations: u64,
    pub gcd_samples: usize,
    pub gcd_window: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            oracle_cells: 1_000_000_000,
            optimized_rows: 10_000_000,
            density_cells: crate::densities::DEFAULT_DENSITY_BUDGET,
            vertices: crate::spectral::DEFAULT_VERTEX_BUDGET,
            trial_division: 1_000_000,
            rho_iterations: 2_000_000,
            gcd_samples: 20_000,
            gcd_window: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// `r(G)` as a decimal or fraction string.
    pub r_g: String,
    /// Overrides the value derived from `r_g`.
    pub iota: Option<u32>,
    pub c1: f64,
    pub c2: f64,
    pub budgets: Budgets,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            r_g: "4".into(),
            iota: None,
            c1: 1.0,
            c2: 1.0,
            budgets: Budgets::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let r = self.r_g_exact()?;
        if r < BigRational::from_integer(2.into()) {
            return Err(ConfigError::Invalid(format!("r_g = {r} must be at least 2")));
        }
        if self.iota == Some(0) {
            return Err(ConfigError::Invalid("iota must be at least 1".into()));
        }
        Ok(())
    }

    pub fn r_g_exact(&self) -> Result<BigRational, ConfigError> {
        exact::parse_rational(&self.r_g).map_err(ConfigError::Invalid)
    }

    /// The configured `iota`, or the one derived from `r(G)`.
    pub fn iota(&self) -> u32 {
        self.iota
            .unwrap_or_else(|| crate::engine::iota_from_r_g(&self.r_g_exact().expect("validated")))
    }

    pub fn enumeration_options(&self) -> EnumerationOptions {
        EnumerationOptions {
            oracle_cell_budget: self.budgets.oracle_cells,
            optimized_row_budget: self.budgets.optimized_rows,
            ..Default::default()
        }
    }

    pub fn factor_budget(&self) -> FactorBudget {
        FactorBudget {
            trial_limit: self.budgets.trial_division,
            rho_iterations: self.budgets.rho_iterations,
        }
    }
}
