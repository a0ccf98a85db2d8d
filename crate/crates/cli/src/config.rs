use std::path::{Path, PathBuf};

use dyson_rg::critparam::Side;
use dyson_rg::density::{GridSpec, ModelParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        Self {
            l: g.half_width,
            n: g.nodes,
        }
    }
}

/// Geometric offsets |t - t_c| = range * 2^e for e evenly spaced in [lo_exp, hi_exp].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OffsetConfig {
    pub lo_exp: f64,
    pub hi_exp: f64,
    pub count: usize,
}

impl Default for OffsetConfig {
    fn default() -> Self {
        Self {
            lo_exp: -10.0,
            hi_exp: -4.0,
            count: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum At {
    Gaussian,
    NonGaussian,
}

/// Every parameter of every command. Values come from the defaults, then the
/// JSON file given by `--config`, then command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub a: f64,
    /// When set, a = 3/2 + epsilon.
    pub epsilon: Option<f64>,
    pub grid: GridConfig,
    pub output_dir: PathBuf,
    /// Worker threads; all cores when unset. Results do not depend on it.
    pub threads: Option<usize>,
    /// Work at the non-Gaussian fixed point instead of the Gaussian one.
    pub non_gaussian: bool,
    /// Hermite basis size of the non-Gaussian solver.
    pub hermite_m: usize,
    /// Density JSON of the non-Gaussian fixed point; `<output_dir>/fixed_point_density.json` when unset.
    pub fixed_point: Option<PathBuf>,
    /// Number of eigenpairs.
    pub k: usize,
    /// RG steps per probe flow.
    pub m_max: usize,
    /// Final bracket width; 1e-12 times the family range when unset.
    pub tol_t: Option<f64>,
    /// Quartic coefficient of the one-parameter family; family default when unset.
    pub b4: Option<f64>,
    /// Skip the critical search and use this t_c.
    pub t_c: Option<f64>,
    /// Explicit parameters for the observables; overrides `offsets` and `side`.
    pub t_values: Option<Vec<f64>>,
    pub offsets: OffsetConfig,
    pub side: Side,
    /// RG step budget per observable point.
    pub n_max: usize,
    /// Flow start: family member at this t, unless `variance` is set.
    pub t: f64,
    /// Flow start: centred Gaussian of this variance.
    pub variance: Option<f64>,
    pub flow_steps: usize,
    /// Oracle depth (volume 2^n).
    pub n: u32,
    pub beta: f64,
    /// Oracle single-spin measure: the coin when unset, otherwise a random
    /// symmetric measure drawn from this seed.
    pub seed: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            a: 1.25,
            epsilon: None,
            grid: GridConfig::default(),
            output_dir: PathBuf::from("."),
            threads: None,
            non_gaussian: false,
            hermite_m: 12,
            fixed_point: None,
            k: 5,
            m_max: 400,
            tol_t: None,
            b4: None,
            t_c: None,
            t_values: None,
            offsets: OffsetConfig::default(),
            side: Side::Both,
            n_max: 400,
            t: 0.0,
            variance: None,
            flow_steps: 60,
            n: 3,
            beta: 1.0,
            seed: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::missing(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        ModelParams::new(self.effective_a()).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn effective_a(&self) -> f64 {
        self.epsilon.map_or(self.a, |e| 1.5 + e)
    }

    pub fn grid_spec(&self) -> Result<GridSpec, CliError> {
        GridSpec::new(self.grid.l, self.grid.n).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn fixed_point_path(&self) -> PathBuf {
        self.fixed_point
            .clone()
            .unwrap_or_else(|| self.output_dir.join("fixed_point_density.json"))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        self.grid_spec()?;
        let bad = |what: &str| Err(CliError::config(what.to_string()));
        if self.threads == Some(0) {
            return bad("threads must be >= 1");
        }
        if !(8..=16).contains(&self.hermite_m) {
            return bad("hermite_m must be in 8..=16");
        }
        if !(1..=10).contains(&self.k) {
            return bad("k must be in 1..=10");
        }
        if self.m_max == 0 || self.n_max == 0 || self.flow_steps == 0 {
            return bad("step budgets must be >= 1");
        }
        if let Some(t) = self.tol_t {
            if !(t > 0.0) {
                return bad("tol_t must be > 0");
            }
        }
        if let Some(b4) = self.b4 {
            if !(b4 <= 0.0) {
                return bad("b4 must be <= 0");
            }
        }
        if self.offsets.count == 0 || !(self.offsets.lo_exp <= self.offsets.hi_exp) {
            return bad("offsets need count >= 1 and lo_exp <= hi_exp");
        }
        if let Some(v) = self.variance {
            if !(v > 0.0) {
                return bad("variance must be > 0");
            }
        }
        if !(1..=4).contains(&self.n) {
            return bad("oracle n must be in 1..=4");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be finite and >= 0");
        }
        Ok(())
    }
}
