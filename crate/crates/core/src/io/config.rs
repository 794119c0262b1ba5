//! Run configuration: a TOML file with one section per concern.
//!
//! ```toml
//! [search]
//! H = 12
//! epochs = 50
//!
//! [operators]
//! p_node = 0.3
//! ```
//!
//! Every key is optional; unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Simplex-lattice divisions.
    #[serde(rename = "H")]
    pub h: usize,
    /// Neighbourhood size.
    #[serde(rename = "K")]
    pub k: usize,
    /// Population capacity; 0 means twice the number of weights.
    #[serde(rename = "N")]
    pub n: usize,
    pub epochs: usize,
    pub delta: f64,
    pub theta: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { h: 12, k: 4, n: 0, epochs: 50, delta: 0.9, theta: 5.0, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub p_node: f64,
    pub p_tree: f64,
    pub tau: f64,
    /// Points in the logarithmic LASSO penalty grid.
    pub lasso_lambda_grid: usize,
    pub depth_budget: usize,
    pub max_nodes: usize,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig { p_node: 0.3, p_tree: 0.2, tau: 0.15, lasso_lambda_grid: 5, depth_budget: 4, max_nodes: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlConfig {
    pub atoms: Vec<String>,
    pub objectives: Vec<String>,
    pub ensemble_k: usize,
    pub sigma_p: f64,
    /// Grid-refine each regressor's hyperparameters on a validation split.
    pub tune_hyperparams: bool,
    pub min_window: usize,
    pub max_window: usize,
}

impl Default for MlConfig {
    fn default() -> Self {
        MlConfig {
            atoms: ["lag", "linear", "ridge", "knn", "dtree"].map(String::from).to_vec(),
            objectives: ["rmse", "robust"].map(String::from).to_vec(),
            ensemble_k: 16,
            sigma_p: 0.05,
            tune_hyperparams: false,
            min_window: 4,
            max_window: 48,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExprConfig {
    pub atoms: Vec<String>,
    pub objectives: Vec<String>,
    /// Most products under the top-level sum.
    pub max_terms: usize,
    /// Most tokens in one product.
    pub max_factors: usize,
}

impl Default for ExprConfig {
    fn default() -> Self {
        ExprConfig {
            atoms: ["sin", "poly", "pulse"].map(String::from).to_vec(),
            objectives: ["rmse", "complexity"].map(String::from).to_vec(),
            max_terms: 4,
            max_factors: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeConfig {
    /// Right-hand side term, e.g. `u_t` or `u_tt`.
    pub target: String,
    /// Candidate left-hand side terms.
    pub terms: Vec<String>,
    pub objectives: Vec<String>,
    /// Gaussian smoothing width in grid steps before differencing.
    pub smoothing: f64,
}

impl Default for PdeConfig {
    fn default() -> Self {
        PdeConfig {
            target: "u_t".into(),
            terms: ["u", "u^2", "u_t*u", "u_t", "u_tt", "const"].map(String::from).to_vec(),
            objectives: ["residual", "complexity"].map(String::from).to_vec(),
            smoothing: 3.0,
        }
    }
}

/// Dataset source. Without a path the synthetic multi-scale series is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub n: usize,
    pub dt: f64,
    pub noise_std: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { path: None, n: 2048, dt: 1.0, noise_std: 0.05 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub search: SearchConfig,
    pub operators: OperatorConfig,
    pub ml: MlConfig,
    pub expr: ExprConfig,
    pub pde: PdeConfig,
    pub data: DataConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]`, if present.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if let Some(s) = l.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = s.trim().to_string();
        } else if current == section {
            if let Some((k, _)) = l.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// Negative integers would otherwise surface as opaque type errors.
fn reject_negative(text: &str, table: &toml::Table) -> Result<(), ConfigError> {
    for (section, value) in table {
        let Some(inner) = value.as_table() else { continue };
        for (key, v) in inner {
            if let Some(i) = v.as_integer() {
                if i < 0 {
                    return Err(ConfigError {
                        line: locate(text, section, key),
                        key: Some(key.clone()),
                        message: format!("{key} must be ≥ 0"),
                    });
                }
            }
        }
    }
    Ok(())
}

fn check(cfg: &Config, text: &str) -> Result<(), ConfigError> {
    let fail = |section: &str, key: &str, message: String| ConfigError {
        line: locate(text, section, key),
        key: Some(key.to_string()),
        message,
    };
    let prob = |section: &str, key: &str, v: f64| {
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(fail(section, key, format!("{key} must lie in [0, 1], got {v}")))
        }
    };
    prob("search", "delta", cfg.search.delta)?;
    prob("operators", "p_node", cfg.operators.p_node)?;
    prob("operators", "p_tree", cfg.operators.p_tree)?;
    prob("operators", "tau", cfg.operators.tau)?;
    if cfg.search.h < 1 {
        return Err(fail("search", "H", "H must be ≥ 1".into()));
    }
    if cfg.search.k < 1 {
        return Err(fail("search", "K", "K must be ≥ 1".into()));
    }
    if !(cfg.search.theta >= 0.0) {
        return Err(fail("search", "theta", "theta must be ≥ 0".into()));
    }
    if cfg.operators.lasso_lambda_grid < 1 {
        return Err(fail("operators", "lasso_lambda_grid", "lasso_lambda_grid must be ≥ 1".into()));
    }
    if cfg.operators.depth_budget < 1 || cfg.operators.max_nodes < 1 {
        return Err(fail("operators", "depth_budget", "depth_budget and max_nodes must be ≥ 1".into()));
    }
    if cfg.ml.ensemble_k < 2 {
        return Err(fail("ml", "ensemble_k", "ensemble_k must be ≥ 2".into()));
    }
    if !(cfg.ml.sigma_p >= 0.0) {
        return Err(fail("ml", "sigma_p", "sigma_p must be ≥ 0".into()));
    }
    if cfg.ml.min_window < 1 || cfg.ml.min_window > cfg.ml.max_window {
        return Err(fail("ml", "min_window", "need 1 ≤ min_window ≤ max_window".into()));
    }
    if cfg.expr.max_terms < 1 || cfg.expr.max_factors < 1 {
        return Err(fail("expr", "max_terms", "max_terms and max_factors must be ≥ 1".into()));
    }
    if !(cfg.pde.smoothing >= 0.0) {
        return Err(fail("pde", "smoothing", "smoothing must be ≥ 0".into()));
    }
    if !(cfg.data.dt > 0.0) {
        return Err(fail("data", "dt", "dt must be > 0".into()));
    }
    Ok(())
}

pub fn parse_config_str(text: &str) -> Result<Config, ConfigError> {
    let table: toml::Table = toml::from_str(text).map_err(|e| de_error(text, &e))?;
    reject_negative(text, &table)?;
    let cfg: Config = toml::from_str(text).map_err(|e| de_error(text, &e))?;
    check(&cfg, text)?;
    Ok(cfg)
}

fn de_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let message = e.message().to_string();
    let key = message
        .strip_prefix("unknown field `")
        .and_then(|s| s.split('`').next())
        .map(String::from);
    ConfigError { line: e.span().map(|s| line_of(text, s.start)), key, message }
}

pub fn parse_config(path: &Path) -> Result<Config, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError {
        line: None,
        key: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config_str(&text)
}

/// Canonical text of a configuration; parses back to the same value.
pub fn dump_config(cfg: &Config) -> String {
    toml::to_string(cfg).expect("config serialises")
}

/// Short digest identifying a configuration in exported artifacts.
pub fn config_hash(cfg: &Config) -> String {
    let digest = Sha256::digest(dump_config(cfg).as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_default() {
        assert_eq!(parse_config_str("").unwrap(), Config::default());
    }

    #[test]
    fn negative_epochs_rejected() {
        let e = parse_config_str("[search]\nepochs = -1\n").unwrap_err();
        assert_eq!(e.message, "epochs must be ≥ 0");
        assert_eq!(e.line, Some(2));
        assert_eq!(e.key.as_deref(), Some("epochs"));
    }

    #[test]
    fn unknown_key_named() {
        let e = parse_config_str("[search]\nepochs = 3\nbogus = 1\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("bogus"));
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn dump_round_trip() {
        let mut cfg = Config::default();
        cfg.search.epochs = 7;
        cfg.operators.p_node = 0.125;
        cfg.data.path = Some("x.csv".into());
        let text = dump_config(&cfg);
        let back = parse_config_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(dump_config(&back), text);
    }

    #[test]
    fn probability_range_checked() {
        let e = parse_config_str("[operators]\np_tree = 1.5\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("p_tree"));
    }
}
