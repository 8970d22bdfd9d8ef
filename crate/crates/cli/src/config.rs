//! Flat `key = value` files, shared by `--config` and `--manifest`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, Result};

/// Keys accepted in a `--config` file.
pub const CONFIG_KEYS: &[&str] = &[
    "seed",
    "jobs",
    "max_iterations",
    "gradient_tolerance",
    "objective_tolerance",
    "memory",
    "rho_grid",
    "rho_lower",
    "rho_upper",
    "zero_replace",
    "n",
    "rho",
    "reps",
    "generator",
    "k_neighbors",
    "row_normalize",
    "trial_min",
    "trial_max",
    "models",
];

/// Environment variable consulted for the seed when neither the flag nor the
/// config file sets one.
pub const SEED_ENV: &str = "SARDIR_SEED";

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; a repeated key is an error.
pub fn parse_key_values(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected key = value", lineno + 1));
        };
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(format!("line {}: empty key", lineno + 1));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key {key:?}", lineno + 1));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let values = parse_key_values(text).map_err(CliError::Config)?;
        if let Some(key) = values.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(CliError::Config(format!("unknown key {key:?}")));
        }
        Ok(Self { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values
            .get(key)
            .map(|raw| {
                raw.parse()
                    .map_err(|_| CliError::Config(format!("{key} = {raw:?} is not valid")))
            })
            .transpose()
    }

    /// Flag value, then config value, then `default`.
    pub fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    /// Flag, config, then `SARDIR_SEED`, then 0.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(seed) = flag.or(self.get("seed")?) {
            return Ok(seed);
        }
        match std::env::var(SEED_ENV) {
            Ok(raw) => raw
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}={raw:?} is not a seed"))),
            Err(_) => Ok(0),
        }
    }
}
