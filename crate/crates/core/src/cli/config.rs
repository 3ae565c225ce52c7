//! Flat `key = value` experiment configs resolved against a per-command
//! schema of defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const DEFAULT_SEED: u64 = 1;

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {}: expected key = value, got {raw:?}",
                no + 1
            ))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", no + 1)));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Resolved parameters of one command run: schema defaults, then the config
/// file, then command-line flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn resolve(
        schema: &[(&'static str, String)],
        file: Option<&Path>,
        seed_flag: Option<u64>,
        flags: Vec<(&'static str, String)>,
    ) -> Result<Self> {
        let mut values: BTreeMap<String, String> = schema
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect();
        let mut seed = DEFAULT_SEED;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            for (key, value) in parse_config(&text)? {
                if key == "seed" {
                    seed = value
                        .parse()
                        .map_err(|_| Error::Config(format!("seed: cannot parse {value:?}")))?;
                } else if let Some(slot) = values.get_mut(&key) {
                    *slot = value;
                } else {
                    return Err(Error::Config(format!("unknown key {key:?}")));
                }
            }
        }
        for (key, value) in flags {
            *values
                .get_mut(key)
                .ok_or_else(|| Error::Config(format!("flag {key:?} missing from schema")))? = value;
        }
        Ok(ExperimentConfig {
            seed: seed_flag.unwrap_or(seed),
            values,
        })
    }

    pub fn raw(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("unknown key {key:?}")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key)?;
        raw.parse()
            .map_err(|_| Error::Config(format!("{key}: cannot parse {raw:?}")))
    }

    /// A value that must be set, e.g. an input path with an empty default.
    pub fn required(&self, key: &str) -> Result<&str> {
        match self.raw(key)? {
            "" => Err(Error::Config(format!("{key} is required"))),
            v => Ok(v),
        }
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }
}
