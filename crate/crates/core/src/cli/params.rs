//! `key = value` parameter files and flag/file/default resolution.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

/// Every key a parameter file may set.
pub const KNOWN_KEYS: &[&str] = &[
    "mu",
    "clock_rate",
    "length_km",
    "alpha",
    "efficiency",
    "dark_prob",
    "modulation_error",
    "f_ec",
    "multiphoton",
    "mu_lo",
    "mu_hi",
    "rel_tol",
    "grid_points",
    "lengths",
    "mu_decades",
    "mu_points_per_decade",
    "length",
    "n_pulses",
    "seed",
    "eve",
    "replacement_transmission",
    "sample_fraction",
    "margin_bits",
    "hash_seed",
];

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Parse a parameter file: one `key = value` per line, `#` starts a comment.
pub fn parse_params(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
        let key = normalize(k);
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(format!("line {}: unknown parameter '{}'", no + 1, key));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Resolves each parameter from its flag, then the file, then the default,
/// and records the effective value for the run manifest.
#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    effective: BTreeMap<String, Value>,
}

impl Resolver {
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Self {
            file,
            effective: BTreeMap::new(),
        }
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, String>
    where
        T: FromStr + Serialize,
        T::Err: std::fmt::Display,
    {
        let value = match self.optional(key, flag)? {
            Some(v) => v,
            None => {
                self.record(key, &default);
                default
            }
        };
        Ok(value)
    }

    /// Like [`Resolver::get`] without a default; absent values are not echoed.
    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, String>
    where
        T: FromStr + Serialize,
        T::Err: std::fmt::Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(
                    raw.parse::<T>()
                        .map_err(|e| format!("parameter {key} = '{raw}': {e}"))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.record(key, v);
        }
        Ok(value)
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, String>
    where
        T: FromStr + Serialize,
        T::Err: std::fmt::Display,
    {
        self.optional(key, flag)?
            .ok_or_else(|| format!("missing required parameter --{}", key.replace('_', "-")))
    }

    /// Echo a derived value (such as an optimised mu) in the manifest.
    pub fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        self.effective
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn effective(&self) -> &BTreeMap<String, Value> {
        &self.effective
    }
}
