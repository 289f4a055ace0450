//! `key = value` config files. Keys match long flag names; `-` and `_` are
//! interchangeable. Flags given on the command line win over the file.

use crate::UsageError;
use anyhow::Result;
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Default)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
    source: String,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl KeyValues {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(KeyValues::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(UsageError(format!("{source}:{}: expected key = value", no + 1)).into());
            };
            let key = normalize(k);
            if key.is_empty() {
                return Err(UsageError(format!("{source}:{}: empty key", no + 1)).into());
            }
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(UsageError(format!("{source}:{}: duplicate key {key}", no + 1)).into());
            }
        }
        Ok(KeyValues { map, source: source.to_string() })
    }

    /// Rejects keys outside `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        for key in self.map.keys() {
            if !known.iter().any(|k| normalize(k) == *key) {
                return Err(UsageError(format!("{}: unknown key {key}", self.source)).into());
            }
        }
        Ok(())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.get(&normalize(key)) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| UsageError(format!("{}: bad value {v:?} for {key}: {e}", self.source)).into()),
        }
    }

    /// Flag value if given, else the file's value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }
}
