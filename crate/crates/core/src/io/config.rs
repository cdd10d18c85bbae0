//! Plain-text `key = value` configuration files.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::{Error, Result};

/// Ordered key-value pairs; `#` starts a comment, blank lines are skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValueConfig {
    pub entries: BTreeMap<String, String>,
}

impl KeyValueConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("line {}: expected `key = value`", lineno + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::parse(format!("line {}: empty key", lineno + 1)));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::parse(format!("line {}: duplicate key {k:?}", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    /// Applies `key=value` overrides such as command-line `--set` flags.
    pub fn apply_overrides<'a>(&mut self, overrides: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("override {o:?} is not key=value")))?;
            self.entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Parses `key` if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::parse(format!("{key} = {v:?} is not a valid value")))
            })
            .transpose()
    }

    /// Overwrites `*slot` when `key` is present.
    pub fn read_into<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Fails on any key outside `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(Error::parse(format!("unknown configuration key {k:?}"))),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Writes every leaf of `value`'s JSON form as `prefix.path = json`.
/// Nested objects become dotted keys; arrays and scalars stay JSON text.
pub fn to_config<T: Serialize>(prefix: &str, value: &T, out: &mut KeyValueConfig) -> Result<()> {
    fn walk(key: String, v: &Value, out: &mut KeyValueConfig) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    walk(format!("{key}.{k}"), child, out);
                }
            }
            leaf => out.set(&key, leaf),
        }
    }
    walk(prefix.to_string(), &serde_json::to_value(value)?, out);
    Ok(())
}

/// Reads `prefix.*` keys over `defaults`. Values parse as JSON, falling back
/// to a bare string. Keys under `prefix` that `defaults` lacks are errors.
pub fn from_config<T: Serialize + DeserializeOwned>(config: &KeyValueConfig, prefix: &str, defaults: &T) -> Result<T> {
    let mut root = serde_json::to_value(defaults)?;
    let head = format!("{prefix}.");
    for (key, text) in &config.entries {
        let Some(path) = key.strip_prefix(&head) else {
            continue;
        };
        let mut node = &mut root;
        for part in path.split('.') {
            node = match node {
                Value::Object(map) => map
                    .get_mut(part)
                    .ok_or_else(|| Error::parse(format!("unknown configuration key {key:?}")))?,
                _ => return Err(Error::parse(format!("unknown configuration key {key:?}"))),
            };
        }
        if node.is_object() {
            return Err(Error::parse(format!("{key:?} names a section, not a value")));
        }
        *node = serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.clone()));
    }
    serde_json::from_value(root).map_err(|e| Error::parse(format!("{prefix}: {e}")))
}
