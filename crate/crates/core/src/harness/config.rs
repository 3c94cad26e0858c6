//! Flat `key=value` experiment configuration.
//!
//! Config files are plain text: one `key = value` pair per line, `#` starts a
//! comment line, blank lines are ignored, and repeated keys keep the last
//! value so command-line overrides can simply be appended. Consumers read
//! typed values through `ConfigMap` and call [`ConfigMap::finish`] at the
//! end, which rejects keys nobody understood — silently ignored options hide
//! typos.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

/// A rejected configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub reason: String,
}

impl ConfigError {
    pub fn new(reason: impl Into<String>) -> Self {
        ConfigError { reason: reason.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.reason)
    }
}

impl std::error::Error for ConfigError {}

/// Parsed key=value pairs with typed, consumption-tracked accessors.
#[derive(Debug, Default)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
    touched: RefCell<BTreeSet<String>>,
}

impl ConfigMap {
    pub fn empty() -> Self {
        ConfigMap::default()
    }

    /// Parses config text; later assignments to the same key win.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (number, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::new(format!("line {}: expected key=value, got {line:?}", number + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::new(format!("line {}: empty key", number + 1)));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(ConfigMap { values, touched: RefCell::new(BTreeSet::new()) })
    }

    /// Sets (or overrides) one key, as a CLI flag would.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    /// Raw lookup; marks the key as understood.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.touched.borrow_mut().insert(key.to_string());
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::new(format!("missing required key `{key}`")))
    }

    /// Typed lookup of an optional key.
    pub fn get_parsed<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                ConfigError::new(format!("key `{key}`: cannot parse {raw:?}: {e}"))
            }),
        }
    }

    /// Typed lookup of a required key.
    pub fn require_parsed<T>(&self, key: &str) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.get_parsed(key)?
            .ok_or_else(|| ConfigError::new(format!("missing required key `{key}`")))
    }

    /// Typed lookup with a default.
    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        Ok(self.get_parsed(key)?.unwrap_or(default))
    }

    /// Comma-separated list lookup.
    pub fn get_list<T>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|part| {
                    part.trim().parse::<T>().map_err(|e| {
                        ConfigError::new(format!("key `{key}`: bad element {part:?}: {e}"))
                    })
                })
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }

    /// Fails when any parsed key was never read by an accessor.
    pub fn finish(&self) -> Result<(), ConfigError> {
        let touched = self.touched.borrow();
        let unknown: Vec<&str> = self
            .values
            .keys()
            .filter(|k| !touched.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::new(format!("unknown keys: {}", unknown.join(", "))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_last_wins() {
        let cfg = ConfigMap::parse(
            "# a comment\n\nbudget = 1000\nseed=1\nbudget = 2000\n  # indented comment\n",
        )
        .unwrap();
        assert_eq!(cfg.require_parsed::<u64>("budget").unwrap(), 2000);
        assert_eq!(cfg.require_parsed::<u64>("seed").unwrap(), 1);
        cfg.finish().unwrap();
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut cfg = ConfigMap::parse("k = 10\n").unwrap();
        cfg.set("k", "25");
        assert_eq!(cfg.require_parsed::<usize>("k").unwrap(), 25);
        cfg.finish().unwrap();
    }

    #[test]
    fn rejects_malformed_lines_and_unknown_keys() {
        let err = ConfigMap::parse("just words\n").unwrap_err();
        assert!(err.reason.contains("line 1"), "{err}");

        let cfg = ConfigMap::parse("known = 1\nmystery = 2\n").unwrap();
        let _ = cfg.get("known");
        let err = cfg.finish().unwrap_err();
        assert!(err.reason.contains("mystery"), "{err}");
    }

    #[test]
    fn typed_accessors_report_bad_values() {
        let cfg = ConfigMap::parse("n = not-a-number\nlist = 1, 2, x\n").unwrap();
        assert!(cfg.require_parsed::<u64>("n").is_err());
        assert!(cfg.get_list::<u64>("list").is_err());
        assert_eq!(cfg.get_or("absent", 7u32).unwrap(), 7);
    }
}
