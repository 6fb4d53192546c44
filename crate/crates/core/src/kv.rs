//! Flat `key = value` text files, used for road models, rig parameters,
//! scene descriptions, and run configuration.
//!
//! One pair per line; `#` starts a comment; blank lines are ignored. Keys
//! may repeat (scene files use repeated `box` entries).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KvFile {
    pairs: Vec<(String, String)>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Format(format!("line {}: empty key", lineno + 1)));
            }
            pairs.push((key.to_string(), value.trim().to_string()));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    /// Last value for `key`, if present.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// All values recorded for `key`, in file order.
    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> {
        self.pairs
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::Format(format!("missing key `{key}`")))?;
        parse_f64(key, raw)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(raw) => parse_f64(key, raw),
            None => Ok(default),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::Format(format!("key `{key}`: unparsable integer {raw:?}"))),
            None => Ok(default),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::Format(format!("key `{key}`: unparsable integer {raw:?}"))),
            None => Ok(default),
        }
    }
}

pub fn parse_f64(key: &str, raw: &str) -> Result<f64> {
    let value: f64 = raw
        .parse()
        .map_err(|_| Error::Format(format!("key `{key}`: unparsable number {raw:?}")))?;
    if !value.is_finite() {
        return Err(Error::Format(format!("key `{key}`: {raw} is not finite")));
    }
    Ok(value)
}

/// Splits a comma-separated list into exactly `n` finite numbers.
pub fn parse_f64_list(what: &str, raw: &str, n: usize) -> Result<Vec<f64>> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != n {
        return Err(Error::Format(format!(
            "{what}: expected {n} comma-separated numbers, got {}",
            parts.len()
        )));
    }
    parts.iter().map(|p| parse_f64(what, p)).collect()
}
